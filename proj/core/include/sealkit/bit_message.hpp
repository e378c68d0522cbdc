#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sealkit/rng.hpp"

namespace sealkit {

/// Fixed-length binary payload. Hex wire form is most-significant bit first.
struct BitMessage {
  std::vector<uint8_t> bits;  // each 0 or 1

  int n_bits() const { return static_cast<int>(bits.size()); }

  static BitMessage random(int n_bits, Rng& rng);
  /// Parses exactly n_bits/4 hex characters; throws UsageError otherwise.
  static BitMessage from_hex(const std::string& hex, int n_bits);
  std::string to_hex() const;
  std::string to_bit_string() const;

  bool operator==(const BitMessage& o) const { return bits == o.bits; }
};

}  // namespace sealkit
