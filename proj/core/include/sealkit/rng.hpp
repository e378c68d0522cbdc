#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sealkit {

/// mt19937_64 wrapper with hand-rolled uniform/normal draws so sampled
/// sequences do not depend on the standard library's distribution
/// implementations. State round-trips through text for checkpointing.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// uniform in [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// uniform integer in [lo, hi] inclusive
  int64_t uniform_int(int64_t lo, int64_t hi);

  bool bernoulli(double p = 0.5) { return uniform() < p; }

  /// standard normal via Box-Muller
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::string serialize() const;
  static Rng deserialize(const std::string& s);

  bool operator==(const Rng& o) const { return eng_ == o.eng_ && have_spare_ == o.have_spare_; }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0;
};

}  // namespace sealkit
