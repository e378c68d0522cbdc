#pragma once

#include <stdexcept>
#include <string>

namespace sealkit {

/// Bad invocation: malformed arguments, malformed config, wrong lengths.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

/// Unreadable or malformed external data (images, datasets, checkpoints).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

/// Non-finite values where finite ones are required (training aborts).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace sealkit
