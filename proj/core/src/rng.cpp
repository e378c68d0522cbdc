#include "sealkit/rng.hpp"

#include <cmath>
#include <sstream>

#include "sealkit/errors.hpp"

namespace sealkit {

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (lo > hi) throw UsageError("uniform_int: empty range");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  // modulo bias is irrelevant at these span sizes
  return lo + static_cast<int64_t>(eng_() % span);
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0;
  while (u1 <= 1e-300) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << eng_ << " " << (have_spare_ ? 1 : 0) << " ";
  os.precision(17);
  os << spare_;
  return os.str();
}

Rng Rng::deserialize(const std::string& s) {
  Rng r;
  std::istringstream is(s);
  int spare_flag = 0;
  is >> r.eng_ >> spare_flag >> r.spare_;
  if (is.fail()) throw DataError("rng state: parse failure");
  r.have_spare_ = spare_flag != 0;
  return r;
}

}  // namespace sealkit
