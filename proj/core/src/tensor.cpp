#include "sealkit/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sealkit::nd {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) fail("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void fail(const std::string& msg) { throw std::invalid_argument("sealkit: " + msg); }

template <class T>
bool Tensor<T>::all_finite() const {
  for (const T& v : data_)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace sealkit::nd
