#include "sealkit/detect.hpp"

#include <cmath>
#include <mutex>
#include <vector>

#include "sealkit/errors.hpp"

namespace sealkit {

BitMessage BitMessage::random(int n_bits, Rng& rng) {
  BitMessage m;
  m.bits.resize(static_cast<size_t>(n_bits));
  for (auto& b : m.bits) b = rng.bernoulli() ? 1 : 0;
  return m;
}

BitMessage BitMessage::from_hex(const std::string& hex, int n_bits) {
  if (n_bits % 4 != 0) throw UsageError("hex messages require n_bits divisible by 4");
  if (static_cast<int>(hex.size()) != n_bits / 4)
    throw UsageError("message hex must be exactly " + std::to_string(n_bits / 4) +
                     " characters for n_bits=" + std::to_string(n_bits) + ", got " +
                     std::to_string(hex.size()));
  BitMessage m;
  m.bits.reserve(static_cast<size_t>(n_bits));
  for (char c : hex) {
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      v = c - 'A' + 10;
    else
      throw UsageError(std::string("invalid hex character '") + c + "' in message");
    for (int i = 3; i >= 0; --i) m.bits.push_back(static_cast<uint8_t>((v >> i) & 1));
  }
  return m;
}

std::string BitMessage::to_hex() const {
  if (bits.size() % 4 != 0) throw UsageError("hex form requires n_bits divisible by 4");
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (size_t i = 0; i < bits.size(); i += 4) {
    int v = (bits[i] << 3) | (bits[i + 1] << 2) | (bits[i + 2] << 1) | bits[i + 3];
    out.push_back(digits[v]);
  }
  return out;
}

std::string BitMessage::to_bit_string() const {
  std::string s;
  s.reserve(bits.size());
  for (uint8_t b : bits) s.push_back(b ? '1' : '0');
  return s;
}

namespace {

template <class T>
BitMessage threshold_impl(const nd::Tensor<T>& soft) {
  BitMessage m;
  m.bits.resize(static_cast<size_t>(soft.numel()));
  for (int64_t i = 0; i < soft.numel(); ++i) m.bits[static_cast<size_t>(i)] = soft[i] >= T(0.5);
  return m;
}

// log C(n, k) table, grown on demand; read-mostly behind a mutex on growth.
class LogChooseTable {
 public:
  double log_choose(int n, int k) {
    std::lock_guard<std::mutex> lk(mu_);
    if (n >= static_cast<int>(logfact_.size())) {
      size_t old = logfact_.size();
      logfact_.resize(static_cast<size_t>(n) + 1);
      if (old == 0) {
        logfact_[0] = 0;
        old = 1;
      }
      for (size_t i = old; i < logfact_.size(); ++i)
        logfact_[i] = logfact_[i - 1] + std::log(static_cast<double>(i));
    }
    return logfact_[static_cast<size_t>(n)] - logfact_[static_cast<size_t>(k)] -
           logfact_[static_cast<size_t>(n - k)];
  }

 private:
  std::mutex mu_;
  std::vector<double> logfact_;
};

LogChooseTable g_table;

constexpr double kLn2 = 0.6931471805599453;
constexpr double kLn10 = 2.302585092994046;

// log of sum_{k<=d} C(n,k) via log-sum-exp
double log_tail_count(int n, int d) {
  double mx = -1e300;
  for (int k = 0; k <= d; ++k) mx = std::max(mx, g_table.log_choose(n, k));
  double acc = 0;
  for (int k = 0; k <= d; ++k) acc += std::exp(g_table.log_choose(n, k) - mx);
  return mx + std::log(acc);
}

void check_range(int n, int d) {
  if (n < 1) throw UsageError("p_value: n_bits must be >= 1");
  if (d < 0 || d > n) throw UsageError("p_value: hamming out of range [0, n_bits]");
}

// exact tail count for n <= 64 fits unsigned __int128 (total 2^64)
unsigned __int128 exact_tail_count(int n, int d) {
  unsigned __int128 acc = 0, c = 1;  // C(n,0)
  for (int k = 0; k <= d; ++k) {
    acc += c;
    c = c * static_cast<unsigned>(n - k) / static_cast<unsigned>(k + 1);
  }
  return acc;
}

}  // namespace

BitMessage threshold(const nd::Tensor<float>& s) { return threshold_impl(s); }
BitMessage threshold(const nd::Tensor<double>& s) { return threshold_impl(s); }

int hamming_distance(const BitMessage& a, const BitMessage& b) {
  if (a.bits.size() != b.bits.size()) throw UsageError("hamming: message lengths differ");
  int d = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) d += a.bits[i] != b.bits[i];
  return d;
}

double p_value(int n, int d) {
  check_range(n, d);
  if (d == n) return 1.0;
  if (n <= 64) {
    long double count = static_cast<long double>(exact_tail_count(n, d));
    long double denom = std::pow(2.0L, static_cast<long double>(n));
    return static_cast<double>(count / denom);
  }
  return std::min(1.0, std::exp(log_tail_count(n, d) - n * kLn2));
}

double neg_log10_p(int n, int d) {
  check_range(n, d);
  if (d == n) return 0.0;
  double log_p = log_tail_count(n, d) - n * kLn2;
  return std::max(0.0, -log_p / kLn10);
}

DetectionReport detect(const nd::Tensor<float>& soft, const BitMessage& reference, double tau) {
  if (soft.numel() != static_cast<int64_t>(reference.bits.size()))
    throw UsageError("detect: soft message length " + std::to_string(soft.numel()) +
                     " does not match reference " + std::to_string(reference.bits.size()));
  DetectionReport r;
  r.extracted_bits = threshold(soft);
  r.hamming = hamming_distance(r.extracted_bits, reference);
  int n = reference.n_bits();
  r.bit_accuracy = 1.0 - static_cast<double>(r.hamming) / static_cast<double>(n);
  r.p_value = p_value(n, r.hamming);
  r.neg_log10_p = neg_log10_p(n, r.hamming);
  r.detected = r.neg_log10_p >= tau;
  return r;
}

}  // namespace sealkit
