#pragma once

#include "sealkit/bit_message.hpp"
#include "sealkit/tensor.hpp"

namespace sealkit {

struct DetectionReport {
  BitMessage extracted_bits;
  int hamming = 0;
  double bit_accuracy = 0;
  double p_value = 1;
  double neg_log10_p = 0;
  bool detected = false;
};

/// Default decision threshold on -log10(p): at most one false positive per
/// 10^4 clean images under the uniform-message null.
constexpr double kDefaultDetectionTau = 4.0;

/// bit = 1 iff soft value >= 0.5 (ties round to 1).
BitMessage threshold(const nd::Tensor<float>& soft_message);
BitMessage threshold(const nd::Tensor<double>& soft_message);

int hamming_distance(const BitMessage& a, const BitMessage& b);

/// P[d_H(m, m') <= hamming] for m' uniform over {0,1}^n_bits: the exact
/// binomial tail sum_{k<=d} C(n,k) / 2^n. Exact integer arithmetic for
/// n <= 64, log-space summation beyond (stable to n=4096).
double p_value(int n_bits, int hamming);

/// -log10 of the exact tail; finite for all inputs, computed in log space so
/// n_bits=256, hamming=0 (p = 2^-256) stays representable.
double neg_log10_p(int n_bits, int hamming);

DetectionReport detect(const nd::Tensor<float>& soft_message, const BitMessage& reference,
                       double tau = kDefaultDetectionTau);

}  // namespace sealkit
