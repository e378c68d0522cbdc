#include "sealkit/grad_check.hpp"

#include <cmath>

namespace sealkit::nd {

namespace {
// splitmix64; cheap deterministic weights independent of std lib distributions
inline uint64_t sm64(uint64_t& s) {
  uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline double unit(uint64_t& s) { return static_cast<double>(sm64(s) >> 11) * 0x1p-53; }
}  // namespace

template <class T>
double grad_check(const std::function<Var<T>(const std::vector<Var<T>>&)>& fn,
                  const std::vector<Tensor<T>>& points, T step, uint64_t weight_seed) {
  std::vector<Var<T>> vars;
  vars.reserve(points.size());
  for (const auto& p : points) vars.push_back(leaf(p, true));
  Var<T> y = fn(vars);
  check(y.numel() > 0, "grad_check: empty output");
  check(y.value().all_finite(), "grad_check: non-finite forward output");

  uint64_t ws = weight_seed;
  Tensor<T> weights(y.shape());
  for (int64_t i = 0; i < weights.numel(); ++i)
    weights[i] = static_cast<T>(0.5 + unit(ws));  // keep away from zero

  auto scalarize = [&](const Tensor<T>& out) {
    double acc = 0;
    for (int64_t i = 0; i < out.numel(); ++i)
      acc += static_cast<double>(out[i]) * static_cast<double>(weights[i]);
    return acc;
  };

  backward(y, weights);
  std::vector<Tensor<T>> analytic;
  for (auto& v : vars) analytic.push_back(v.grad());

  double max_rel = 0;
  for (size_t pi = 0; pi < points.size(); ++pi) {
    for (int64_t j = 0; j < points[pi].numel(); ++j) {
      auto eval_at = [&](T delta) {
        std::vector<Var<T>> probe;
        probe.reserve(points.size());
        for (size_t q = 0; q < points.size(); ++q) {
          Tensor<T> t = points[q];
          if (q == pi) t[j] += delta;
          probe.push_back(leaf(std::move(t), false));
        }
        return scalarize(fn(probe).value());
      };
      double num = (eval_at(step) - eval_at(-step)) / (2.0 * static_cast<double>(step));
      double ana = static_cast<double>(analytic[pi][j]);
      check(std::isfinite(num) && std::isfinite(ana), "grad_check: non-finite partial");
      double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

template double grad_check<float>(const std::function<Var<float>(const std::vector<Var<float>>&)>&,
                                  const std::vector<Tensor<float>>&, float, uint64_t);
template double grad_check<double>(
    const std::function<Var<double>(const std::vector<Var<double>>&)>&,
    const std::vector<Tensor<double>>&, double, uint64_t);

}  // namespace sealkit::nd
