#pragma once

#include <functional>

#include "sealkit/autodiff.hpp"

namespace sealkit::nd {

/// Finite-difference check of an op (or op composition) at a point.
///
/// The output is reduced to a scalar s = sum(f(x) * R) with fixed pseudo-random
/// weights R, analytic gradients come from one backward pass, and numeric
/// partials from central differences with the given step. Returns the maximum
/// over all partials of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Sample points away from kinks (relu/clamp boundaries).
template <class T>
double grad_check(const std::function<Var<T>(const std::vector<Var<T>>&)>& fn,
                  const std::vector<Tensor<T>>& points, T step, uint64_t weight_seed = 0x9e3779b9);

}  // namespace sealkit::nd
