#pragma once

#include "sealkit/tensor.hpp"

namespace sealkit {

/// 10*log10(1/MSE) for unit-range images; +inf for identical inputs.
template <class T>
double psnr(const nd::Tensor<T>& a, const nd::Tensor<T>& b);

/// Mean local SSIM on the Rec.601 luma, 11x11 Gaussian window (sigma 1.5),
/// C1=(0.01)^2, C2=(0.03)^2, valid windows only. Images must be >= 11x11.
template <class T>
double ssim(const nd::Tensor<T>& a, const nd::Tensor<T>& b);

}  // namespace sealkit
