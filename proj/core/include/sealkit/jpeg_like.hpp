#pragma once

#include "sealkit/tensor.hpp"

namespace sealkit {

/// Deterministic JPEG-style lossy codec: BT.601 YCbCr, 4:2:0 subsampling
/// (2x2 mean), 8x8 DCT-II, Annex-K tables scaled by the standard quality law,
/// integer rounding, nearest chroma upsampling. Input [N,3,H,W] in [0,1];
/// images are reflect-padded to multiples of 16 internally and cropped back.
/// Not differentiable; wrap in straight_through for training.
template <class T>
nd::Tensor<T> jpeg_like(const nd::Tensor<T>& image, int quality);

}  // namespace sealkit
