#pragma once

#include <string>

#include "sealkit/tensor.hpp"

namespace sealkit {

/// Reads an 8-bit PNG or binary PPM (P6) into [1,3,H,W] floats in [0,1] via
/// v/255. Format picked by extension (.png / .ppm).
nd::Tensor<float> load_image(const std::string& path);

/// Writes [1,3,H,W] (or [N,..] first frame) as 8-bit PNG or PPM by extension;
/// values are clamped to [0,1] and rounded to the /255 grid.
void save_image(const std::string& path, const nd::Tensor<float>& image);

nd::Tensor<float> load_ppm(const std::string& path);
void save_ppm(const std::string& path, const nd::Tensor<float>& image);
nd::Tensor<float> load_png(const std::string& path);
void save_png(const std::string& path, const nd::Tensor<float>& image);

}  // namespace sealkit
