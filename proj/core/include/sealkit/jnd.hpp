#pragma once

#include "sealkit/tensor.hpp"

namespace sealkit {

/// Parameters of the perceptual attenuation heatmap. The map is large where
/// pixel changes are unlikely to be noticed (edges, dark regions) and clipped
/// to [floor, 1] everywhere.
struct JndParams {
  double luminance_weight = 0.3;
  double texture_weight = 0.9;
  double floor = 0.1;
  double texture_gradient_scale = 0.25;  // gradient magnitude mapped to 1.0
};

/// Luminance term of the map as a function of the 5x5 box-mean luma.
/// Dark regions tolerate the most change, bright slightly more than mid.
double jnd_luminance_curve(double mean_luma);

/// image: [N,3,H,W] or [N,1,H,W] in [0,1]. Returns [N,1,H,W] with values in
/// [params.floor, 1]. Computed at the image's native resolution.
template <class T>
nd::Tensor<T> jnd_map(const nd::Tensor<T>& image, const JndParams& params = {});

}  // namespace sealkit
