#include "sealkit/jnd.hpp"

#include <cmath>

#include "sealkit/errors.hpp"

namespace sealkit {

namespace {

// reflect-101 border
inline int64_t ridx(int64_t i, int64_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

// 5x5 directional gradient masks (vertical, two diagonals, horizontal),
// applied as correlation with weight 1/16.
const int kGrad[4][5][5] = {
    {{0, 0, 0, 0, 0}, {1, 3, 8, 3, 1}, {0, 0, 0, 0, 0}, {-1, -3, -8, -3, -1}, {0, 0, 0, 0, 0}},
    {{0, 0, 1, 0, 0}, {0, 8, 3, 0, 0}, {1, 3, 0, -3, -1}, {0, 0, -3, -8, 0}, {0, 0, -1, 0, 0}},
    {{0, 0, 1, 0, 0}, {0, 0, 3, 8, 0}, {-1, -3, 0, 3, 1}, {0, -8, -3, 0, 0}, {0, 0, -1, 0, 0}},
    {{0, 1, 0, -1, 0}, {0, 3, 0, -3, 0}, {0, 8, 0, -8, 0}, {0, 3, 0, -3, 0}, {0, 1, 0, -1, 0}}};

}  // namespace

double jnd_luminance_curve(double y) {
  if (y <= 0.3) return 1.0 - std::sqrt(y / 0.3);
  return 0.2 * (y - 0.3) / 0.7;
}

template <class T>
nd::Tensor<T> jnd_map(const nd::Tensor<T>& image, const JndParams& p) {
  nd::check(image.rank() == 4, "jnd_map: rank-4 image required");
  nd::check(image.dim(1) == 3 || image.dim(1) == 1, "jnd_map: 1 or 3 channels required");
  if (!image.all_finite()) throw NumericError("jnd_map: non-finite input");
  int64_t n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  nd::check(h >= 2 && w >= 2, "jnd_map: image too small");

  nd::Tensor<T> out({n, 1, h, w});
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < n; ++b) {
    std::vector<double> luma(static_cast<size_t>(h * w));
    const T* img = image.data() + b * c * h * w;
    if (c == 3) {
      const T* r = img;
      const T* g = img + h * w;
      const T* bl = img + 2 * h * w;
      for (int64_t i = 0; i < h * w; ++i)
        luma[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * bl[i];
    } else {
      for (int64_t i = 0; i < h * w; ++i) luma[i] = img[i];
    }
    T* dst = out.data() + b * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double box = 0;
        double grads[4] = {0, 0, 0, 0};
        for (int dy = -2; dy <= 2; ++dy) {
          int64_t yy = ridx(y + dy, h);
          for (int dx = -2; dx <= 2; ++dx) {
            double v = luma[yy * w + ridx(x + dx, w)];
            box += v;
            for (int k = 0; k < 4; ++k) grads[k] += kGrad[k][dy + 2][dx + 2] * v;
          }
        }
        double lum = jnd_luminance_curve(box / 25.0);
        double g = 0;
        for (int k = 0; k < 4; ++k) g = std::max(g, std::abs(grads[k]) / 16.0);
        double tex = std::min(1.0, g / p.texture_gradient_scale);
        double v = p.floor + p.luminance_weight * lum + p.texture_weight * tex;
        dst[y * w + x] = static_cast<T>(std::min(1.0, std::max(p.floor, v)));
      }
  }
  return out;
}

template nd::Tensor<float> jnd_map<float>(const nd::Tensor<float>&, const JndParams&);
template nd::Tensor<double> jnd_map<double>(const nd::Tensor<double>&, const JndParams&);

}  // namespace sealkit
