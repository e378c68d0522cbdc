#include "sealkit/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace sealkit {

template <class T>
double psnr(const nd::Tensor<T>& a, const nd::Tensor<T>& b) {
  nd::check(a.shape() == b.shape(), "psnr: shape mismatch " + nd::shape_str(a.shape()) + " vs " +
                                        nd::shape_str(b.shape()));
  nd::check(a.numel() > 0, "psnr: empty input");
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  double mse = acc / static_cast<double>(a.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWin = 11;

const std::vector<double>& gauss_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWin);
    double sigma = 1.5, sum = 0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      v[i] = std::exp(-d * d / (2 * sigma * sigma));
      sum += v[i];
    }
    for (auto& x : v) x /= sum;
    return v;
  }();
  return w;
}

template <class T>
std::vector<double> to_luma(const nd::Tensor<T>& img, int64_t frame) {
  int64_t c = img.dim(1), h = img.dim(2), w = img.dim(3);
  std::vector<double> out(static_cast<size_t>(h * w));
  const T* p = img.data() + frame * c * h * w;
  if (c == 3) {
    for (int64_t i = 0; i < h * w; ++i)
      out[i] = 0.299 * p[i] + 0.587 * p[h * w + i] + 0.114 * p[2 * h * w + i];
  } else {
    for (int64_t i = 0; i < h * w; ++i) out[i] = p[i];
  }
  return out;
}

// separable valid-mode Gaussian filter: rows then columns
std::vector<double> filt(const std::vector<double>& in, int64_t h, int64_t w) {
  const auto& g = gauss_window();
  int64_t ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> tmp(static_cast<size_t>(h * ow)), out(static_cast<size_t>(oh * ow));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * in[y * w + x + k];
      tmp[y * ow + x] = s;
    }
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

template <class T>
double ssim(const nd::Tensor<T>& a, const nd::Tensor<T>& b) {
  nd::check(a.shape() == b.shape(), "ssim: shape mismatch");
  nd::check(a.rank() == 4, "ssim: rank-4 input required");
  nd::check(a.dim(2) >= kWin && a.dim(3) >= kWin, "ssim: image smaller than 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  int64_t n = a.dim(0), h = a.dim(2), w = a.dim(3);
  double total = 0;
  for (int64_t f = 0; f < n; ++f) {
    std::vector<double> x = to_luma(a, f), y = to_luma(b, f);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto mx = filt(x, h, w), my = filt(y, h, w);
    auto mxx = filt(xx, h, w), myy = filt(yy, h, w), mxy = filt(xy, h, w);
    double s = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      double vx = mxx[i] - mx[i] * mx[i];
      double vy = myy[i] - my[i] * my[i];
      double cxy = mxy[i] - mx[i] * my[i];
      s += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(n);
}

template double psnr<float>(const nd::Tensor<float>&, const nd::Tensor<float>&);
template double psnr<double>(const nd::Tensor<double>&, const nd::Tensor<double>&);
template double ssim<float>(const nd::Tensor<float>&, const nd::Tensor<float>&);
template double ssim<double>(const nd::Tensor<double>&, const nd::Tensor<double>&);

}  // namespace sealkit
