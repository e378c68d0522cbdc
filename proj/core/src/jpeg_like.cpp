#include "sealkit/jpeg_like.hpp"

#include <cmath>
#include <vector>

#include "sealkit/errors.hpp"

namespace sealkit {

namespace {

const int kLumaQ[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

const int kChromaQ[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                          24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

// orthonormal 8-point DCT-II basis
struct DctBasis {
  double c[8][8];
  DctBasis() {
    const double pi = 3.14159265358979323846;
    for (int u = 0; u < 8; ++u) {
      double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[u][x] = a * std::cos((2 * x + 1) * u * pi / 16.0);
    }
  }
};
const DctBasis kDct;

void scaled_table(const int* base, int quality, double* out) {
  double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  for (int i = 0; i < 64; ++i) {
    int q = static_cast<int>(std::floor((base[i] * scale + 50.0) / 100.0));
    out[i] = static_cast<double>(std::min(255, std::max(1, q)));
  }
}

// in-place quantized DCT round trip of one 8x8 block of level-shifted samples
void codec_block(double* blk, const double* qt) {
  double f[64], tmp[64];
  // F = C * blk * C^T
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += kDct.c[u][k] * blk[k * 8 + x];
      tmp[u * 8 + x] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += tmp[u * 8 + k] * kDct.c[v][k];
      f[u * 8 + v] = std::round(s / qt[u * 8 + v]) * qt[u * 8 + v];
    }
  // blk = C^T * F * C
  for (int x = 0; x < 8; ++x)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += kDct.c[k][x] * f[k * 8 + v];
      tmp[x * 8 + v] = s;
    }
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += tmp[x * 8 + k] * kDct.c[k][y];
      blk[x * 8 + y] = s;
    }
}

void codec_plane(std::vector<double>& plane, int64_t h, int64_t w, const double* qt) {
  for (int64_t by = 0; by < h; by += 8)
    for (int64_t bx = 0; bx < w; bx += 8) {
      double blk[64];
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) blk[y * 8 + x] = plane[(by + y) * w + bx + x];
      codec_block(blk, qt);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) plane[(by + y) * w + bx + x] = blk[y * 8 + x];
    }
}

inline int64_t ridx(int64_t i, int64_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

}  // namespace

template <class T>
nd::Tensor<T> jpeg_like(const nd::Tensor<T>& image, int quality) {
  nd::check(image.rank() == 4 && image.dim(1) == 3, "jpeg_like: [N,3,H,W] input required");
  nd::check(quality >= 1 && quality <= 100,
            "jpeg_like: quality must be in [1,100], got " + std::to_string(quality));
  int64_t n = image.dim(0), h = image.dim(2), w = image.dim(3);
  int64_t ph = (h + 15) / 16 * 16, pw = (w + 15) / 16 * 16;

  double qy[64], qc[64];
  scaled_table(kLumaQ, quality, qy);
  scaled_table(kChromaQ, quality, qc);

  nd::Tensor<T> out(image.shape());
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < n; ++b) {
    const T* r = image.data() + b * 3 * h * w;
    const T* g = r + h * w;
    const T* bl = r + 2 * h * w;

    std::vector<double> Y(static_cast<size_t>(ph * pw));
    std::vector<double> Cb(static_cast<size_t>(ph / 2 * pw / 2)), Cr(Cb.size());
    std::vector<double> cbf(static_cast<size_t>(ph * pw)), crf(cbf.size());
    for (int64_t y = 0; y < ph; ++y) {
      int64_t sy = ridx(y, h);
      for (int64_t x = 0; x < pw; ++x) {
        int64_t sx = ridx(x, w);
        double R = 255.0 * r[sy * w + sx], G = 255.0 * g[sy * w + sx],
               B = 255.0 * bl[sy * w + sx];
        Y[y * pw + x] = 0.299 * R + 0.587 * G + 0.114 * B - 128.0;
        cbf[y * pw + x] = -0.168735892 * R - 0.331264108 * G + 0.5 * B;
        crf[y * pw + x] = 0.5 * R - 0.418687589 * G - 0.081312411 * B;
      }
    }
    for (int64_t y = 0; y < ph / 2; ++y)
      for (int64_t x = 0; x < pw / 2; ++x) {
        Cb[y * (pw / 2) + x] = 0.25 * (cbf[(2 * y) * pw + 2 * x] + cbf[(2 * y) * pw + 2 * x + 1] +
                                       cbf[(2 * y + 1) * pw + 2 * x] +
                                       cbf[(2 * y + 1) * pw + 2 * x + 1]);
        Cr[y * (pw / 2) + x] = 0.25 * (crf[(2 * y) * pw + 2 * x] + crf[(2 * y) * pw + 2 * x + 1] +
                                       crf[(2 * y + 1) * pw + 2 * x] +
                                       crf[(2 * y + 1) * pw + 2 * x + 1]);
      }

    codec_plane(Y, ph, pw, qy);
    codec_plane(Cb, ph / 2, pw / 2, qc);
    codec_plane(Cr, ph / 2, pw / 2, qc);

    T* ro = out.data() + b * 3 * h * w;
    T* go = ro + h * w;
    T* bo = ro + 2 * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double yy = Y[y * pw + x] + 128.0;
        double cb = Cb[(y / 2) * (pw / 2) + x / 2];  // nearest upsample
        double cr = Cr[(y / 2) * (pw / 2) + x / 2];
        double R = yy + 1.402 * cr;
        double G = yy - 0.344136286 * cb - 0.714136286 * cr;
        double B = yy + 1.772 * cb;
        auto clamp01 = [](double v) { return v < 0 ? 0.0 : (v > 255.0 ? 255.0 : v); };
        ro[y * w + x] = static_cast<T>(clamp01(R) / 255.0);
        go[y * w + x] = static_cast<T>(clamp01(G) / 255.0);
        bo[y * w + x] = static_cast<T>(clamp01(B) / 255.0);
      }
  }
  return out;
}

template nd::Tensor<float> jpeg_like<float>(const nd::Tensor<float>&, int);
template nd::Tensor<double> jpeg_like<double>(const nd::Tensor<double>&, int);

}  // namespace sealkit
