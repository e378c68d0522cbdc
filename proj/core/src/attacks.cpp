#include "sealkit/attacks.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "sealkit/errors.hpp"
#include "sealkit/image_io.hpp"
#include "sealkit/jpeg_like.hpp"

namespace fs = std::filesystem;
namespace ops = sealkit::nd;

namespace sealkit {

using nd::Var;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Rec.601 luma and the YIQ-style chroma axes used for hue rotation.
const double kYiq[9] = {0.299,    0.587,     0.114,      0.595716, -0.274453,
                        -0.321263, 0.211456, -0.522591, 0.311135};

std::array<double, 9> inverse3(const double* m) {
  double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7], i = m[8];
  double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  nd::check(std::abs(det) > 1e-12, "singular 3x3 matrix");
  double inv = 1.0 / det;
  return {(e * i - f * h) * inv, (c * h - b * i) * inv, (b * f - c * e) * inv,
          (f * g - d * i) * inv, (a * i - c * g) * inv, (c * d - a * f) * inv,
          (d * h - e * g) * inv, (b * g - a * h) * inv, (a * e - b * d) * inv};
}

std::array<double, 9> mat3_mul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

std::array<double, 9> hue_matrix(double shift) {
  double th = 2.0 * kPi * shift;
  std::array<double, 9> rot = {1, 0, 0, 0, std::cos(th), -std::sin(th), 0, std::sin(th),
                               std::cos(th)};
  std::array<double, 9> a;
  std::copy(kYiq, kYiq + 9, a.begin());
  return mat3_mul(inverse3(kYiq), mat3_mul(rot, a));
}

// Solves the 8-unknown homography H with H * src_i ~ dst_i for 4 point pairs
// (Gaussian elimination with partial pivoting).
std::array<double, 9> homography_from_pairs(const double src[4][2], const double dst[4][2]) {
  double A[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    double sx = src[i][0], sy = src[i][1], dx = dst[i][0], dy = dst[i][1];
    double r0[9] = {sx, sy, 1, 0, 0, 0, -dx * sx, -dx * sy, dx};
    double r1[9] = {0, 0, 0, sx, sy, 1, -dy * sx, -dy * sy, dy};
    std::copy(r0, r0 + 9, A[2 * i]);
    std::copy(r1, r1 + 9, A[2 * i + 1]);
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    nd::check(std::abs(A[piv][col]) > 1e-12, "degenerate quadrilateral (non-invertible homography)");
    if (piv != col) std::swap_ranges(A[piv], A[piv] + 9, A[col]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      double f = A[r][col] / A[col][col];
      for (int k = col; k < 9; ++k) A[r][k] -= f * A[col][k];
    }
  }
  std::array<double, 9> h;
  for (int i = 0; i < 8; ++i) h[static_cast<size_t>(i)] = A[i][8] / A[i][i];
  h[8] = 1.0;
  return h;
}

std::array<double, 9> invert_homography(const std::array<double, 9>& h) {
  return inverse3(h.data());
}

int64_t round_dim(double v) { return std::max<int64_t>(1, std::llround(v)); }

template <class T>
Var<T> clamp01(const Var<T>& x) {
  return ops::clamp(x, T(0), T(1));
}

template <class T>
Var<T> luma_plane(const Var<T>& x) {
  return ops::channel_mix(x, {0.299, 0.587, 0.114}, 1);
}

template <class T>
Var<T> brightness_op(const Var<T>& x, double b) {
  return clamp01(ops::mul_scalar(x, static_cast<T>(b)));
}

template <class T>
Var<T> contrast_op(const Var<T>& x, double c) {
  Var<T> m = ops::mean_hw(luma_plane(x));  // [N,1] per-image mean luma
  Var<T> tiled = ops::tile_spatial(m, x.dim(2), x.dim(3));
  return clamp01(
      ops::add(ops::mul_scalar(x, static_cast<T>(c)), ops::mul_scalar(tiled, static_cast<T>(1.0 - c))));
}

template <class T>
Var<T> saturation_op(const Var<T>& x, double s) {
  // lerp toward luma: s*I + (1-s)*[L;L;L]
  std::vector<double> m(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m[static_cast<size_t>(r * 3 + c)] = (1.0 - s) * kYiq[c] + (r == c ? s : 0.0);
  return clamp01(ops::channel_mix(x, m, 3));
}

template <class T>
Var<T> grayscale_op(const Var<T>& x) {
  std::vector<double> m = {0.299, 0.587, 0.114, 0.299, 0.587, 0.114, 0.299, 0.587, 0.114};
  return ops::channel_mix(x, m, 3);
}

template <class T>
Var<T> hue_op(const Var<T>& x, double shift) {
  if (shift == 0.0) return x;
  auto m = hue_matrix(shift);
  return clamp01(ops::channel_mix(x, std::vector<double>(m.begin(), m.end()), 3));
}

double blur_sigma(int k) { return 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8; }

template <class T>
Var<T> gaussian_blur_op(const Var<T>& x, int k) {
  nd::check(k >= 3 && k % 2 == 1, "gaussian_blur: kernel must be odd and >= 3");
  int64_t c = x.dim(1);
  double sigma = blur_sigma(k);
  std::vector<double> w(static_cast<size_t>(k));
  double sum = 0;
  for (int i = 0; i < k; ++i) {
    double d = i - (k - 1) / 2.0;
    w[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    sum += w[static_cast<size_t>(i)];
  }
  for (auto& v : w) v /= sum;

  // depthwise via diagonal kernels
  nd::Tensor<T> kx({c, c, 1, k}), ky({c, c, k, 1});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int i = 0; i < k; ++i) {
      kx[(ch * c + ch) * k + i] = static_cast<T>(w[static_cast<size_t>(i)]);
      ky[(ch * c + ch) * k + i] = static_cast<T>(w[static_cast<size_t>(i)]);
    }
  int p = (k - 1) / 2;
  Var<T> h = ops::conv2d(ops::reflect_pad2d(x, 0, 0, p, p), ops::constant(std::move(kx)), Var<T>(),
                         1, 0);
  h = ops::conv2d(ops::reflect_pad2d(h, p, p, 0, 0), ops::constant(std::move(ky)), Var<T>(), 1, 0);
  return clamp01(h);
}

template <class T>
Var<T> rotate_op(const Var<T>& x, double degrees) {
  if (degrees == 0.0) return x;
  double q = degrees / 90.0;
  if (std::abs(q - std::round(q)) < 1e-9) {
    int k = static_cast<int>(std::llround(q)) % 4;
    if (k < 0) k += 4;
    if (k == 0) return x;
    return ops::rot90(x, k);
  }
  double th = degrees * kPi / 180.0;
  double cx = (x.dim(3) - 1) / 2.0, cy = (x.dim(2) - 1) / 2.0;
  double c = std::cos(th), s = std::sin(th);
  // output -> input: rotate by -theta about the centre
  std::array<double, 9> m = {c, s, cx - c * cx - s * cy, -s, c, cy + s * cx - c * cy, 0, 0, 1};
  return ops::warp_bilinear(x, m, x.dim(2), x.dim(3), T(0.5));
}

template <class T>
Var<T> crop_op(const Var<T>& x, double side_ratio, Rng* rng, bool random_pos) {
  nd::check(side_ratio > 0.0 && side_ratio <= 1.0, "crop: side ratio must be in (0,1]");
  int64_t h = x.dim(2), w = x.dim(3);
  int64_t ch = std::max<int64_t>(1, std::llround(side_ratio * h));
  int64_t cw = std::max<int64_t>(1, std::llround(side_ratio * w));
  int64_t y0, x0;
  if (random_pos) {
    y0 = rng->uniform_int(0, h - ch);
    x0 = rng->uniform_int(0, w - cw);
  } else {
    y0 = (h - ch) / 2;
    x0 = (w - cw) / 2;
  }
  return ops::crop2d(x, y0, x0, ch, cw);
}

template <class T>
Var<T> perspective_op(const Var<T>& x, double scale, Rng* rng, bool random_corners) {
  nd::check(scale >= 0.0 && scale < 1.0, "perspective: scale must be in [0,1)");
  if (scale == 0.0 && !random_corners) return x;
  double w = static_cast<double>(x.dim(3) - 1), h = static_cast<double>(x.dim(2) - 1);
  double src[4][2] = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  double dst[4][2];
  if (random_corners) {
    // corners displaced inward by up to scale * half extent
    double mx = scale * w / 2.0, my = scale * h / 2.0;
    double ux[4], uy[4];
    for (int i = 0; i < 4; ++i) {
      ux[i] = rng->uniform(0, mx);
      uy[i] = rng->uniform(0, my);
    }
    dst[0][0] = ux[0];
    dst[0][1] = uy[0];
    dst[1][0] = w - ux[1];
    dst[1][1] = uy[1];
    dst[2][0] = w - ux[2];
    dst[2][1] = h - uy[2];
    dst[3][0] = ux[3];
    dst[3][1] = h - uy[3];
  } else {
    // fixed asymmetric keystone at half the maximal displacement
    dst[0][0] = scale * w / 4.0;
    dst[0][1] = scale * h / 8.0;
    dst[1][0] = w - scale * w / 8.0;
    dst[1][1] = scale * h / 4.0;
    dst[2][0] = w - scale * w / 4.0;
    dst[2][1] = h - scale * h / 8.0;
    dst[3][0] = scale * w / 8.0;
    dst[3][1] = h - scale * h / 4.0;
  }
  // forward homography maps src -> dst; sampling needs output -> input
  auto fwd = homography_from_pairs(src, dst);
  return ops::warp_bilinear(x, invert_homography(fwd), x.dim(2), x.dim(3), T(0.5));
}

template <class T>
Var<T> resize_op(const Var<T>& x, double factor) {
  nd::check(factor > 0.0, "resize: factor must be positive");
  return ops::bilinear_resize(x, round_dim(factor * x.dim(2)), round_dim(factor * x.dim(3)));
}

template <class T>
Var<T> jpeg_op(const Var<T>& x, int quality) {
  return ops::straight_through<T>(
      x, [quality](const nd::Tensor<T>& t) { return jpeg_like(t, quality); });
}

std::string run_external_codec_dir(const std::string& in_dir, const std::string& codec, int crf);

template <class T>
Var<T> video_codec_op(const Var<T>& x, const std::string& codec, int crf) {
  auto fn = [codec, crf](const nd::Tensor<T>& t) -> nd::Tensor<T> {
    char tmpl[] = "/tmp/sealkit_codec_XXXXXX";
    char* dir = mkdtemp(tmpl);
    if (!dir) throw DataError("cannot create temp dir for external codec");
    fs::path in = fs::path(dir) / "in";
    fs::create_directories(in);
    int64_t t_frames = t.dim(0), h = t.dim(2), w = t.dim(3);
    for (int64_t f = 0; f < t_frames; ++f) {
      nd::Tensor<float> frame({1, 3, h, w});
      for (int64_t i = 0; i < 3 * h * w; ++i)
        frame[i] = static_cast<float>(t[f * 3 * h * w + i]);
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%05lld.ppm", static_cast<long long>(f));
      save_ppm((in / name).string(), frame);
    }
    std::string out_dir = run_external_codec_dir(in.string(), codec, crf);
    nd::Tensor<T> out(t.shape());
    for (int64_t f = 0; f < t_frames; ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%05lld.ppm", static_cast<long long>(f));
      nd::Tensor<float> frame = load_ppm((fs::path(out_dir) / name).string());
      nd::check(frame.dim(2) == h && frame.dim(3) == w,
                "external codec changed frame dimensions");
      for (int64_t i = 0; i < 3 * h * w; ++i)
        out[f * 3 * h * w + i] = static_cast<T>(frame[i]);
    }
    fs::remove_all(dir);
    return out;
  };
  return ops::straight_through<T>(x, fn);
}

std::string run_external_codec_dir(const std::string& in_dir, const std::string& codec, int crf) {
  const char* enc = std::getenv(kExternalEncoderEnv);
  if (!enc || !*enc)
    throw DataError(std::string("external codec requested but ") + kExternalEncoderEnv +
                    " is not set");
  fs::path out = fs::path(in_dir).parent_path() / "out";
  fs::create_directories(out);
  std::ostringstream cmd;
  cmd << "'" << enc << "' '" << in_dir << "' '" << out.string() << "' '" << codec << "' " << crf;
  int rc = std::system(cmd.str().c_str());
  if (rc != 0) throw DataError("external encoder failed with status " + std::to_string(rc));
  return out.string();
}

}  // namespace

bool external_encoder_available() {
  const char* enc = std::getenv(kExternalEncoderEnv);
  return enc && *enc;
}

bool AttackSpec::is_external() const {
  if (kind == AttackKind::video_codec) return true;
  for (const auto& c : children)
    if (c.is_external()) return true;
  return false;
}

namespace {
std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}
}  // namespace

std::string AttackSpec::id() const {
  switch (kind) {
    case AttackKind::identity: return "identity";
    case AttackKind::brightness: return "brightness_" + fmt_num(strength);
    case AttackKind::contrast: return "contrast_" + fmt_num(strength);
    case AttackKind::saturation: return "saturation_" + fmt_num(strength);
    case AttackKind::hue: return "hue_" + fmt_num(strength);
    case AttackKind::grayscale: return "grayscale";
    case AttackKind::gaussian_blur: return "gaussian_blur_" + std::to_string(int_param);
    case AttackKind::horizontal_flip: return "horizontal_flip";
    case AttackKind::rotate: return "rotate_" + fmt_num(strength);
    case AttackKind::crop: return "crop_" + fmt_num(strength);
    case AttackKind::perspective: return "perspective_" + fmt_num(strength);
    case AttackKind::resize: return "resize_" + fmt_num(strength);
    case AttackKind::jpeg_like: return "jpeg_" + std::to_string(int_param);
    case AttackKind::video_codec: return codec + "_" + std::to_string(int_param);
    case AttackKind::combined: {
      std::string s = "combined";
      for (const auto& c : children) s += "+" + c.id();
      return s;
    }
  }
  return "unknown";
}

AttackSpec AttackSpec::identity_() { return {}; }
AttackSpec AttackSpec::brightness(double f) {
  AttackSpec s;
  s.kind = AttackKind::brightness;
  s.strength = f;
  return s;
}
AttackSpec AttackSpec::contrast(double f) {
  AttackSpec s;
  s.kind = AttackKind::contrast;
  s.strength = f;
  return s;
}
AttackSpec AttackSpec::saturation(double f) {
  AttackSpec s;
  s.kind = AttackKind::saturation;
  s.strength = f;
  return s;
}
AttackSpec AttackSpec::hue(double sh) {
  AttackSpec s;
  s.kind = AttackKind::hue;
  s.strength = sh;
  return s;
}
AttackSpec AttackSpec::grayscale() {
  AttackSpec s;
  s.kind = AttackKind::grayscale;
  return s;
}
AttackSpec AttackSpec::gaussian_blur(int k) {
  AttackSpec s;
  s.kind = AttackKind::gaussian_blur;
  s.int_param = k;
  return s;
}
AttackSpec AttackSpec::horizontal_flip() {
  AttackSpec s;
  s.kind = AttackKind::horizontal_flip;
  return s;
}
AttackSpec AttackSpec::rotate(double deg) {
  AttackSpec s;
  s.kind = AttackKind::rotate;
  s.strength = deg;
  return s;
}
AttackSpec AttackSpec::crop(double r) {
  AttackSpec s;
  s.kind = AttackKind::crop;
  s.strength = r;
  return s;
}
AttackSpec AttackSpec::perspective(double sc) {
  AttackSpec s;
  s.kind = AttackKind::perspective;
  s.strength = sc;
  return s;
}
AttackSpec AttackSpec::resize(double f) {
  AttackSpec s;
  s.kind = AttackKind::resize;
  s.strength = f;
  return s;
}
AttackSpec AttackSpec::jpeg(int q) {
  AttackSpec s;
  s.kind = AttackKind::jpeg_like;
  s.int_param = q;
  return s;
}
AttackSpec AttackSpec::video_codec_(const std::string& codec, int crf) {
  AttackSpec s;
  s.kind = AttackKind::video_codec;
  s.codec = codec;
  s.int_param = crf;
  return s;
}
AttackSpec AttackSpec::combined(std::vector<AttackSpec> steps) {
  AttackSpec s;
  s.kind = AttackKind::combined;
  s.children = std::move(steps);
  return s;
}

template <class T>
Var<T> apply_attack(const AttackSpec& spec, const Var<T>& image, Rng* rng) {
  nd::check(image.value().rank() == 4 && image.dim(1) == 3,
            "apply_attack: [N,3,H,W] input required");
  bool train = spec.mode == AttackMode::train_random;
  if (train) nd::check(rng != nullptr, "apply_attack: train_random mode requires an rng");
  auto pick = [&](double fixed) { return train ? rng->uniform(spec.lo, spec.hi) : fixed; };

  switch (spec.kind) {
    case AttackKind::identity:
      return image;
    case AttackKind::brightness:
      return brightness_op(image, pick(spec.strength));
    case AttackKind::contrast:
      return contrast_op(image, pick(spec.strength));
    case AttackKind::saturation:
      return saturation_op(image, pick(spec.strength));
    case AttackKind::hue:
      return hue_op(image, pick(spec.strength));
    case AttackKind::grayscale:
      return grayscale_op(image);
    case AttackKind::gaussian_blur: {
      int k = spec.int_param;
      if (train) {
        int64_t kmax = static_cast<int64_t>(spec.hi), kmin = static_cast<int64_t>(spec.lo);
        k = static_cast<int>(rng->uniform_int(kmin / 2, kmax / 2) * 2 + 1);
      }
      return gaussian_blur_op(image, k);
    }
    case AttackKind::horizontal_flip:
      return ops::flip_w(image);
    case AttackKind::rotate:
      return rotate_op(image, pick(spec.strength));
    case AttackKind::crop:
      return crop_op(image, train ? rng->uniform(spec.lo, spec.hi) : spec.strength, rng, train);
    case AttackKind::perspective:
      return perspective_op(image, train ? rng->uniform(spec.lo, spec.hi) : spec.strength, rng,
                            train);
    case AttackKind::resize:
      return resize_op(image, pick(spec.strength));
    case AttackKind::jpeg_like: {
      int q = spec.int_param;
      if (train) q = static_cast<int>(rng->uniform_int(static_cast<int64_t>(spec.lo),
                                                       static_cast<int64_t>(spec.hi)));
      return jpeg_op(image, q);
    }
    case AttackKind::video_codec:
      return video_codec_op(image, spec.codec, spec.int_param);
    case AttackKind::combined: {
      Var<T> x = image;
      for (const auto& c : spec.children) x = apply_attack(c, x, rng);
      return x;
    }
  }
  nd::fail("apply_attack: unknown attack kind");
}

template <class T>
nd::Tensor<T> apply_attack_eval(const AttackSpec& spec, const nd::Tensor<T>& image) {
  return apply_attack<T>(spec, ops::constant(image), nullptr).value();
}

std::vector<AttackSuite> build_suites(SuiteKind kind) {
  std::vector<AttackSuite> out;
  auto S = AttackSpec::identity_;
  (void)S;
  out.push_back({"identity", {AttackSpec::identity_()}});

  if (kind == SuiteKind::image) {
    AttackSuite vm{"valuemetric", {}};
    for (double b : {0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0})
      vm.specs.push_back(AttackSpec::brightness(b));
    for (double c : {0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0})
      vm.specs.push_back(AttackSpec::contrast(c));
    for (double h : {-0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5})
      vm.specs.push_back(AttackSpec::hue(h));
    vm.specs.push_back(AttackSpec::grayscale());
    for (int k : {3, 5, 9, 13, 17}) vm.specs.push_back(AttackSpec::gaussian_blur(k));
    out.push_back(std::move(vm));

    AttackSuite cp{"compression", {}};
    for (int q : {40, 50, 60, 70, 80, 90}) cp.specs.push_back(AttackSpec::jpeg(q));
    out.push_back(std::move(cp));

    AttackSuite ge{"geometric", {}};
    ge.specs.push_back(AttackSpec::horizontal_flip());
    for (double a : {5.0, 10.0, 30.0, 45.0, 90.0}) ge.specs.push_back(AttackSpec::rotate(a));
    for (double r : {0.32, 0.45, 0.55, 0.63, 0.71, 0.77, 0.84, 0.89, 0.95, 1.0})
      ge.specs.push_back(AttackSpec::crop(r));
    for (double p : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8})
      ge.specs.push_back(AttackSpec::perspective(p));
    out.push_back(std::move(ge));

    AttackSuite cb{"combined", {}};
    for (int q : {40, 60, 80})
      cb.specs.push_back(AttackSpec::combined(
          {AttackSpec::jpeg(q), AttackSpec::crop(0.71), AttackSpec::brightness(0.5)}));
    out.push_back(std::move(cb));
  } else {
    AttackSuite vm{"valuemetric", {}};
    for (double b : {0.5, 1.5}) vm.specs.push_back(AttackSpec::brightness(b));
    for (double c : {0.5, 1.5}) vm.specs.push_back(AttackSpec::contrast(c));
    for (double s : {0.5, 1.5}) vm.specs.push_back(AttackSpec::saturation(s));
    vm.specs.push_back(AttackSpec::hue(0.25));
    vm.specs.push_back(AttackSpec::grayscale());
    vm.specs.push_back(AttackSpec::gaussian_blur(9));
    out.push_back(std::move(vm));

    AttackSuite cp{"compression", {}};
    cp.specs.push_back(AttackSpec::jpeg(40));
    for (const char* codec : {"h264", "h264rgb", "h265"})
      for (int crf : {23, 30, 40, 50}) cp.specs.push_back(AttackSpec::video_codec_(codec, crf));
    out.push_back(std::move(cp));

    AttackSuite ge{"geometric", {}};
    ge.specs.push_back(AttackSpec::horizontal_flip());
    for (double a : {10.0, 90.0}) ge.specs.push_back(AttackSpec::rotate(a));
    for (double r : {0.55, 0.71}) ge.specs.push_back(AttackSpec::crop(r));
    ge.specs.push_back(AttackSpec::perspective(0.5));
    out.push_back(std::move(ge));

    AttackSuite cb{"combined", {}};
    for (int crf : {23, 30, 40, 50})
      cb.specs.push_back(AttackSpec::combined({AttackSpec::video_codec_("h264", crf),
                                               AttackSpec::crop(0.71),
                                               AttackSpec::brightness(0.5)}));
    out.push_back(std::move(cb));
  }
  return out;
}

template Var<float> apply_attack<float>(const AttackSpec&, const Var<float>&, Rng*);
template Var<double> apply_attack<double>(const AttackSpec&, const Var<double>&, Rng*);
template nd::Tensor<float> apply_attack_eval<float>(const AttackSpec&, const nd::Tensor<float>&);
template nd::Tensor<double> apply_attack_eval<double>(const AttackSpec&,
                                                      const nd::Tensor<double>&);

}  // namespace sealkit
