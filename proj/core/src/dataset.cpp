#include "sealkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "sealkit/errors.hpp"
#include "sealkit/image_io.hpp"

namespace fs = std::filesystem;

namespace sealkit {

std::vector<std::string> list_images(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no .png/.ppm images in dataset directory: " + dir);
  return out;
}

nd::Tensor<float> synth_image(int64_t h, int64_t w, Rng& rng) {
  const double pi = 3.14159265358979323846;
  std::vector<double> img(static_cast<size_t>(3 * h * w));

  // base gradient between two random colors
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.1, 0.9);
    c1[c] = rng.uniform(0.1, 0.9);
  }
  double gdir = rng.uniform(0, 2 * pi);
  double gx = std::cos(gdir), gy = std::sin(gdir);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double t = 0.5 + 0.5 * (gx * (2.0 * x / w - 1.0) + gy * (2.0 * y / h - 1.0));
      for (int c = 0; c < 3; ++c) img[(c * h + y) * w + x] = c0[c] + t * (c1[c] - c0[c]);
    }

  // oriented gratings
  int n_gratings = static_cast<int>(rng.uniform_int(2, 4));
  for (int k = 0; k < n_gratings; ++k) {
    double th = rng.uniform(0, pi), freq = rng.uniform(2.0, 14.0), ph = rng.uniform(0, 2 * pi);
    double amp[3];
    for (int c = 0; c < 3; ++c) amp[c] = rng.uniform(0.02, 0.12);
    double kx = std::cos(th) * freq * 2 * pi / w, ky = std::sin(th) * freq * 2 * pi / h;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double s = std::sin(kx * x + ky * y + ph);
        for (int c = 0; c < 3; ++c) img[(c * h + y) * w + x] += amp[c] * s;
      }
  }

  // smooth blotches: coarse random grid upsampled bilinearly
  {
    const int64_t gs = 9;
    std::vector<double> grid(static_cast<size_t>(3 * gs * gs));
    for (auto& v : grid) v = rng.uniform(-0.18, 0.18);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double fy = static_cast<double>(y) / h * (gs - 1), fx = static_cast<double>(x) / w * (gs - 1);
        int64_t y0 = static_cast<int64_t>(fy), x0 = static_cast<int64_t>(fx);
        int64_t y1 = std::min(y0 + 1, gs - 1), x1 = std::min(x0 + 1, gs - 1);
        double ay = fy - y0, ax = fx - x0;
        for (int c = 0; c < 3; ++c) {
          const double* gp = grid.data() + c * gs * gs;
          double top = gp[y0 * gs + x0] + ax * (gp[y0 * gs + x1] - gp[y0 * gs + x0]);
          double bot = gp[y1 * gs + x0] + ax * (gp[y1 * gs + x1] - gp[y1 * gs + x0]);
          img[(c * h + y) * w + x] += top + ay * (bot - top);
        }
      }
  }

  // hard-edged shapes
  int n_shapes = static_cast<int>(rng.uniform_int(2, 5));
  for (int k = 0; k < n_shapes; ++k) {
    bool ellipse = rng.bernoulli();
    double cx = rng.uniform(0.1, 0.9) * w, cy = rng.uniform(0.1, 0.9) * h;
    double rx = rng.uniform(0.05, 0.25) * w, ry = rng.uniform(0.05, 0.25) * h;
    double col[3];
    for (int c = 0; c < 3; ++c) col[c] = rng.uniform(0.05, 0.95);
    double blend = rng.uniform(0.35, 0.9);
    int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy - ry));
    int64_t y1 = std::min<int64_t>(h, static_cast<int64_t>(cy + ry) + 1);
    int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx - rx));
    int64_t x1 = std::min<int64_t>(w, static_cast<int64_t>(cx + rx) + 1);
    for (int64_t y = y0; y < y1; ++y)
      for (int64_t x = x0; x < x1; ++x) {
        if (ellipse) {
          double dx = (x - cx) / rx, dy = (y - cy) / ry;
          if (dx * dx + dy * dy > 1.0) continue;
        }
        for (int c = 0; c < 3; ++c) {
          double& v = img[(c * h + y) * w + x];
          v += blend * (col[c] - v);
        }
      }
  }

  // light grain
  for (auto& v : img) v += rng.uniform(-0.02, 0.02);

  nd::Tensor<float> out({1, 3, h, w});
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(std::min(1.0, std::max(0.0, img[static_cast<size_t>(i)])));
  return out;
}

std::vector<nd::Tensor<float>> synth_dataset(int count, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  std::vector<nd::Tensor<float>> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(synth_image(h, w, rng));
  return out;
}

std::vector<nd::Tensor<float>> synth_video(int frames, int64_t h, int64_t w, Rng& rng) {
  // pan a window over a larger scene
  int64_t sh = h + h / 2, sw = w + w / 2;
  nd::Tensor<float> scene = synth_image(sh, sw, rng);
  double x0 = rng.uniform(0, static_cast<double>(sw - w - frames > 0 ? sw - w - frames : 1));
  double y0 = rng.uniform(0, static_cast<double>(sh - h - frames > 0 ? sh - h - frames : 1));
  double vx = rng.uniform(0.3, 1.0), vy = rng.uniform(0.1, 0.6);
  double drift = rng.uniform(-0.001, 0.001);
  std::vector<nd::Tensor<float>> out;
  out.reserve(static_cast<size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    int64_t ox = std::min<int64_t>(sw - w, static_cast<int64_t>(x0 + vx * f));
    int64_t oy = std::min<int64_t>(sh - h, static_cast<int64_t>(y0 + vy * f));
    nd::Tensor<float> fr({1, 3, h, w});
    float gain = static_cast<float>(1.0 + drift * f);
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          float v = scene.at(0, c, oy + y, ox + x) * gain;
          fr.at(0, c, y, x) = v < 0 ? 0 : (v > 1 ? 1 : v);
        }
    out.push_back(std::move(fr));
  }
  return out;
}

void write_synth_dataset(const std::string& dir, int count, int64_t h, int64_t w, uint64_t seed,
                         const std::string& fmt) {
  fs::create_directories(dir);
  auto imgs = synth_dataset(count, h, w, seed);
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "img_%05d.%s", i, fmt.c_str());
    save_image((fs::path(dir) / name).string(), imgs[static_cast<size_t>(i)]);
  }
}

}  // namespace sealkit
