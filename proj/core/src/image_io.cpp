#include "sealkit/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "sealkit/errors.hpp"

namespace sealkit {

namespace {

bool ends_with(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

nd::Tensor<float> from_rgb8(const std::vector<uint8_t>& buf, int64_t h, int64_t w) {
  nd::Tensor<float> t({1, 3, h, w});
  constexpr float inv = 1.0f / 255.0f;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c)
        t.at(0, c, y, x) = static_cast<float>(buf[(y * w + x) * 3 + c]) * inv;
  return t;
}

std::vector<uint8_t> to_rgb8(const nd::Tensor<float>& img) {
  nd::check(img.rank() == 4 && img.dim(1) == 3, "save_image: [N,3,H,W] image required");
  int64_t h = img.dim(2), w = img.dim(3);
  std::vector<uint8_t> buf(static_cast<size_t>(h * w * 3));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        float v = img.at(0, c, y, x);
        v = v < 0 ? 0 : (v > 1 ? 1 : v);
        buf[(y * w + x) * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0f));
      }
  return buf;
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

nd::Tensor<float> load_ppm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open image: " + path);
  char magic[3] = {0};
  if (std::fscanf(f.get(), "%2s", magic) != 1 || std::strcmp(magic, "P6") != 0)
    throw DataError("not a binary PPM (P6): " + path);
  auto read_int = [&]() {
    int c;
    // skip whitespace and comments
    while ((c = std::fgetc(f.get())) != EOF) {
      if (c == '#') {
        while ((c = std::fgetc(f.get())) != EOF && c != '\n') {
        }
      } else if (!std::isspace(c)) {
        std::ungetc(c, f.get());
        break;
      }
    }
    long v = -1;
    if (std::fscanf(f.get(), "%ld", &v) != 1) throw DataError("malformed PPM header: " + path);
    return v;
  };
  long w = read_int(), h = read_int(), maxv = read_int();
  if (w <= 0 || h <= 0 || maxv != 255) throw DataError("unsupported PPM (need maxval 255): " + path);
  std::fgetc(f.get());  // single whitespace after maxval
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
  if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw DataError("truncated PPM data: " + path);
  return from_rgb8(buf, h, w);
}

void save_ppm(const std::string& path, const nd::Tensor<float>& img) {
  auto buf = to_rgb8(img);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write image: " + path);
  std::fprintf(f.get(), "P6\n%lld %lld\n255\n", static_cast<long long>(img.dim(3)),
               static_cast<long long>(img.dim(2)));
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw DataError("short write: " + path);
}

nd::Tensor<float> load_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng init failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("malformed PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  int depth = png_get_bit_depth(png, info), color = png_get_color_type(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(buf, h, w);
}

void save_png(const std::string& path, const nd::Tensor<float>& img) {
  auto buf = to_rgb8(img);
  int64_t h = img.dim(2), w = img.dim(3);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng init failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG write failure: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int64_t y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = buf.data() + y * w * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

nd::Tensor<float> load_image(const std::string& path) {
  if (ends_with(path, ".png")) return load_png(path);
  if (ends_with(path, ".ppm")) return load_ppm(path);
  throw DataError("unsupported image extension (expect .png or .ppm): " + path);
}

void save_image(const std::string& path, const nd::Tensor<float>& image) {
  if (ends_with(path, ".png")) return save_png(path, image);
  if (ends_with(path, ".ppm")) return save_ppm(path, image);
  throw DataError("unsupported image extension (expect .png or .ppm): " + path);
}

}  // namespace sealkit
