#pragma once

#include <string>
#include <vector>

#include "sealkit/rng.hpp"
#include "sealkit/tensor.hpp"

namespace sealkit {

/// Sorted .png/.ppm paths in a directory; throws DataError if the directory
/// is missing or holds no images.
std::vector<std::string> list_images(const std::string& dir);

/// Procedural textured image: gradients, oriented gratings, smooth blotches,
/// hard-edged shapes and light grain. Deterministic given the rng state.
nd::Tensor<float> synth_image(int64_t h, int64_t w, Rng& rng);

std::vector<nd::Tensor<float>> synth_dataset(int count, int64_t h, int64_t w, uint64_t seed);

/// Correlated frame sequence: a panning window over a larger synthetic scene
/// with slow brightness drift.
std::vector<nd::Tensor<float>> synth_video(int frames, int64_t h, int64_t w, Rng& rng);

/// Writes count synthetic images into dir as zero-padded numbered files
/// (fmt "png" or "ppm").
void write_synth_dataset(const std::string& dir, int count, int64_t h, int64_t w, uint64_t seed,
                         const std::string& fmt = "png");

}  // namespace sealkit
