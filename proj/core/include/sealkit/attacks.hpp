#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sealkit/autodiff.hpp"
#include "sealkit/rng.hpp"

namespace sealkit {

enum class AttackKind {
  identity,
  brightness,
  contrast,
  saturation,
  hue,
  grayscale,
  gaussian_blur,
  horizontal_flip,
  rotate,
  crop,
  perspective,
  resize,
  jpeg_like,
  video_codec,  // external encoder hook; skippable when unavailable
  combined,
};

enum class AttackMode { train_random, eval_deterministic };

/// One transformation. In eval_deterministic mode the strength fields are the
/// exact parameters (pure function, no rng use); in train_random mode `lo/hi`
/// bound the per-application sample.
struct AttackSpec {
  AttackKind kind = AttackKind::identity;
  AttackMode mode = AttackMode::eval_deterministic;
  double strength = 0;  // factor / angle / side-ratio / scale / hue shift
  int int_param = 0;    // blur kernel, jpeg quality, codec crf
  double lo = 0, hi = 0;
  std::string codec;  // h264, h264rgb, h265
  std::vector<AttackSpec> children;

  std::string id() const;
  bool is_external() const;

  static AttackSpec identity_();
  static AttackSpec brightness(double factor);
  static AttackSpec contrast(double factor);
  static AttackSpec saturation(double factor);
  static AttackSpec hue(double shift);
  static AttackSpec grayscale();
  static AttackSpec gaussian_blur(int kernel);
  static AttackSpec horizontal_flip();
  static AttackSpec rotate(double degrees);
  static AttackSpec crop(double side_ratio);
  static AttackSpec perspective(double scale);
  static AttackSpec resize(double factor);
  static AttackSpec jpeg(int quality);
  static AttackSpec video_codec_(const std::string& codec, int crf);
  static AttackSpec combined(std::vector<AttackSpec> steps);
};

struct AttackSuite {
  std::string category;  // identity | valuemetric | compression | geometric | combined
  std::vector<AttackSpec> specs;
};

enum class SuiteKind { image, video };

/// Evaluation grids per category. Video compression includes real-codec
/// entries that are skipped unless an external encoder hook is configured.
std::vector<AttackSuite> build_suites(SuiteKind kind);

/// Applies the transformation to [N,3,H,W] (or [T,3,H,W] frames) in [0,1].
/// Differentiable except jpeg_like/video_codec, which go through the
/// straight-through wrapper. eval_deterministic specs never touch the rng.
template <class T>
nd::Var<T> apply_attack(const AttackSpec& spec, const nd::Var<T>& image, Rng* rng);

/// Tensor-level convenience for evaluation pipelines.
template <class T>
nd::Tensor<T> apply_attack_eval(const AttackSpec& spec, const nd::Tensor<T>& image);

/// Env var naming the external encoder executable. It is invoked as
///   <encoder> <in_dir> <out_dir> <codec> <crf>
/// where in_dir holds frame_%05d.ppm; the hook must write the transcoded
/// frames under the same names into out_dir.
constexpr const char* kExternalEncoderEnv = "SEALKIT_EXTERNAL_ENCODER";
bool external_encoder_available();

}  // namespace sealkit
