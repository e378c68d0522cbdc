#pragma once

#include <string>
#include <vector>

#include "sealkit/attacks.hpp"
#include "sealkit/detect.hpp"
#include "sealkit/training.hpp"

namespace sealkit {

struct AttackRow {
  std::string category;
  std::string id;
  bool skipped = false;
  double bit_acc = 0;
  double neg_log10_p = 0;
  double detected_frac = 0;
};

struct EvalReport {
  int schema_version = 1;
  std::string suite_id;
  std::string model_hash;  // hex content hash of the weights
  uint64_t seed = 0;
  double alpha = 0;
  double tau = kDefaultDetectionTau;
  int n_images = 0;
  double psnr_mean = 0;  // unattacked watermarked vs original
  double ssim_mean = 0;
  double speedup = 0;  // video pooling only; 0 when not measured
  std::vector<AttackRow> rows;

  /// Per-category arithmetic mean over the category's non-skipped rows, in
  /// report column order: identity, valuemetric, compression, geometric,
  /// combined.
  std::vector<std::pair<std::string, double>> category_bit_acc() const;
  std::vector<std::pair<std::string, double>> category_neg_log10_p() const;

  std::string to_json() const;
  std::string to_csv() const;
};

/// Full-resolution inference path: resize down, embed, resize up, multiply by
/// the JND map, scale by alpha, add, clamp.
Tensorf embed_full(const ModelBundle& bundle, const Tensorf& image, const BitMessage& m,
                   double alpha, bool use_jnd = true);

/// Embeds a fixed per-run reference message into every image, applies each
/// suite attack at native resolution, extracts after resizing back to
/// model_res, and aggregates. Deterministic given the seed.
EvalReport run_eval(const ModelBundle& bundle, const std::vector<Tensorf>& images,
                    const std::vector<AttackSuite>& suites, double tau, double alpha,
                    uint64_t seed);

/// Video pipeline: temporal-pooled embedding, per-frame extraction, soft
/// messages averaged over frames before thresholding. Reports the embed-stage
/// wall-clock speedup of (k, d) against the k=1 baseline.
EvalReport run_video_eval(const ModelBundle& bundle,
                          const std::vector<std::vector<Tensorf>>& videos,
                          const std::vector<AttackSuite>& suites, int k, int d, double tau,
                          double alpha, uint64_t seed);

/// Wall-clock embed throughput ratio of pooled (k, d) vs per-frame embedding
/// on `frames` frames at model resolution.
double measure_pooling_speedup(const ModelBundle& bundle, int frames, int k, int d,
                               uint64_t seed = 7);

/// Empirical check of the detection null model: extracts from clean images
/// and reports the max observed -log10 p (should stay small if extractor
/// output is unbiased on clean data).
struct NullCheck {
  int images = 0;
  double max_neg_log10_p = 0;
  double mean_bit_acc = 0;
};
NullCheck monte_carlo_null_check(const ModelBundle& bundle, const std::vector<Tensorf>& images,
                                 uint64_t seed);

// ---- ablation runner ----

enum class AblationKind { losses, boosting, schedule, resolution };  // (a) (b) (c) (d)

struct AblationRow {
  std::string label;
  bool collapsed = false;  // bit accuracy stuck at chance level
  double psnr = 0;
  std::vector<std::pair<std::string, double>> category_bit_acc;
};

struct AblationTable {
  std::string kind;
  std::vector<AblationRow> rows;
  std::string to_json() const;
  std::string to_csv() const;
};

AblationTable run_ablation(AblationKind kind, const ArchConfig& arch, const TrainConfig& base,
                           const std::vector<Tensorf>& train_data,
                           const std::vector<Tensorf>& eval_images, uint64_t seed);

}  // namespace sealkit
