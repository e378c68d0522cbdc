#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "sealkit/attacks.hpp"
#include "sealkit/jnd.hpp"
#include "sealkit/models.hpp"

namespace sealkit {

struct TrainConfig {
  double lambda_msg = 1.0;
  double lambda_adv = 0.1;
  double lambda_perc = 0.0;  // MSE term kept for the ablation grid only
  double beta = 1.0;         // watermark boosting factor
  double alpha0 = 1.0;
  double alpha1 = 0.2;
  // anneal window in steps, anchored at the stage-2 entry step
  int64_t n_start = 0;
  int64_t n_end = 1000;
  int s_min = 64;
  int s_max = 192;

  double lr = 5e-4;
  int64_t warmup_steps = 200;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;

  int64_t stage1_max_steps = 3000;
  double stage1_saturation = 0.98;  // running-mean bit accuracy to leave stage 1
  int stage1_window = 50;
  double stage1_mild_frac = 0.25;  // budget fraction with identity/mild attacks only
  int64_t stage2_steps = 1200;
  int64_t stage3_steps = 400;

  bool adv_from_start = false;  // "no discriminator delay" ablation
  bool disable_jnd = false;
  bool fixed_resolution = false;  // train at model_res only (ablation d)

  uint64_t seed = 1;

  void validate(const ArchConfig& arch) const;
};

struct StepMetrics {
  int64_t step = 0;
  int stage = 1;
  double alpha = 0;
  double lr = 0;
  double loss_msg = 0;
  double loss_adv = 0;
  double loss_d = 0;
  double loss_perc = 0;
  double bit_acc = 0;
  std::string to_json_line() const;
};

struct TrainState {
  ModelBundle bundle;
  int64_t step = 0;
  int stage = 1;
  int64_t stage2_entry = -1;
  int64_t stage3_entry = -1;
  double alpha = 1.0;
  bool stage1_saturated = false;
  std::map<std::string, Tensorf> opt_m, opt_v;
  int64_t opt_t_model = 0;  // embedder+extractor update count
  int64_t opt_t_disc = 0;
  Rng rng;
  std::deque<double> acc_window;
};

// ---- losses (graph level; tensor-level wrappers below) ----

/// Mean binary cross-entropy; soft values are clamped to [1e-7, 1-1e-7].
Varf message_loss(const Varf& soft, const Tensorf& target_bits);
/// x_hat = x + beta*(x_w - x), clamped to [0,1]. beta=1 returns x_w as-is.
Varf boost(const Varf& x, const Varf& x_w, double beta);
/// mean over patches of 0.5*[relu(1-D(x)) + relu(1+D(x_hat))].
Varf discriminator_step_loss(const Varf& d_real_logits, const Varf& d_fake_logits);
/// -lambda_adv * mean(D(x_hat)); call with logits from a frozen-parameter
/// discriminator forward so no gradient reaches the discriminator.
Varf embedder_adv_loss(const Varf& d_fake_logits, double lambda_adv);

double message_loss_value(const Tensorf& soft, const BitMessage& target);
Tensorf boost_value(const Tensorf& x, const Tensorf& x_w, double beta);

/// alpha0 for t <= n_start, alpha1 for t >= n_end, half-cosine in between.
double alpha_schedule(double t, double alpha0, double alpha1, double n_start, double n_end);
double alpha_schedule(double t, const TrainConfig& cfg);

double lr_at(const TrainConfig& cfg, int64_t opt_t, int64_t total_updates);

/// Builds the high-resolution watermarking graph:
///   w = Emb(resize_down(x), m);  x_w = clamp(x + alpha*(resize_up(w) .* jnd))
/// jnd_1ch is [1,1,H,W] (pass an all-ones map to disable attenuation).
Varf embed_full_graph(const ArchConfig& arch, const ParamVars& p, const Varf& x_full,
                      const Tensorf& message_pm1, double alpha, const Tensorf& jnd_1ch);

/// One optimization step over a batch of full-resolution images (the
/// per-image resolution sampling, message draw and attack draw all come from
/// state.rng). Throws NumericError on non-finite losses.
StepMetrics train_step(TrainState& state, const TrainConfig& cfg,
                       const std::vector<const Tensorf*>& batch_images);

struct RunResult {
  bool stage1_saturated = false;
  std::vector<StepMetrics> log;
};

using StepCallback = std::function<void(const TrainState&, const StepMetrics&)>;

TrainState init_train_state(const ArchConfig& arch, const TrainConfig& cfg);

/// Three-stage schedule: stage 1 message-only at alpha0 until the running
/// mean bit accuracy saturates (or the budget runs out, which is recorded as
/// an explicit failure status); stage 2 adds the adversarial loss and anneals
/// alpha; stage 3 fine-tunes at alpha1.
RunResult run_stages(TrainState& state, const TrainConfig& cfg,
                     const std::vector<Tensorf>& dataset, const StepCallback& on_step = {});

int64_t planned_total_steps(const TrainConfig& cfg);

}  // namespace sealkit
