#include "sealkit/training.hpp"

#include <cmath>
#include <cstdio>

#include "sealkit/detect.hpp"
#include "sealkit/errors.hpp"

namespace ops = sealkit::nd;

namespace sealkit {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr float kBceEps = 1e-7f;
}  // namespace

void TrainConfig::validate(const ArchConfig& arch) const {
  nd::check(alpha0 >= alpha1 && alpha1 > 0, "train: need alpha0 >= alpha1 > 0");
  nd::check(n_start < n_end, "train: need n_start < n_end");
  nd::check(s_min <= s_max, "train: need s_min <= s_max");
  nd::check(s_min >= arch.model_res / 2 && s_min >= 16, "train: s_min too small");
  nd::check(batch_size >= 1, "train: batch_size must be >= 1");
  nd::check(lambda_msg >= 0 && lambda_adv >= 0 && lambda_perc >= 0, "train: negative loss weight");
  nd::check(n_end <= stage2_steps, "train: anneal window must fit in stage 2");
}

std::string StepMetrics::to_json_line() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"step\":%lld,\"stage\":%d,\"alpha\":%.9g,\"lr\":%.9g,\"loss_msg\":%.9g,"
                "\"loss_adv\":%.9g,\"loss_d\":%.9g,\"loss_perc\":%.9g,\"bit_acc\":%.9g}",
                static_cast<long long>(step), stage, alpha, lr, loss_msg, loss_adv, loss_d,
                loss_perc, bit_acc);
  return buf;
}

Varf message_loss(const Varf& soft, const Tensorf& target_bits) {
  nd::check(soft.numel() == target_bits.numel(),
            "message_loss: length mismatch " + nd::shape_str(soft.shape()) + " vs " +
                nd::shape_str(target_bits.shape()));
  // clamp both branches to [eps, 1] independently: forming 1-s after a clamp
  // would inflate eps to a full float ulp at 1
  Varf s = ops::clamp(soft, kBceEps, 1.0f);
  Varf u = ops::clamp(ops::add_scalar(ops::mul_scalar(soft, -1.0f), 1.0f), kBceEps, 1.0f);
  Tensorf t = target_bits;
  Tensorf one_minus_t(t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) one_minus_t[i] = 1.0f - t[i];
  // -(t*log(s) + (1-t)*log(1-s))
  Varf ll = ops::add(ops::mul(ops::constant(t), ops::log_op(s)),
                     ops::mul(ops::constant(one_minus_t), ops::log_op(u)));
  return ops::mul_scalar(ops::mean_all(ll), -1.0f);
}

Varf boost(const Varf& x, const Varf& x_w, double beta) {
  nd::check(x.shape() == x_w.shape(), "boost: shape mismatch");
  if (beta == 1.0) return x_w;  // exact pass-through
  Varf d = ops::sub(x_w, x);
  return ops::clamp(ops::add(x, ops::mul_scalar(d, static_cast<float>(beta))), 0.0f, 1.0f);
}

Varf discriminator_step_loss(const Varf& d_real, const Varf& d_fake) {
  nd::check(d_real.shape() == d_fake.shape(), "discriminator_step_loss: logit shape mismatch");
  Varf lr_ = ops::mean_all(ops::relu(ops::add_scalar(ops::mul_scalar(d_real, -1.0f), 1.0f)));
  Varf lf = ops::mean_all(ops::relu(ops::add_scalar(d_fake, 1.0f)));
  return ops::mul_scalar(ops::add(lr_, lf), 0.5f);
}

Varf embedder_adv_loss(const Varf& d_fake, double lambda_adv) {
  return ops::mul_scalar(ops::mean_all(d_fake), static_cast<float>(-lambda_adv));
}

double message_loss_value(const Tensorf& soft, const BitMessage& target) {
  Tensorf t({static_cast<int64_t>(target.bits.size())});
  for (size_t i = 0; i < target.bits.size(); ++i) t[static_cast<int64_t>(i)] = target.bits[i];
  return static_cast<double>(
      message_loss(ops::constant(soft.reshaped({soft.numel()})), t).value()[0]);
}

Tensorf boost_value(const Tensorf& x, const Tensorf& x_w, double beta) {
  return boost(ops::constant(x), ops::constant(x_w), beta).value();
}

double alpha_schedule(double t, double alpha0, double alpha1, double n_start, double n_end) {
  nd::check(n_end > n_start, "alpha_schedule: n_end must exceed n_start");
  double phi = (t - n_start) / (n_end - n_start);
  phi = std::min(1.0, std::max(0.0, phi));
  return alpha1 + (alpha0 - alpha1) * std::cos(kPi / 2.0 * phi);
}

double alpha_schedule(double t, const TrainConfig& cfg) {
  return alpha_schedule(t, cfg.alpha0, cfg.alpha1, static_cast<double>(cfg.n_start),
                        static_cast<double>(cfg.n_end));
}

double lr_at(const TrainConfig& cfg, int64_t opt_t, int64_t total) {
  if (cfg.warmup_steps > 0 && opt_t <= cfg.warmup_steps)
    return cfg.lr * static_cast<double>(opt_t) / static_cast<double>(cfg.warmup_steps);
  double denom = static_cast<double>(std::max<int64_t>(1, total - cfg.warmup_steps));
  double prog = static_cast<double>(opt_t - cfg.warmup_steps) / denom;
  prog = std::min(1.0, std::max(0.0, prog));
  return cfg.lr * 0.5 * (1.0 + std::cos(kPi * prog));
}

int64_t planned_total_steps(const TrainConfig& cfg) {
  return cfg.stage1_max_steps + cfg.stage2_steps + cfg.stage3_steps;
}

Varf embed_full_graph(const ArchConfig& arch, const ParamVars& p, const Varf& x_full,
                      const Tensorf& message_pm1, double alpha, const Tensorf& jnd_1ch) {
  Varf xl = ops::bilinear_resize(x_full, arch.model_res, arch.model_res);
  Varf w = embedder_forward(arch, p, xl, ops::constant(message_pm1));
  Varf wu = ops::bilinear_resize(w, x_full.dim(2), x_full.dim(3));
  Varf scaled = ops::mul_scalar(ops::mul(wu, ops::constant(jnd_1ch)), static_cast<float>(alpha));
  return ops::clamp(ops::add(x_full, scaled), 0.0f, 1.0f);
}

namespace {

Tensorf resize_tensor(const Tensorf& t, int64_t h, int64_t w) {
  if (t.dim(2) == h && t.dim(3) == w) return t;
  return ops::bilinear_resize(ops::constant(t), h, w).value();
}

AttackSpec train_spec(AttackSpec s, double lo, double hi) {
  s.mode = AttackMode::train_random;
  s.lo = lo;
  s.hi = hi;
  return s;
}

AttackSpec sample_attack(Rng& rng, bool mild) {
  if (mild) {
    switch (rng.uniform_int(0, 2)) {
      case 0: return AttackSpec::identity_();
      case 1: return train_spec(AttackSpec::brightness(1.0), 0.9, 1.1);
      default: return train_spec(AttackSpec::contrast(1.0), 0.9, 1.1);
    }
  }
  switch (rng.uniform_int(0, 4)) {
    case 0:
      return AttackSpec::identity_();
    case 1:
      switch (rng.uniform_int(0, 4)) {
        case 0: return train_spec(AttackSpec::brightness(1.0), 0.5, 1.5);
        case 1: return train_spec(AttackSpec::contrast(1.0), 0.5, 1.5);
        case 2: return train_spec(AttackSpec::saturation(1.0), 0.5, 1.5);
        case 3: return train_spec(AttackSpec::hue(0.0), -0.25, 0.25);
        default: return train_spec(AttackSpec::gaussian_blur(3), 3, 9);
      }
    case 2:
      switch (rng.uniform_int(0, 3)) {
        case 0: return AttackSpec::horizontal_flip();
        case 1: return train_spec(AttackSpec::rotate(0.0), -45.0, 45.0);
        case 2: return train_spec(AttackSpec::crop(0.8), 0.5, 1.0);
        default: return train_spec(AttackSpec::perspective(0.0), 0.0, 0.5);
      }
    case 3:
      return train_spec(AttackSpec::jpeg(60), 40, 95);
    default:
      return AttackSpec::combined({train_spec(AttackSpec::jpeg(60), 40, 90),
                                   train_spec(AttackSpec::crop(0.71), 0.6, 0.9),
                                   train_spec(AttackSpec::brightness(1.0), 0.5, 1.5)});
  }
}

struct AdamGroup {
  std::vector<std::pair<std::string, Tensorf>> grads;  // name -> grad copy
};

void adamw_apply(TrainState& st, const TrainConfig& cfg, const AdamGroup& group, int64_t opt_t,
                 double lr) {
  double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt_t));
  double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt_t));
  for (const auto& [name, g] : group.grads) {
    Tensorf& p = st.bundle.params.at(name);
    Tensorf& m = st.opt_m.at(name);
    Tensorf& v = st.opt_v.at(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      double gi = g[i];
      double mi = b1 * m[i] + (1 - b1) * gi;
      double vi = b2 * v[i] + (1 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double mhat = mi / bc1, vhat = vi / bc2;
      double upd = mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * p[i];
      p[i] = static_cast<float>(p[i] - lr * upd);
    }
  }
}

double current_alpha(const TrainState& st, const TrainConfig& cfg) {
  if (cfg.adv_from_start) return cfg.alpha1;
  if (st.stage <= 1) return cfg.alpha0;
  if (st.stage >= 3) return cfg.alpha1;
  double rel = static_cast<double>(st.step - st.stage2_entry);
  return alpha_schedule(rel, cfg.alpha0, cfg.alpha1, static_cast<double>(cfg.n_start),
                        static_cast<double>(cfg.n_end));
}

}  // namespace

TrainState init_train_state(const ArchConfig& arch, const TrainConfig& cfg) {
  cfg.validate(arch);
  TrainState st;
  st.rng = Rng(cfg.seed);
  st.bundle = init_models(arch, st.rng);
  for (const auto& [name, t] : st.bundle.params) {
    st.opt_m.emplace(name, Tensorf(t.shape()));
    st.opt_v.emplace(name, Tensorf(t.shape()));
  }
  st.alpha = cfg.adv_from_start ? cfg.alpha1 : cfg.alpha0;
  return st;
}

StepMetrics train_step(TrainState& st, const TrainConfig& cfg,
                       const std::vector<const Tensorf*>& batch) {
  nd::check(!batch.empty(), "train_step: empty batch");
  const ArchConfig& arch = st.bundle.arch;
  bool mild_phase =
      st.stage == 1 && st.step < static_cast<int64_t>(cfg.stage1_mild_frac *
                                                      static_cast<double>(cfg.stage1_max_steps));
  bool adversarial = (st.stage >= 2 || cfg.adv_from_start) && cfg.lambda_adv > 0;
  double alpha = current_alpha(st, cfg);
  st.alpha = alpha;

  ParamVars pv_model = wrap_params(st.bundle, {"emb.", "ext."});
  ParamVars pv_disc;
  if (adversarial) pv_disc = wrap_params(st.bundle, {"disc."});

  Varf sum_msg, sum_adv, sum_d, sum_perc;
  double acc_sum = 0;
  for (const Tensorf* img : batch) {
    int64_t h = arch.model_res, w = arch.model_res;
    if (!cfg.fixed_resolution) {
      h = st.rng.uniform_int(cfg.s_min, cfg.s_max);
      w = st.rng.uniform_int(cfg.s_min, cfg.s_max);
    }
    Tensorf x_t = resize_tensor(*img, h, w);
    BitMessage m = BitMessage::random(arch.n_bits, st.rng);
    AttackSpec attack = sample_attack(st.rng, mild_phase);

    Tensorf jnd = cfg.disable_jnd ? Tensorf::full({1, 1, h, w}, 1.0f) : jnd_map(x_t);
    Varf x = ops::constant(x_t);
    Varf x_w = embed_full_graph(arch, pv_model, x, message_pm1_rows(m, 1), alpha, jnd);

    if (adversarial) {
      Varf xb = boost(x, x_w, cfg.beta);
      Varf d_real = discriminator_forward(arch, pv_disc, x);
      Varf d_fake_d = discriminator_forward(arch, pv_disc, ops::detach(xb));
      Varf l_d = discriminator_step_loss(d_real, d_fake_d);
      sum_d = sum_d.defined() ? ops::add(sum_d, l_d) : l_d;
      // frozen discriminator copy so no gradient reaches disc parameters
      Varf d_fake_g = discriminator_forward(arch, pv_model, xb);
      Varf l_adv = embedder_adv_loss(d_fake_g, cfg.lambda_adv);
      sum_adv = sum_adv.defined() ? ops::add(sum_adv, l_adv) : l_adv;
    }
    if (cfg.lambda_perc > 0) {
      Varf d = ops::sub(x_w, x);
      Varf l_p = ops::mean_all(ops::mul(d, d));
      sum_perc = sum_perc.defined() ? ops::add(sum_perc, l_p) : l_p;
    }

    Varf x_att = apply_attack(attack, x_w, &st.rng);
    Varf x_ext = ops::bilinear_resize(x_att, arch.model_res, arch.model_res);
    Varf soft = extractor_forward(arch, pv_model, x_ext);
    Tensorf target({1, arch.n_bits});
    for (int i = 0; i < arch.n_bits; ++i) target[i] = m.bits[static_cast<size_t>(i)];
    Varf l_msg = message_loss(soft, target);
    sum_msg = sum_msg.defined() ? ops::add(sum_msg, l_msg) : l_msg;

    BitMessage got = threshold(soft.value());
    acc_sum += 1.0 - static_cast<double>(hamming_distance(got, m)) / arch.n_bits;
  }

  float inv_b = 1.0f / static_cast<float>(batch.size());
  Varf l_msg_mean = ops::mul_scalar(sum_msg, inv_b);
  Varf l_total = ops::mul_scalar(l_msg_mean, static_cast<float>(cfg.lambda_msg));
  Varf l_adv_mean, l_d_mean, l_perc_mean;
  if (sum_adv.defined()) {
    l_adv_mean = ops::mul_scalar(sum_adv, inv_b);
    l_total = ops::add(l_total, l_adv_mean);
  }
  if (sum_perc.defined()) {
    l_perc_mean = ops::mul_scalar(sum_perc, inv_b);
    l_total = ops::add(l_total, ops::mul_scalar(l_perc_mean, static_cast<float>(cfg.lambda_perc)));
  }
  if (sum_d.defined()) l_d_mean = ops::mul_scalar(sum_d, inv_b);

  StepMetrics mt;
  mt.step = st.step + 1;
  mt.stage = st.stage;
  mt.alpha = alpha;
  mt.loss_msg = l_msg_mean.value()[0];
  mt.loss_adv = l_adv_mean.defined() ? l_adv_mean.value()[0] : 0.0;
  mt.loss_d = l_d_mean.defined() ? l_d_mean.value()[0] : 0.0;
  mt.loss_perc = l_perc_mean.defined() ? l_perc_mean.value()[0] : 0.0;
  mt.bit_acc = acc_sum / static_cast<double>(batch.size());

  auto check_finite = [&](double v, const char* term) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite ") + term + " at step " +
                         std::to_string(mt.step));
  };
  check_finite(mt.loss_msg, "message loss");
  check_finite(mt.loss_adv, "adversarial loss");
  check_finite(mt.loss_d, "discriminator loss");
  check_finite(mt.loss_perc, "perceptual loss");

  // discriminator update (own hinge objective)
  int64_t total = planned_total_steps(cfg);
  if (l_d_mean.defined()) {
    ops::backward_scalar(l_d_mean);
    AdamGroup gd;
    for (const auto& [name, var] : pv_disc.vars)
      if (var.requires_grad()) gd.grads.emplace_back(name, var.grad());
    st.opt_t_disc += 1;
    double lr_d = lr_at(cfg, st.opt_t_disc, total);
    adamw_apply(st, cfg, gd, st.opt_t_disc, lr_d);
  }

  // embedder + extractor update
  ops::backward_scalar(l_total);
  AdamGroup gm;
  for (const auto& [name, var] : pv_model.vars)
    if (var.requires_grad()) gm.grads.emplace_back(name, var.grad());
  st.opt_t_model += 1;
  double lr_m = lr_at(cfg, st.opt_t_model, total);
  mt.lr = lr_m;
  adamw_apply(st, cfg, gm, st.opt_t_model, lr_m);

  st.step += 1;
  return mt;
}

RunResult run_stages(TrainState& st, const TrainConfig& cfg, const std::vector<Tensorf>& dataset,
                     const StepCallback& on_step) {
  nd::check(!dataset.empty(), "run_stages: empty dataset");
  cfg.validate(st.bundle.arch);
  RunResult res;

  auto draw_batch = [&]() {
    std::vector<const Tensorf*> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i) {
      int64_t idx = st.rng.uniform_int(0, static_cast<int64_t>(dataset.size()) - 1);
      batch.push_back(&dataset[static_cast<size_t>(idx)]);
    }
    return batch;
  };
  auto do_step = [&]() {
    StepMetrics m = train_step(st, cfg, draw_batch());
    res.log.push_back(m);
    if (on_step) on_step(st, m);
    return m;
  };

  // stage 1: message loss only at alpha0 until saturation
  while (st.stage == 1 && st.step < cfg.stage1_max_steps) {
    StepMetrics m = do_step();
    st.acc_window.push_back(m.bit_acc);
    if (static_cast<int>(st.acc_window.size()) > cfg.stage1_window) st.acc_window.pop_front();
    if (static_cast<int>(st.acc_window.size()) == cfg.stage1_window) {
      double mean = 0;
      for (double a : st.acc_window) mean += a;
      mean /= st.acc_window.size();
      if (mean >= cfg.stage1_saturation) {
        st.stage1_saturated = true;
        break;
      }
    }
  }
  res.stage1_saturated = st.stage1_saturated;
  if (st.stage == 1) {
    st.stage = 2;
    st.stage2_entry = st.step;
  }

  while (st.stage == 2 && st.step < st.stage2_entry + cfg.stage2_steps) do_step();
  if (st.stage == 2) {
    st.stage = 3;
    st.stage3_entry = st.step;
  }
  while (st.stage == 3 && st.step < st.stage3_entry + cfg.stage3_steps) do_step();

  res.stage1_saturated = st.stage1_saturated;
  return res;
}

}  // namespace sealkit
