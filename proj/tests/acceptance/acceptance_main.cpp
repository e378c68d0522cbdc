// Acceptance suite: one checkable criterion per `run N` invocation, plus a
// `setup` step that trains and caches the toy model shared by criteria 6/8.
// Prints exactly one PASS/FAIL line per criterion and exits non-zero on FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "../op_gradients.hpp"
#include "sealkit/checkpoint.hpp"
#include "sealkit/errors.hpp"
#include "sealkit/dataset.hpp"
#include "sealkit/harness.hpp"
#include "sealkit/image_io.hpp"
#include "sealkit/jpeg_like.hpp"
#include "sealkit/metrics.hpp"

using namespace sealkit;
using namespace sealkit::testing;
namespace fs = std::filesystem;
namespace ops = sealkit::nd;

namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// wall-clock budgets in the criteria are stated for 8 CPU cores; scale when
// the machine has fewer
double scaled_budget(double stated_seconds) {
  unsigned cores = std::thread::hardware_concurrency();
  if (cores == 0) cores = 1;
  double scale = cores >= 8 ? 1.0 : 8.0 / static_cast<double>(cores);
  return stated_seconds * scale;
}

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    pass = false;
    detail += (detail.empty() ? "" : "; ") + why;
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

int report(int criterion, const Outcome& o) {
  std::printf("criterion %d: %s%s%s\n", criterion, o.pass ? "PASS" : "FAIL",
              o.detail.empty() ? "" : " — ", o.detail.c_str());
  return o.pass ? 0 : 1;
}

// ---- toy configuration pinned by criterion 5 ----

ArchConfig toy_arch() {
  ArchConfig a;
  a.model_res = 64;
  a.n_bits = 16;
  a.base_channels = 16;
  a.depth = 3;
  return a;
}

TrainConfig toy_cfg(uint64_t seed) {
  TrainConfig c;
  c.batch_size = 8;
  c.s_min = 64;
  c.s_max = 192;
  c.stage1_max_steps = 3000;
  c.stage2_steps = 1400;
  c.n_start = 100;
  c.n_end = 1100;
  c.stage3_steps = 400;
  c.seed = seed;
  return c;
}

std::vector<Tensorf> toy_dataset() { return synth_dataset(512, 192, 192, 4242); }

std::vector<Tensorf> eval_dataset(int n = 16) { return synth_dataset(n, 176, 176, 9191); }

// ablation scale: small enough that a full three-stage run takes ~2 minutes
struct AblationScale {
  ArchConfig arch;
  TrainConfig cfg;
};
AblationScale ablation_scale(uint64_t seed) {
  ArchConfig a;
  a.model_res = 32;
  a.n_bits = 8;
  a.base_channels = 8;
  a.depth = 2;
  a.msg_embed_channels = 8;
  TrainConfig c;
  c.batch_size = 4;
  c.s_min = 32;
  c.s_max = 96;
  c.warmup_steps = 100;
  c.stage1_max_steps = 1200;
  c.stage1_window = 40;
  c.stage2_steps = 700;
  c.n_start = 50;
  c.n_end = 550;
  c.stage3_steps = 200;
  c.seed = seed;
  return {a, c};
}

const AttackSpec kCombined60 = AttackSpec::combined(
    {AttackSpec::jpeg(60), AttackSpec::crop(0.71), AttackSpec::brightness(0.5)});

double eval_attack_bit_acc(const ModelBundle& b, const std::vector<Tensorf>& images,
                           const AttackSpec& spec, double alpha, uint64_t seed) {
  std::vector<AttackSuite> one{{"probe", {spec}}};
  EvalReport rep = run_eval(b, images, one, kDefaultDetectionTau, alpha, seed);
  return rep.rows[0].bit_acc;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  double t0 = now_s();
  for (const auto& c : op_grad_cases()) {
    Rng rng(1001);
    for (int rep = 0; rep < 10; ++rep) {
      double err = c.run(rng, c.step);
      if (err >= 1e-5) {
        o.fail(c.name + " rel err " + std::to_string(err));
        break;
      }
    }
  }
  for (const auto& c : attack_grad_cases()) {
    Rng rng(2002);
    for (int rep = 0; rep < 10; ++rep) {
      double err = c.run(rng, c.step);
      if (err >= 1e-5) {
        o.fail(c.name + " rel err " + std::to_string(err));
        break;
      }
    }
  }
  double dt = now_s() - t0;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "all ops and attacks < 1e-5 in %.0f s", dt);
  o.note(buf);
  if (dt >= 120.0) o.fail("runtime exceeded 2 min");
  return o;
}

Outcome criterion2() {
  Outcome o;
  for (int n = 1; n <= 12 && o.pass; ++n) {
    for (int d = 0; d <= n; ++d) {
      int64_t count = 0;
      for (uint32_t m = 0; m < (1u << n); ++m)
        if (__builtin_popcount(m) <= d) ++count;
      double exact = static_cast<double>(count) / static_cast<double>(int64_t{1} << n);
      if (p_value(n, d) != exact) {
        o.fail("p_value(" + std::to_string(n) + "," + std::to_string(d) + ") != enumeration");
        break;
      }
    }
  }
  double want = 256 * std::log10(2.0);
  double got = neg_log10_p(256, 0);
  if (std::abs(got - want) > 1e-3)
    o.fail("neg_log10_p(256,0) = " + std::to_string(got));
  if (o.pass) o.note("exact for all n <= 12; neg_log10_p(256,0) = 77.0637");
  return o;
}

Outcome criterion3() {
  Outcome o;
  Rng rng(33);
  Tensorf img({1, 3, 24, 24});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform());

  auto check_transform = [&](const char* name,
                             const std::function<Tensorf(const Tensorf&)>& f) {
    auto x = ops::leaf(img, true);
    auto y = ops::straight_through<float>(x, f);
    Tensorf direct = f(img);
    for (int64_t i = 0; i < direct.numel(); ++i)
      if (y.value()[i] != direct[i]) {
        o.fail(std::string(name) + ": forward not bit-exact");
        return;
      }
    Tensorf seed(y.shape());
    for (int64_t i = 0; i < seed.numel(); ++i) seed[i] = static_cast<float>(rng.uniform(-2, 2));
    ops::backward(y, seed);
    for (int64_t i = 0; i < seed.numel(); ++i)
      if (x.grad()[i] != seed[i]) {
        o.fail(std::string(name) + ": backward is not the identity");
        return;
      }
  };
  check_transform("jpeg_like",
                  [](const Tensorf& t) { return jpeg_like(t, 50); });
  check_transform("quantizer", [](const Tensorf& t) {
    Tensorf q = t;
    for (int64_t i = 0; i < q.numel(); ++i) q[i] = std::round(q[i] * 255.0f) / 255.0f;
    return q;
  });
  if (o.pass) o.note("bit-exact forward, exact identity backward (jpeg_like, quantizer)");
  return o;
}

Outcome criterion4() {
  Outcome o;
  if (alpha_schedule(50, 1.0, 0.2, 100, 200) != 1.0) o.fail("alpha(t<=N_start) != alpha0");
  if (alpha_schedule(100, 1.0, 0.2, 100, 200) != 1.0) o.fail("alpha(N_start) != alpha0");
  double end = alpha_schedule(200, 1.0, 0.2, 100, 200);
  if (std::abs(end - 0.2) > 1e-15) o.fail("alpha(N_end) != alpha1");
  if (alpha_schedule(5000, 1.0, 0.2, 100, 200) != end) o.fail("alpha(t>=N_end) not flat");
  double mid = alpha_schedule(150, 1.0, 0.2, 100, 200);
  if (std::abs(mid - 0.765685) > 1e-6)
    o.fail("midpoint " + std::to_string(mid) + " != 0.765685 +- 1e-6");
  double prev = 1e9;
  for (int i = 0; i <= 1000; ++i) {
    double a = alpha_schedule(300.0 * i / 1000.0, 1.0, 0.2, 100, 200);
    if (a > prev + 1e-12) {
      o.fail("not monotone non-increasing");
      break;
    }
    prev = a;
  }
  if (o.pass) o.note("endpoints exact, midpoint 0.765685, monotone over 1000-point sweep");
  return o;
}

Outcome criterion5() {
  Outcome o;
  auto data = toy_dataset();
  double budget = scaled_budget(20 * 60);
  for (uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg = toy_cfg(seed);
    cfg.stage1_mild_frac = 1.0;  // identity + mild valuemetric for all of stage 1
    cfg.stage1_saturation = 0.99;
    // stage-1-only run: a long nominal horizon keeps the cosine lr near its
    // peak for the whole stage
    cfg.stage2_steps = 6000;
    cfg.n_end = 5000;
    cfg.stage3_steps = 1000;
    double t0 = now_s();
    TrainState st = init_train_state(toy_arch(), cfg);
    bool saturated = false;
    int64_t sat_step = 0;
    try {
      run_stages(st, cfg, data, [&](const TrainState& s, const StepMetrics&) {
        if (s.stage >= 2) throw int(0);  // stage 1 finished
      });
    } catch (int) {
    }
    saturated = st.stage1_saturated;
    sat_step = st.step;
    double dt = now_s() - t0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "seed %llu: %s at step %lld in %.0f s (budget %.0f s)",
                  static_cast<unsigned long long>(seed),
                  saturated ? "bit_acc >= 0.99" : "NOT saturated",
                  static_cast<long long>(sat_step), dt, budget);
    o.note(buf);
    if (!saturated) o.fail("seed " + std::to_string(seed) + " failed to reach 0.99");
    if (sat_step > 3000) o.fail("step budget exceeded");
    if (dt > budget) o.fail("wall-clock budget exceeded");
  }
  return o;
}

// setup: full three-stage toy training, cached for criteria 6 and 8
int do_setup(const fs::path& dir, bool force) {
  fs::create_directories(dir);
  fs::path ckpt = dir / "toy_final.skpt";
  fs::path stats = dir / "setup_stats.json";
  if (!force && fs::exists(ckpt) && fs::exists(stats)) {
    std::printf("setup: cached model found at %s\n", ckpt.string().c_str());
    return 0;
  }
  double t0 = now_s();
  TrainConfig cfg = toy_cfg(1);
  TrainState st = init_train_state(toy_arch(), cfg);
  auto data = toy_dataset();
  int64_t last_print = 0;
  RunResult rr = run_stages(st, cfg, data, [&](const TrainState&, const StepMetrics& m) {
    if (m.step - last_print >= 200) {
      std::printf("  step %lld stage %d alpha %.3f bit_acc %.3f\n",
                  static_cast<long long>(m.step), m.stage, m.alpha, m.bit_acc);
      std::fflush(stdout);
      last_print = m.step;
    }
  });
  double dt = now_s() - t0;
  save_checkpoint(ckpt.string(), st);
  nlohmann::json j;
  j["train_seconds"] = dt;
  j["steps"] = st.step;
  j["stage1_saturated"] = rr.stage1_saturated;
  std::ofstream(stats) << j.dump(2);
  std::printf("setup: trained %lld steps in %.0f s, saturated=%d -> %s\n",
              static_cast<long long>(st.step), dt, rr.stage1_saturated ? 1 : 0,
              ckpt.string().c_str());
  return 0;
}

Outcome criterion6(const fs::path& dir) {
  Outcome o;
  fs::path ckpt = dir / "toy_final.skpt";
  if (!fs::exists(ckpt)) {
    o.fail("setup model missing; run `sealkit_acceptance setup` first");
    return o;
  }
  double train_seconds = -1;
  {
    std::ifstream f(dir / "setup_stats.json");
    if (f) {
      auto j = nlohmann::json::parse(f, nullptr, false);
      if (!j.is_discarded()) train_seconds = j.value("train_seconds", -1.0);
    }
  }
  TrainState st = load_checkpoint(ckpt.string());
  auto images = eval_dataset(16);

  std::vector<AttackSuite> suites{{"identity", {AttackSpec::identity_()}},
                                  {"combined", {kCombined60}}};
  EvalReport rep = run_eval(st.bundle, images, suites, kDefaultDetectionTau, 0.2, 7);
  double id_acc = rep.rows[0].bit_acc;
  double comb_acc = rep.rows[1].bit_acc;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "identity %.3f (need >= 0.95), combined %.3f (need >= 0.70), psnr %.1f dB "
                "(need >= 33)",
                id_acc, comb_acc, rep.psnr_mean);
  o.note(buf);
  if (id_acc < 0.95) o.fail("identity bit accuracy below 0.95");
  if (comb_acc < 0.70) o.fail("combined bit accuracy below 0.70");
  if (!(rep.psnr_mean >= 33.0)) o.fail("psnr below 33 dB");
  if (train_seconds >= 0) {
    double budget = scaled_budget(2 * 3600);
    std::snprintf(buf, sizeof(buf), "training took %.0f s (budget %.0f s)", train_seconds,
                  budget);
    o.note(buf);
    if (train_seconds > budget) o.fail("training exceeded the wall-clock budget");
  }
  return o;
}

Outcome criterion7() {
  Outcome o;
  auto eval_imgs = synth_dataset(10, 112, 112, 77);
  for (uint64_t seed : {11, 12}) {
    AblationScale s = ablation_scale(seed);
    auto train_data = synth_dataset(192, 96, 96, 1000 + seed);

    // (b) boosting: beta 0.5 vs 2.5 ordering on combined robustness and PSNR
    auto run_beta = [&](double beta) {
      TrainConfig c = s.cfg;
      c.beta = beta;
      TrainState st = init_train_state(s.arch, c);
      run_stages(st, c, train_data);
      std::vector<AttackSuite> suites{{"combined", {kCombined60}}};
      EvalReport rep = run_eval(st.bundle, eval_imgs, suites, kDefaultDetectionTau, 0.2,
                                seed);
      return std::make_pair(rep.rows[0].bit_acc, rep.psnr_mean);
    };
    auto [acc_lo, psnr_lo] = run_beta(0.5);
    auto [acc_hi, psnr_hi] = run_beta(2.5);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "seed %llu (b): beta0.5 acc %.3f psnr %.1f | beta2.5 acc %.3f psnr %.1f",
                  static_cast<unsigned long long>(seed), acc_lo, psnr_lo, acc_hi, psnr_hi);
    o.note(buf);
    if (!(acc_lo >= acc_hi)) o.fail("(b) robustness ordering violated");
    if (!(psnr_hi > psnr_lo)) o.fail("(b) psnr ordering violated");

    // (c) both collapse configurations stay at chance for the whole budget
    auto run_collapse = [&](bool no_delay) {
      TrainConfig c = s.cfg;
      c.alpha0 = c.alpha1;  // no watermark scaling
      if (no_delay) c.adv_from_start = true;
      c.stage1_mild_frac = 0.0;  // full attacks from step 0
      TrainState st = init_train_state(s.arch, c);
      RunResult rr = run_stages(st, c, train_data);
      double worst = 0.5, tail = 0;
      int n = 0;
      for (const auto& m : rr.log) {
        worst = std::max(worst, std::abs(m.bit_acc - 0.5) + 0.5);
        if (m.step + 100 >= static_cast<int64_t>(rr.log.size())) {
          tail += m.bit_acc;
          ++n;
        }
      }
      return std::make_pair(tail / std::max(1, n), worst);
    };
    auto [tail_ns, worst_ns] = run_collapse(false);
    auto [tail_nd, worst_nd] = run_collapse(true);
    std::snprintf(buf, sizeof(buf), "seed %llu (c): no_scaling tail %.3f, no_delay tail %.3f",
                  static_cast<unsigned long long>(seed), tail_ns, tail_nd);
    o.note(buf);
    if (std::abs(tail_ns - 0.5) > 0.05) o.fail("(c) no_scaling escaped chance level");
    if (std::abs(tail_nd - 0.5) > 0.05) o.fail("(c) no_disc_delay escaped chance level");

    // (d) fixed-resolution training scores strictly lower on geometric
    auto run_res = [&](bool fixed) {
      TrainConfig c = s.cfg;
      c.fixed_resolution = fixed;
      TrainState st = init_train_state(s.arch, c);
      run_stages(st, c, train_data);
      std::vector<AttackSuite> suites{
          {"geometric",
           {AttackSpec::crop(0.71), AttackSpec::crop(0.55), AttackSpec::rotate(10.0),
            AttackSpec::perspective(0.3), AttackSpec::horizontal_flip()}}};
      EvalReport rep =
          run_eval(st.bundle, eval_imgs, suites, kDefaultDetectionTau, 0.2, seed);
      return rep.category_bit_acc()[0].second;
    };
    double geo_high = run_res(false);
    double geo_fixed = run_res(true);
    std::snprintf(buf, sizeof(buf), "seed %llu (d): highres geo %.3f vs fixed %.3f",
                  static_cast<unsigned long long>(seed), geo_high, geo_fixed);
    o.note(buf);
    if (!(geo_fixed < geo_high)) o.fail("(d) fixed-res did not underperform on geometric");
  }
  return o;
}

Outcome criterion8(const fs::path& dir) {
  Outcome o;
  fs::path ckpt = dir / "toy_final.skpt";
  if (!fs::exists(ckpt)) {
    o.fail("setup model missing; run `sealkit_acceptance setup` first");
    return o;
  }
  TrainState st = load_checkpoint(ckpt.string());
  const ModelBundle& b = st.bundle;
  Rng rng(55);

  // k=1 equivalence (bit-exact) and constant-video equivalence (exact)
  Tensorf frames({6, 3, 64, 64});
  for (int64_t i = 0; i < frames.numel(); ++i) frames[i] = static_cast<float>(rng.uniform());
  BitMessage m = BitMessage::random(16, rng);
  Tensorf plain = embed(b, frames, m);
  for (int d : {0, 1, 2, 3}) {
    Tensorf pooled = temporal_pooled_embed(b, frames, m, 1, d);
    for (int64_t i = 0; i < plain.numel(); ++i)
      if (plain[i] != pooled[i]) {
        o.fail("k=1 not bit-exact at d=" + std::to_string(d));
        break;
      }
  }
  Tensorf one({1, 3, 64, 64});
  for (int64_t i = 0; i < one.numel(); ++i) one[i] = static_cast<float>(rng.uniform());
  Tensorf constant_video({5, 3, 64, 64});
  for (int f = 0; f < 5; ++f)
    std::copy(one.data(), one.data() + one.numel(), constant_video.data() + f * one.numel());
  Tensorf single = embed(b, one, m);
  for (int d : {1, 2, 3}) {
    Tensorf pooled = temporal_pooled_embed(b, constant_video, m, 4, d);  // T=5 not divisible
    for (int64_t f = 0; f < 5; ++f)
      for (int64_t i = 0; i < one.numel(); ++i)
        if (pooled[f * one.numel() + i] != single[i]) {
          o.fail("constant-video equality failed at d=" + std::to_string(d));
          f = 5;
          break;
        }
  }

  // wall-clock speedup on 64 frames at model_res
  double speedup = measure_pooling_speedup(b, 64, 4, 1);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "k=4 d=1 speedup %.2fx on 64 frames (need >= 1.3)", speedup);
  o.note(buf);
  if (speedup < 1.3) o.fail("speedup below 1.3x");

  // robustness within 0.03 bit accuracy of k=1 for d in {1,2,3}
  std::vector<std::vector<Tensorf>> videos;
  Rng vrng(77);
  for (int v = 0; v < 3; ++v) videos.push_back(synth_video(8, 160, 160, vrng));
  std::vector<AttackSuite> suites{
      {"identity", {AttackSpec::identity_()}},
      {"valuemetric", {AttackSpec::brightness(0.5), AttackSpec::contrast(1.5)}},
      {"compression", {AttackSpec::jpeg(40)}},
      {"geometric", {AttackSpec::crop(0.71), AttackSpec::horizontal_flip()}}};
  auto mean_acc = [&](int k, int d) {
    EvalReport rep = run_video_eval(b, videos, suites, k, d, kDefaultDetectionTau, 0.2, 5);
    double s = 0;
    int n = 0;
    for (const auto& r : rep.rows)
      if (!r.skipped) {
        s += r.bit_acc;
        ++n;
      }
    return s / n;
  };
  double base = mean_acc(1, 1);
  for (int d : {1, 2, 3}) {
    double acc = mean_acc(4, d);
    std::snprintf(buf, sizeof(buf), "k=4 d=%d bit_acc %.3f vs k=1 %.3f", d, acc, base);
    o.note(buf);
    if (acc < base - 0.03) o.fail("robustness drop beyond 0.03 at d=" + std::to_string(d));
  }
  return o;
}

Outcome criterion9() {
  Outcome o;
  Rng rng(99);
  // smooth, luma-dominant random images (4:2:0 chroma subsampling bounds the
  // attainable fidelity on chroma-noisy content regardless of quality)
  auto smooth = [&](int64_t h, int64_t w) {
    Tensorf coarse({1, 3, 6, 6});
    for (int64_t y = 0; y < 6; ++y)
      for (int64_t x = 0; x < 6; ++x) {
        float v = static_cast<float>(rng.uniform(0.15, 0.85));
        for (int64_t c = 0; c < 3; ++c)
          coarse.at(0, c, y, x) = v + static_cast<float>(rng.uniform(-0.06, 0.06));
      }
    return ops::bilinear_resize(ops::constant(coarse), h, w).value();
  };
  double worst_q100 = 1e9;
  for (int i = 0; i < 10; ++i) {
    Tensorf img = smooth(48, 48);
    worst_q100 = std::min(worst_q100, psnr(img, jpeg_like(img, 100)));
    double prev = -1e9;
    for (int q : {40, 60, 80, 100}) {
      double p = psnr(img, jpeg_like(img, q));
      if (!(p > prev)) {
        o.fail("psnr not strictly increasing in quality at q=" + std::to_string(q));
        break;
      }
      prev = p;
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "q100 roundtrip worst %.1f dB (need >= 40)", worst_q100);
  o.note(buf);
  if (worst_q100 < 40.0) o.fail("quality-100 roundtrip below 40 dB");

  Tensorf gray = Tensorf::full({1, 3, 32, 32}, 0.5f);
  for (int q : {1, 25, 50, 75, 100}) {
    Tensorf out = jpeg_like(gray, q);
    for (int64_t i = 0; i < out.numel(); ++i)
      if (std::abs(out[i] - 0.5f) > 1.0f / 255.0f + 1e-6f) {
        o.fail("constant mid-gray deviated beyond 1/255 at q=" + std::to_string(q));
        q = 101;
        break;
      }
  }
  return o;
}

Outcome criterion10() {
  Outcome o;
  ArchConfig arch;
  arch.model_res = 32;
  arch.n_bits = 8;
  arch.base_channels = 8;
  arch.depth = 2;
  arch.msg_embed_channels = 4;
  TrainConfig cfg;
  cfg.s_min = 32;
  cfg.s_max = 48;
  cfg.batch_size = 2;
  cfg.warmup_steps = 4;
  cfg.stage1_max_steps = 8;
  cfg.stage1_window = 4;
  cfg.stage2_steps = 6;
  cfg.n_start = 0;
  cfg.n_end = 5;
  cfg.stage3_steps = 3;
  cfg.seed = 31;
  auto data = synth_dataset(4, 48, 48, 13);

  auto run_log = [&]() {
    TrainState st = init_train_state(arch, cfg);
    std::string log;
    run_stages(st, cfg, data,
               [&](const TrainState&, const StepMetrics& m) { log += m.to_json_line() + "\n"; });
    return std::make_pair(log, std::move(st));
  };
  auto [log1, st1] = run_log();
  auto [log2, st2] = run_log();
  if (log1 != log2) o.fail("same-seed training logs differ");

  auto eval_imgs = synth_dataset(3, 48, 48, 17);
  auto suites = build_suites(SuiteKind::image);
  EvalReport r1 = run_eval(st1.bundle, eval_imgs, suites, 4.0, 0.2, 3);
  EvalReport r2 = run_eval(st1.bundle, eval_imgs, suites, 4.0, 0.2, 3);
  if (r1.to_json() != r2.to_json() || r1.to_csv() != r2.to_csv())
    o.fail("same-seed eval reports differ");

  fs::path ckpt = fs::temp_directory_path() / "sealkit_acc10.skpt";
  save_checkpoint(ckpt.string(), st1);
  TrainState re = load_checkpoint(ckpt.string());
  for (const auto& [name, t] : st1.bundle.params) {
    const Tensorf& u = re.bundle.params.at(name);
    for (int64_t i = 0; i < t.numel(); ++i)
      if (t[i] != u[i]) {
        o.fail("checkpoint round trip not bit-exact at " + name);
        break;
      }
  }
  // flip one byte in the middle, expect a failed load
  {
    std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    auto size = static_cast<int64_t>(f.tellg());
    f.seekp(size / 2);
    char b;
    f.seekg(size / 2);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x10);
    f.seekp(size / 2);
    f.write(&b, 1);
  }
  bool rejected = false;
  try {
    load_checkpoint(ckpt.string());
  } catch (const DataError&) {
    rejected = true;
  }
  if (!rejected) o.fail("single-byte corruption was not detected");
  fs::remove(ckpt);
  if (o.pass)
    o.note("bit-identical logs and reports, bit-exact checkpoint round trip, corruption caught");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = argc > 1 ? argv[1] : "";
  fs::path artifacts = "acceptance_artifacts";
  bool force = false;
  std::vector<int> criteria;
  for (int i = 2; i < argc; ++i) {
    if (std::strcmp(argv[i], "--artifacts") == 0 && i + 1 < argc)
      artifacts = argv[++i];
    else if (std::strcmp(argv[i], "--force") == 0)
      force = true;
    else
      criteria.push_back(std::atoi(argv[i]));
  }
  if (mode == "run" && argc > 2 && std::isdigit(static_cast<unsigned char>(argv[2][0])))
    criteria.insert(criteria.begin(), std::atoi(argv[2]));

  if (mode == "setup") return do_setup(artifacts, force);
  if (mode == "all") {
    do_setup(artifacts, force);
    criteria = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  } else if (mode != "run" || criteria.empty()) {
    std::fprintf(stderr,
                 "usage: sealkit_acceptance setup [--artifacts DIR] [--force]\n"
                 "       sealkit_acceptance run <criterion...> [--artifacts DIR]\n"
                 "       sealkit_acceptance all [--artifacts DIR]\n");
    return 2;
  }

  // dedupe while preserving order
  std::vector<int> want;
  for (int c : criteria)
    if (std::find(want.begin(), want.end(), c) == want.end()) want.push_back(c);

  int failures = 0;
  for (int c : want) {
    Outcome o;
    switch (c) {
      case 1: o = criterion1(); break;
      case 2: o = criterion2(); break;
      case 3: o = criterion3(); break;
      case 4: o = criterion4(); break;
      case 5: o = criterion5(); break;
      case 6: o = criterion6(artifacts); break;
      case 7: o = criterion7(); break;
      case 8: o = criterion8(artifacts); break;
      case 9: o = criterion9(); break;
      case 10: o = criterion10(); break;
      default:
        o.fail("unknown criterion");
    }
    failures += report(c, o);
  }
  return failures == 0 ? 0 : 1;
}
