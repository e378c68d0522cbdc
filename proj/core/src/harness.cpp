#include "sealkit/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "sealkit/errors.hpp"
#include "sealkit/jnd.hpp"
#include "sealkit/metrics.hpp"

namespace ops = sealkit::nd;
using nlohmann::json;

namespace sealkit {

namespace {

const char* kCategoryOrder[5] = {"identity", "valuemetric", "compression", "geometric",
                                 "combined"};

Tensorf resize_tensor(const Tensorf& t, int64_t h, int64_t w) {
  if (t.dim(2) == h && t.dim(3) == w) return t;
  return ops::bilinear_resize(ops::constant(t), h, w).value();
}

std::string hash_hex(uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double json_safe(double v) { return std::isfinite(v) ? v : 0.0; }

json quality_json(double v) {
  if (std::isinf(v)) return json("inf");
  return json(v);
}

std::vector<std::pair<std::string, double>> aggregate(const std::vector<AttackRow>& rows,
                                                      bool logp) {
  std::vector<std::pair<std::string, double>> out;
  for (const char* cat : kCategoryOrder) {
    double sum = 0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.skipped || r.category != cat) continue;
      sum += logp ? r.neg_log10_p : r.bit_acc;
      ++n;
    }
    if (n > 0) out.emplace_back(cat, sum / n);
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, double>> EvalReport::category_bit_acc() const {
  return aggregate(rows, false);
}
std::vector<std::pair<std::string, double>> EvalReport::category_neg_log10_p() const {
  return aggregate(rows, true);
}

std::string EvalReport::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["suite_id"] = suite_id;
  j["model_hash"] = model_hash;
  j["seed"] = seed;
  j["alpha"] = alpha;
  j["tau"] = tau;
  j["n_images"] = n_images;
  j["quality"] = {{"psnr", quality_json(psnr_mean)}, {"ssim", quality_json(ssim_mean)}};
  if (speedup > 0) j["speedup"] = speedup;
  j["attacks"] = json::array();
  for (const auto& r : rows) {
    json a = {{"category", r.category}, {"id", r.id}, {"skipped", r.skipped}};
    if (!r.skipped) {
      a["bit_acc"] = json_safe(r.bit_acc);
      a["neg_log10_p"] = json_safe(r.neg_log10_p);
      a["detected_frac"] = json_safe(r.detected_frac);
    }
    j["attacks"].push_back(a);
  }
  j["categories"] = json::object();
  for (const auto& [cat, v] : category_bit_acc()) j["categories"][cat]["bit_acc"] = json_safe(v);
  for (const auto& [cat, v] : category_neg_log10_p())
    j["categories"][cat]["neg_log10_p"] = json_safe(v);
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "category,attack,skipped,bit_acc,neg_log10_p,detected_frac\n";
  for (const auto& r : rows) {
    os << r.category << "," << r.id << "," << (r.skipped ? 1 : 0) << ",";
    if (r.skipped) {
      os << ",,\n";
      continue;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f\n", r.bit_acc, r.neg_log10_p,
                  r.detected_frac);
    os << buf;
  }
  return os.str();
}

Tensorf embed_full(const ModelBundle& bundle, const Tensorf& image, const BitMessage& m,
                   double alpha, bool use_jnd) {
  nd::check(image.rank() == 4 && image.dim(1) == 3, "embed_full: [1,3,H,W] image required");
  Tensorf jnd = use_jnd ? jnd_map(image) : Tensorf::full({image.dim(0), 1, image.dim(2), image.dim(3)}, 1.0f);
  ParamVars p = wrap_params(bundle, {});
  return embed_full_graph(bundle.arch, p, ops::constant(image),
                          message_pm1_rows(m, image.dim(0)), alpha, jnd)
      .value();
}

namespace {

struct PerImageStats {
  std::vector<double> bit_acc;  // per attack row
  std::vector<double> logp;
  std::vector<double> detected;
  double psnr = 0, ssim = 0;
};

}  // namespace

EvalReport run_eval(const ModelBundle& bundle, const std::vector<Tensorf>& images,
                    const std::vector<AttackSuite>& suites, double tau, double alpha,
                    uint64_t seed) {
  nd::check(!images.empty(), "run_eval: empty dataset");
  const ArchConfig& arch = bundle.arch;
  for (const auto& img : images)
    nd::check(img.dim(2) >= arch.model_res / 2 && img.dim(3) >= arch.model_res / 2,
              "run_eval: image below minimum resolution");

  Rng ref_rng(seed);
  BitMessage ref = BitMessage::random(arch.n_bits, ref_rng);
  bool codec_ok = external_encoder_available();

  std::vector<const AttackSpec*> flat;
  std::vector<std::string> flat_cat;
  for (const auto& suite : suites)
    for (const auto& spec : suite.specs) {
      flat.push_back(&spec);
      flat_cat.push_back(suite.category);
    }

  int64_t n_img = static_cast<int64_t>(images.size());
  std::vector<PerImageStats> stats(static_cast<size_t>(n_img));

#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n_img; ++i) {
    const Tensorf& x = images[static_cast<size_t>(i)];
    PerImageStats& s = stats[static_cast<size_t>(i)];
    Tensorf x_w = embed_full(bundle, x, ref, alpha);
    s.psnr = psnr(x, x_w);
    s.ssim = ssim(x, x_w);
    s.bit_acc.resize(flat.size());
    s.logp.resize(flat.size());
    s.detected.resize(flat.size());
    for (size_t a = 0; a < flat.size(); ++a) {
      const AttackSpec& spec = *flat[a];
      if (spec.is_external() && !codec_ok) continue;
      Tensorf x_att = apply_attack_eval(spec, x_w);
      Tensorf x_ext = resize_tensor(x_att, arch.model_res, arch.model_res);
      Tensorf soft = extract(bundle, x_ext);
      DetectionReport rep = detect(soft, ref, tau);
      s.bit_acc[a] = rep.bit_accuracy;
      s.logp[a] = rep.neg_log10_p;
      s.detected[a] = rep.detected ? 1.0 : 0.0;
    }
  }

  EvalReport rep;
  rep.suite_id = suites.size() == 1 ? suites[0].category : "image";
  rep.model_hash = hash_hex(bundle.content_hash());
  rep.seed = seed;
  rep.alpha = alpha;
  rep.tau = tau;
  rep.n_images = static_cast<int>(n_img);
  double ps = 0, ss = 0;
  bool psnr_inf = false;
  for (const auto& s : stats) {
    if (std::isinf(s.psnr))
      psnr_inf = true;
    else
      ps += s.psnr;
    ss += s.ssim;
  }
  rep.psnr_mean = psnr_inf ? std::numeric_limits<double>::infinity() : ps / static_cast<double>(n_img);
  rep.ssim_mean = ss / static_cast<double>(n_img);

  for (size_t a = 0; a < flat.size(); ++a) {
    AttackRow row;
    row.category = flat_cat[a];
    row.id = flat[a]->id();
    row.skipped = flat[a]->is_external() && !codec_ok;
    if (!row.skipped) {
      for (const auto& s : stats) {
        row.bit_acc += s.bit_acc[a];
        row.neg_log10_p += s.logp[a];
        row.detected_frac += s.detected[a];
      }
      row.bit_acc /= static_cast<double>(n_img);
      row.neg_log10_p /= static_cast<double>(n_img);
      row.detected_frac /= static_cast<double>(n_img);
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace {

Tensorf stack_frames(const std::vector<Tensorf>& frames) {
  nd::check(!frames.empty(), "empty frame sequence");
  int64_t h = frames[0].dim(2), w = frames[0].dim(3);
  Tensorf out({static_cast<int64_t>(frames.size()), 3, h, w});
  for (size_t f = 0; f < frames.size(); ++f) {
    nd::check(frames[f].dim(2) == h && frames[f].dim(3) == w, "frame dimensions differ");
    std::copy(frames[f].data(), frames[f].data() + frames[f].numel(),
              out.data() + static_cast<int64_t>(f) * 3 * h * w);
  }
  return out;
}

// Eq.-9 style video embedding with pooled low-res watermark computation.
Tensorf embed_video(const ModelBundle& bundle, const Tensorf& frames, const BitMessage& m, int k,
                    int d, double alpha) {
  const ArchConfig& arch = bundle.arch;
  int64_t t = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  Tensorf low = resize_tensor(frames, arch.model_res, arch.model_res);
  Tensorf wm = temporal_pooled_embed(bundle, low, m, k, d);  // [T,3,r,r]
  Tensorf wm_up = resize_tensor(wm, h, w);
  Tensorf jnd = jnd_map(frames);  // [T,1,H,W]
  Tensorf out(frames.shape());
  for (int64_t f = 0; f < t; ++f)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < h * w; ++i) {
        int64_t pix = ((f * 3 + c) * h * w) + i;
        float v = frames[pix] +
                  static_cast<float>(alpha) * wm_up[pix] * jnd[f * h * w + i];
        out[pix] = v < 0 ? 0 : (v > 1 ? 1 : v);
      }
  return out;
}

}  // namespace

double measure_pooling_speedup(const ModelBundle& bundle, int frames, int k, int d,
                               uint64_t seed) {
  Rng rng(seed);
  int r = bundle.arch.model_res;
  Tensorf stack({frames, 3, r, r});
  for (int64_t i = 0; i < stack.numel(); ++i)
    stack[i] = static_cast<float>(rng.uniform());
  BitMessage m = BitMessage::random(bundle.arch.n_bits, rng);

  auto time_embed = [&](int kk, int dd) {
    // one warmup, then best of two
    temporal_pooled_embed(bundle, stack, m, kk, dd);
    double best = 1e300;
    for (int rep = 0; rep < 2; ++rep) {
      auto t0 = std::chrono::steady_clock::now();
      temporal_pooled_embed(bundle, stack, m, kk, dd);
      auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
  };
  double base = time_embed(1, d);
  double pooled = time_embed(k, d);
  return base / pooled;
}

EvalReport run_video_eval(const ModelBundle& bundle,
                          const std::vector<std::vector<Tensorf>>& videos,
                          const std::vector<AttackSuite>& suites, int k, int d, double tau,
                          double alpha, uint64_t seed) {
  nd::check(!videos.empty(), "run_video_eval: no videos");
  const ArchConfig& arch = bundle.arch;
  Rng ref_rng(seed);
  BitMessage ref = BitMessage::random(arch.n_bits, ref_rng);
  bool codec_ok = external_encoder_available();

  std::vector<const AttackSpec*> flat;
  std::vector<std::string> flat_cat;
  for (const auto& suite : suites)
    for (const auto& spec : suite.specs) {
      flat.push_back(&spec);
      flat_cat.push_back(suite.category);
    }

  EvalReport rep;
  rep.suite_id = "video";
  rep.model_hash = hash_hex(bundle.content_hash());
  rep.seed = seed;
  rep.alpha = alpha;
  rep.tau = tau;
  rep.n_images = static_cast<int>(videos.size());
  rep.rows.resize(flat.size());

  double ps = 0, ss = 0;
  std::vector<double> acc(flat.size(), 0), lp(flat.size(), 0), det(flat.size(), 0);
  for (const auto& video : videos) {
    Tensorf frames = stack_frames(video);
    Tensorf x_w = embed_video(bundle, frames, ref, k, d, alpha);
    ps += psnr(frames, x_w);
    ss += ssim(frames, x_w);
    for (size_t a = 0; a < flat.size(); ++a) {
      const AttackSpec& spec = *flat[a];
      if (spec.is_external() && !codec_ok) continue;
      Tensorf x_att = apply_attack_eval(spec, x_w);
      Tensorf x_ext = resize_tensor(x_att, arch.model_res, arch.model_res);
      Tensorf soft = extract(bundle, x_ext);  // [T, n]
      // average soft messages over frames, then threshold
      Tensorf mean_soft({1, arch.n_bits});
      for (int64_t b = 0; b < arch.n_bits; ++b) {
        double s = 0;
        for (int64_t f = 0; f < soft.dim(0); ++f) s += soft[f * arch.n_bits + b];
        mean_soft[b] = static_cast<float>(s / static_cast<double>(soft.dim(0)));
      }
      DetectionReport r = detect(mean_soft, ref, tau);
      acc[a] += r.bit_accuracy;
      lp[a] += r.neg_log10_p;
      det[a] += r.detected ? 1 : 0;
    }
  }
  double nv = static_cast<double>(videos.size());
  rep.psnr_mean = ps / nv;
  rep.ssim_mean = ss / nv;
  for (size_t a = 0; a < flat.size(); ++a) {
    AttackRow& row = rep.rows[a];
    row.category = flat_cat[a];
    row.id = flat[a]->id();
    row.skipped = flat[a]->is_external() && !codec_ok;
    if (!row.skipped) {
      row.bit_acc = acc[a] / nv;
      row.neg_log10_p = lp[a] / nv;
      row.detected_frac = det[a] / nv;
    }
  }
  rep.speedup = measure_pooling_speedup(bundle, 16, k, d, seed);
  return rep;
}

NullCheck monte_carlo_null_check(const ModelBundle& bundle, const std::vector<Tensorf>& images,
                                 uint64_t seed) {
  Rng rng(seed);
  BitMessage ref = BitMessage::random(bundle.arch.n_bits, rng);
  NullCheck nc;
  nc.images = static_cast<int>(images.size());
  for (const auto& img : images) {
    Tensorf low = resize_tensor(img, bundle.arch.model_res, bundle.arch.model_res);
    Tensorf soft = extract(bundle, low);
    DetectionReport r = detect(soft, ref, kDefaultDetectionTau);
    nc.max_neg_log10_p = std::max(nc.max_neg_log10_p, r.neg_log10_p);
    nc.mean_bit_acc += r.bit_accuracy;
  }
  if (nc.images > 0) nc.mean_bit_acc /= nc.images;
  return nc;
}

// ---- ablations ----

std::string AblationTable::to_json() const {
  json j;
  j["kind"] = kind;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    json row = {{"label", r.label}, {"collapsed", r.collapsed}, {"psnr", quality_json(r.psnr)}};
    for (const auto& [cat, v] : r.category_bit_acc) row["bit_acc"][cat] = json_safe(v);
    j["rows"].push_back(row);
  }
  return j.dump(2);
}

std::string AblationTable::to_csv() const {
  std::ostringstream os;
  os << "label,collapsed,psnr";
  for (const char* cat : kCategoryOrder) os << "," << cat;
  os << "\n";
  for (const auto& r : rows) {
    os << r.label << "," << (r.collapsed ? 1 : 0) << "," << r.psnr;
    for (const char* cat : kCategoryOrder) {
      double v = 0;
      for (const auto& [c, x] : r.category_bit_acc)
        if (c == cat) v = x;
      os << "," << v;
    }
    os << "\n";
  }
  return os.str();
}

namespace {

AblationRow run_variant(const std::string& label, const ArchConfig& arch, const TrainConfig& cfg,
                        const std::vector<Tensorf>& train_data,
                        const std::vector<Tensorf>& eval_images, uint64_t seed) {
  TrainConfig c = cfg;
  c.seed = seed;
  TrainState st = init_train_state(arch, c);
  RunResult rr = run_stages(st, c, train_data);

  // mean bit accuracy over the final window of the log
  double tail_acc = 0;
  int tail_n = 0;
  for (size_t i = rr.log.size() >= 50 ? rr.log.size() - 50 : 0; i < rr.log.size(); ++i) {
    tail_acc += rr.log[i].bit_acc;
    ++tail_n;
  }
  if (tail_n > 0) tail_acc /= tail_n;

  AblationRow row;
  row.label = label;
  row.collapsed = std::abs(tail_acc - 0.5) <= 0.05;
  EvalReport rep =
      run_eval(st.bundle, eval_images, build_suites(SuiteKind::image), kDefaultDetectionTau,
               c.alpha1, seed);
  row.psnr = rep.psnr_mean;
  row.category_bit_acc = rep.category_bit_acc();
  return row;
}

}  // namespace

AblationTable run_ablation(AblationKind kind, const ArchConfig& arch, const TrainConfig& base,
                           const std::vector<Tensorf>& train_data,
                           const std::vector<Tensorf>& eval_images, uint64_t seed) {
  AblationTable table;
  auto add = [&](const std::string& label, TrainConfig cfg) {
    table.rows.push_back(run_variant(label, arch, cfg, train_data, eval_images, seed));
  };
  switch (kind) {
    case AblationKind::losses: {
      table.kind = "a_losses";
      add("baseline", base);
      TrainConfig p01 = base;
      p01.lambda_perc = 0.1;
      add("perc_0.1", p01);
      TrainConfig p10 = base;
      p10.lambda_perc = 1.0;
      add("perc_1.0", p10);
      TrainConfig nod = base;
      nod.lambda_adv = 0.0;
      add("no_discriminator", nod);
      TrainConfig noj = base;
      noj.disable_jnd = true;
      add("no_jnd", noj);
      break;
    }
    case AblationKind::boosting: {
      table.kind = "b_boosting";
      for (double b : {0.5, 1.0, 2.5}) {
        TrainConfig c = base;
        c.beta = b;
        add("beta_" + std::to_string(b).substr(0, 3), c);
      }
      break;
    }
    case AblationKind::schedule: {
      table.kind = "c_schedule";
      TrainConfig ns = base;
      ns.alpha0 = ns.alpha1;  // no watermark scaling
      add("no_scaling", ns);
      TrainConfig nd_ = base;
      nd_.adv_from_start = true;
      add("no_disc_delay", nd_);
      break;
    }
    case AblationKind::resolution: {
      table.kind = "d_resolution";
      add("highres", base);
      TrainConfig fr = base;
      fr.fixed_resolution = true;
      add("fixed_res", fr);
      break;
    }
  }
  return table;
}

}  // namespace sealkit
