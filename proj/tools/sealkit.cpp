// sealkit command-line front end: train / embed / extract / detect /
// evaluate / video.
//
// Exit codes: 0 success (or detected), 1 not detected (detect only),
// 2 usage error, 3 data error, 4 numeric abort.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sealkit/checkpoint.hpp"
#include "sealkit/config.hpp"
#include "sealkit/dataset.hpp"
#include "sealkit/errors.hpp"
#include "sealkit/harness.hpp"
#include "sealkit/image_io.hpp"
#include "sealkit/metrics.hpp"

namespace fs = std::filesystem;
using namespace sealkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotDetected = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void set_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

std::vector<Tensorf> load_dataset(const std::string& dir, int limit) {
  std::vector<std::string> paths = list_images(dir);
  if (limit > 0 && static_cast<int>(paths.size()) > limit)
    paths.resize(static_cast<size_t>(limit));
  std::vector<Tensorf> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_image(p));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write " + path);
  f << text;
}

std::vector<AttackSuite> select_suites(const std::string& name) {
  SuiteKind kind = name == "video" ? SuiteKind::video : SuiteKind::image;
  std::vector<AttackSuite> all = build_suites(kind);
  if (name == "image" || name == "video") return all;
  for (auto& s : all)
    if (s.category == name) return {s};
  throw UsageError("unknown suite \"" + name +
                   "\" (expected image, video, identity, valuemetric, compression, geometric or "
                   "combined)");
}

void print_category_line(const EvalReport& rep) {
  // Table order: identity, valuemetric, compression, geometric, combined
  auto acc = rep.category_bit_acc();
  auto lp = rep.category_neg_log10_p();
  std::printf("%-12s %10s %14s\n", "category", "bit_acc", "neg_log10_p");
  for (size_t i = 0; i < acc.size(); ++i)
    std::printf("%-12s %10.4f %14.3f\n", acc[i].first.c_str(), acc[i].second, lp[i].second);
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume, int64_t seed_override) {
  RunConfig cfg = RunConfig::from_file(config_path);
  if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
  if (cfg.dataset_dir.empty()) throw UsageError("config: dataset_dir is required for train");
  std::vector<Tensorf> data = load_dataset(cfg.dataset_dir, cfg.dataset_limit);

  fs::create_directories(out_dir);
  TrainState st = resume.empty() ? init_train_state(cfg.arch, cfg.train)
                                 : load_checkpoint(resume);

  std::ofstream log(fs::path(out_dir) / "train_log.jsonl",
                    resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot open training log in " + out_dir);

  int64_t ckpt_every = cfg.checkpoint_every;
  StepCallback on_step = [&](const TrainState& s, const StepMetrics& m) {
    log << m.to_json_line() << "\n";
    if (ckpt_every > 0 && m.step % ckpt_every == 0) {
      save_checkpoint((fs::path(out_dir) / ("ckpt_" + std::to_string(m.step) + ".skpt")).string(),
                      s);
    }
    if (m.step % 25 == 0)
      std::printf("step %lld stage %d alpha %.3f bit_acc %.4f loss_msg %.4f\n",
                  static_cast<long long>(m.step), m.stage, m.alpha, m.bit_acc, m.loss_msg);
  };

  RunResult rr = run_stages(st, cfg.train, data, on_step);
  log.flush();
  save_checkpoint((fs::path(out_dir) / "final.skpt").string(), st);
  std::printf("done: %lld steps, stage-1 %s\n", static_cast<long long>(st.step),
              rr.stage1_saturated ? "saturated" : "NOT saturated (budget exhausted)");
  return kExitOk;
}

int cmd_embed(const std::string& ckpt, const std::string& in, const std::string& hex,
              const std::string& out, double alpha, bool no_jnd) {
  TrainState st = load_checkpoint(ckpt);
  BitMessage m = BitMessage::from_hex(hex, st.bundle.arch.n_bits);
  Tensorf img = load_image(in);
  double a = alpha >= 0 ? alpha : st.alpha;
  Tensorf x_w = embed_full(st.bundle, img, m, a, !no_jnd);
  save_image(out, x_w);
  std::printf("embedded %d bits at alpha %.3f, psnr %.2f dB -> %s\n", st.bundle.arch.n_bits, a,
              psnr(img, x_w), out.c_str());
  return kExitOk;
}

int cmd_extract(const std::string& ckpt, const std::string& in) {
  TrainState st = load_checkpoint(ckpt);
  Tensorf img = load_image(in);
  int r = st.bundle.arch.model_res;
  Tensorf low = nd::bilinear_resize(nd::constant(img), r, r).value();
  Tensorf soft = extract(st.bundle, low);
  BitMessage bits = threshold(soft);
  nlohmann::json j;
  j["bits"] = bits.to_bit_string();
  j["hex"] = st.bundle.arch.n_bits % 4 == 0 ? bits.to_hex() : "";
  j["soft"] = nlohmann::json::array();
  for (int64_t i = 0; i < soft.numel(); ++i) j["soft"].push_back(soft[i]);
  std::printf("%s\n", j.dump(2).c_str());
  return kExitOk;
}

int cmd_detect(const std::string& ckpt, const std::string& in, const std::string& hex,
               double tau) {
  TrainState st = load_checkpoint(ckpt);
  BitMessage ref = BitMessage::from_hex(hex, st.bundle.arch.n_bits);
  Tensorf img = load_image(in);
  int r = st.bundle.arch.model_res;
  Tensorf low = nd::bilinear_resize(nd::constant(img), r, r).value();
  Tensorf soft = extract(st.bundle, low);
  DetectionReport rep = detect(soft, ref, tau);
  nlohmann::json j;
  j["extracted_hex"] = st.bundle.arch.n_bits % 4 == 0 ? rep.extracted_bits.to_hex() : "";
  j["extracted_bits"] = rep.extracted_bits.to_bit_string();
  j["hamming"] = rep.hamming;
  j["bit_accuracy"] = rep.bit_accuracy;
  j["p_value"] = rep.p_value;
  j["neg_log10_p"] = rep.neg_log10_p;
  j["tau"] = tau;
  j["detected"] = rep.detected;
  std::printf("%s\n", j.dump(2).c_str());
  return rep.detected ? kExitOk : kExitNotDetected;
}

int cmd_evaluate(const std::string& ckpt, const std::string& dataset_dir,
                 const std::string& suite, const std::string& out_report, double tau,
                 double alpha, uint64_t seed, int limit) {
  TrainState st = load_checkpoint(ckpt);
  std::vector<Tensorf> images = load_dataset(dataset_dir, limit);
  double a = alpha >= 0 ? alpha : st.alpha;
  EvalReport rep = run_eval(st.bundle, images, select_suites(suite), tau, a, seed);
  if (!out_report.empty()) {
    write_text(out_report + ".json", rep.to_json());
    write_text(out_report + ".csv", rep.to_csv());
  }
  print_category_line(rep);
  if (std::isfinite(rep.psnr_mean))
    std::printf("quality: psnr %.2f dB ssim %.4f over %d images\n", rep.psnr_mean, rep.ssim_mean,
                rep.n_images);
  return kExitOk;
}

int cmd_video(const std::string& ckpt, const std::vector<std::string>& frame_dirs, int k, int d,
              const std::string& out_report, double tau, double alpha, uint64_t seed) {
  TrainState st = load_checkpoint(ckpt);
  std::vector<std::vector<Tensorf>> videos;
  for (const auto& dir : frame_dirs) {
    std::vector<Tensorf> frames;
    for (const auto& p : list_images(dir)) frames.push_back(load_image(p));
    videos.push_back(std::move(frames));
  }
  double a = alpha >= 0 ? alpha : st.alpha;
  EvalReport rep =
      run_video_eval(st.bundle, videos, select_suites("video"), k, d, tau, a, seed);
  if (!out_report.empty()) {
    write_text(out_report + ".json", rep.to_json());
    write_text(out_report + ".csv", rep.to_csv());
  }
  print_category_line(rep);
  std::printf("embed speedup vs k=1: %.2fx\n", rep.speedup);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sealkit: invisible image/video watermarking toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP thread count (0 = hardware default)");

  // train
  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  std::string config_path, out_dir, resume;
  int64_t seed_override = -1;
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_option("--seed", seed_override, "override config seed");

  // embed
  auto* embed_c = app.add_subcommand("embed", "watermark an image");
  std::string ckpt, img_in, img_out, msg_hex;
  double alpha = -1;
  bool no_jnd = false;
  embed_c->add_option("--ckpt", ckpt, "checkpoint")->required();
  embed_c->add_option("--in", img_in, "input image (.png/.ppm)")->required();
  embed_c->add_option("--message", msg_hex, "payload hex (n_bits/4 chars)")->required();
  embed_c->add_option("--out", img_out, "output image")->required();
  embed_c->add_option("--alpha", alpha, "watermark strength (default: checkpoint alpha)");
  embed_c->add_flag("--no-jnd", no_jnd, "skip the perceptual attenuation map");

  // extract
  auto* extract_c = app.add_subcommand("extract", "read the soft message from an image");
  std::string ex_ckpt, ex_in;
  extract_c->add_option("--ckpt", ex_ckpt, "checkpoint")->required();
  extract_c->add_option("--in", ex_in, "input image")->required();

  // detect
  auto* detect_c = app.add_subcommand("detect", "detect a reference message (exit 0 iff found)");
  std::string dt_ckpt, dt_in, dt_hex;
  double tau = kDefaultDetectionTau;
  detect_c->add_option("--ckpt", dt_ckpt, "checkpoint")->required();
  detect_c->add_option("--in", dt_in, "input image")->required();
  detect_c->add_option("--message", dt_hex, "reference payload hex")->required();
  detect_c->add_option("--tau", tau, "detection threshold on -log10(p)");

  // evaluate
  auto* eval_c = app.add_subcommand("evaluate", "run an attack suite over a dataset");
  std::string ev_ckpt, ev_dataset, ev_suite = "image", ev_out;
  double ev_tau = kDefaultDetectionTau, ev_alpha = -1;
  uint64_t ev_seed = 1;
  int ev_limit = 0;
  eval_c->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  eval_c->add_option("--dataset", ev_dataset, "image directory")->required();
  eval_c->add_option("--suite", ev_suite, "image | identity | valuemetric | compression | geometric | combined");
  eval_c->add_option("--out", ev_out, "report base path (writes .json and .csv)");
  eval_c->add_option("--tau", ev_tau, "detection threshold");
  eval_c->add_option("--alpha", ev_alpha, "embedding strength (default: checkpoint alpha)");
  eval_c->add_option("--seed", ev_seed, "evaluation seed (reference message)");
  eval_c->add_option("--limit", ev_limit, "use at most this many images");

  // video
  auto* video_c = app.add_subcommand("video", "evaluate temporal-pooled video watermarking");
  std::string vd_ckpt, vd_out;
  std::vector<std::string> vd_dirs;
  int vd_k = 4, vd_d = 1;
  double vd_tau = kDefaultDetectionTau, vd_alpha = -1;
  uint64_t vd_seed = 1;
  video_c->add_option("--ckpt", vd_ckpt, "checkpoint")->required();
  video_c->add_option("--frames", vd_dirs, "frame directories (one per video)")->required();
  video_c->add_option("-k,--pool", vd_k, "temporal pooling kernel/stride");
  video_c->add_option("-d,--depth", vd_d, "down-block index after which pooling is inserted");
  video_c->add_option("--out", vd_out, "report base path");
  video_c->add_option("--tau", vd_tau, "detection threshold");
  video_c->add_option("--alpha", vd_alpha, "embedding strength");
  video_c->add_option("--seed", vd_seed, "evaluation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  set_threads(threads);
  try {
    if (*train) return cmd_train(config_path, out_dir, resume, seed_override);
    if (*embed_c) return cmd_embed(ckpt, img_in, msg_hex, img_out, alpha, no_jnd);
    if (*extract_c) return cmd_extract(ex_ckpt, ex_in);
    if (*detect_c) return cmd_detect(dt_ckpt, dt_in, dt_hex, tau);
    if (*eval_c)
      return cmd_evaluate(ev_ckpt, ev_dataset, ev_suite, ev_out, ev_tau, ev_alpha, ev_seed,
                          ev_limit);
    if (*video_c)
      return cmd_video(vd_ckpt, vd_dirs, vd_k, vd_d, vd_out, vd_tau, vd_alpha, vd_seed);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitUsage;
}
