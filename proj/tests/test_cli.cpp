#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "sealkit/errors.hpp"
#include "sealkit/checkpoint.hpp"
#include "sealkit/dataset.hpp"
#include "sealkit/image_io.hpp"

using namespace sealkit;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

struct CmdResult {
  int exit_code;
  std::string output;
};

CmdResult run_cli(const std::string& args) {
  std::string cmd = std::string(SEALKIT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 512> buf;
  while (fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  int rc = pclose(pipe);
  return {WEXITSTATUS(rc), out};
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "sealkit_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string micro_config(const std::string& dataset_dir, int steps = 4) {
  nlohmann::json j;
  j["seed"] = 7;
  j["dataset_dir"] = dataset_dir;
  j["checkpoint_every"] = 0;
  j["arch"] = {{"model_res", 16}, {"n_bits", 4},  {"base_channels", 4},
               {"depth", 2},      {"msg_embed_channels", 4}, {"gn_groups", 4}};
  j["train"] = {{"s_min", 16},           {"s_max", 20},     {"batch_size", 2},
                {"warmup_steps", 2},     {"stage1_max_steps", steps},
                {"stage1_window", 2},    {"stage2_steps", 3}, {"n_start", 0},
                {"n_end", 2},            {"stage3_steps", 1}};
  return j.dump(2);
}

// shared micro checkpoint for the inference subcommands
std::string make_ckpt() {
  static std::string path = [] {
    ArchConfig a;
    a.model_res = 16;
    a.n_bits = 4;
    a.base_channels = 4;
    a.depth = 2;
    a.msg_embed_channels = 4;
    TrainConfig c;
    c.s_min = 16;
    c.s_max = 20;
    c.seed = 3;
    TrainState st = init_train_state(a, c);
    st.alpha = 0.2;
    std::string p = (work_dir() / "micro.skpt").string();
    save_checkpoint(p, st);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("frobnicate").exit_code == 2);
  CHECK(run_cli("train").exit_code == 2);  // missing required options
  auto r = run_cli("embed --ckpt " + make_ckpt() + " --in x.png --message zz --out y.png");
  CHECK(r.exit_code == 2);  // bad hex caught as usage
}

TEST_CASE("wrong-length message hex exits 2 with a helpful message") {
  // n_bits = 4 -> exactly one hex char
  Tensorf img = Tensorf::full({1, 3, 20, 20}, 0.5f);
  std::string img_path = (work_dir() / "in.png").string();
  save_image(img_path, img);
  auto r = run_cli("embed --ckpt " + make_ckpt() + " --in " + img_path +
                   " --message abc --out " + (work_dir() / "o.png").string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("exactly 1 characters") != std::string::npos);
}

TEST_CASE("missing dataset directory exits 3 and names the path") {
  std::string cfg_path = (work_dir() / "cfg.json").string();
  std::ofstream(cfg_path) << micro_config((work_dir() / "no_such_dir").string());
  auto r = run_cli("train --config " + cfg_path + " --out " + (work_dir() / "run").string());
  CHECK(r.exit_code == 3);
  CHECK(r.output.find("no_such_dir") != std::string::npos);
}

TEST_CASE("unknown config keys are rejected") {
  std::string cfg_path = (work_dir() / "bad.json").string();
  std::ofstream(cfg_path) << R"({"seed": 1, "surprise": true})";
  auto r = run_cli("train --config " + cfg_path + " --out " + (work_dir() / "run").string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("surprise") != std::string::npos);
}

TEST_CASE("train: two runs with the same seed write identical logs") {
  std::string ds = (work_dir() / "ds").string();
  write_synth_dataset(ds, 3, 20, 20, 55, "ppm");
  std::string cfg_path = (work_dir() / "train_cfg.json").string();
  std::ofstream(cfg_path) << micro_config(ds);

  auto slurp = [](const fs::path& p) {
    std::ifstream f(p);
    return std::string((std::istreambuf_iterator<char>(f)), {});
  };
  std::string out1 = (work_dir() / "run1").string();
  std::string out2 = (work_dir() / "run2").string();
  CHECK(run_cli("train --config " + cfg_path + " --out " + out1).exit_code == 0);
  CHECK(run_cli("train --config " + cfg_path + " --out " + out2).exit_code == 0);
  std::string log1 = slurp(fs::path(out1) / "train_log.jsonl");
  CHECK(log1 == slurp(fs::path(out2) / "train_log.jsonl"));
  CHECK(log1.find("\"stage\":1") != std::string::npos);
  CHECK(fs::exists(fs::path(out1) / "final.skpt"));
}

TEST_CASE("embed/extract/detect micro round trip and exit codes") {
  Rng rng(5);
  auto img = synth_dataset(1, 24, 24, 8)[0];
  std::string img_path = (work_dir() / "photo.png").string();
  save_image(img_path, img);
  std::string out_path = (work_dir() / "marked.png").string();

  auto r = run_cli("embed --ckpt " + make_ckpt() + " --in " + img_path +
                   " --message a --out " + out_path);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out_path));

  r = run_cli("extract --ckpt " + make_ckpt() + " --in " + out_path);
  CHECK(r.exit_code == 0);
  auto j = nlohmann::json::parse(r.output);
  CHECK(j["bits"].get<std::string>().size() == 4);
  CHECK(j["soft"].size() == 4);

  // detect on an untrained model: report must be well-formed; with n_bits=4
  // the best attainable p is 1/16, so nothing is detectable at tau=4
  r = run_cli("detect --ckpt " + make_ckpt() + " --in " + out_path + " --message a --tau 4");
  CHECK(r.exit_code == 1);
  j = nlohmann::json::parse(r.output);
  CHECK(j["detected"] == false);
  CHECK(j.contains("neg_log10_p"));
  CHECK(j.contains("hamming"));

  // trivially detectable at tau 0
  r = run_cli("detect --ckpt " + make_ckpt() + " --in " + out_path + " --message a --tau 0");
  CHECK(r.exit_code == 0);

  r = run_cli("detect --ckpt " + make_ckpt() + " --in " + (work_dir() / "nope.png").string() +
              " --message a");
  CHECK(r.exit_code == 3);
}

TEST_CASE("evaluate: identity suite writes schema-valid reports") {
  std::string ds = (work_dir() / "eval_ds").string();
  write_synth_dataset(ds, 2, 24, 24, 66, "png");
  std::string rep = (work_dir() / "report").string();
  auto r = run_cli("evaluate --ckpt " + make_ckpt() + " --dataset " + ds +
                   " --suite identity --out " + rep);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("identity") != std::string::npos);
  auto j = nlohmann::json::parse(std::ifstream(rep + ".json"));
  CHECK(j["schema_version"] == 1);
  CHECK(j["attacks"].size() == 1);
  CHECK(fs::exists(rep + ".csv"));

  CHECK(run_cli("evaluate --ckpt " + make_ckpt() + " --dataset " + ds + " --suite bogus")
            .exit_code == 2);
}

TEST_CASE("video: k=1 report on one constant-ish video") {
  std::string frames = (work_dir() / "frames/v0").string();
  fs::create_directories(frames);
  Rng rng(9);
  auto vid = synth_video(3, 24, 24, rng);
  for (size_t i = 0; i < vid.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "f_%03zu.png", i);
    save_image((fs::path(frames) / name).string(), vid[i]);
  }
  std::string rep = (work_dir() / "vreport").string();
  auto r = run_cli("video --ckpt " + make_ckpt() + " --frames " + frames +
                   " -k 1 -d 1 --out " + rep);
  CHECK(r.exit_code == 0);
  auto j = nlohmann::json::parse(std::ifstream(rep + ".json"));
  CHECK(j["suite_id"] == "video");
  int skipped = 0, present = 0;
  for (const auto& row : j["attacks"]) {
    skipped += row["skipped"].get<bool>();
    ++present;
  }
  CHECK(present == 33);  // 1 identity + 9 valuemetric + 13 compression + 6 geometric + 4 combined
  if (r.output.find("skipped") == std::string::npos) CHECK(skipped == 16);
}

TEST_SUITE_END();
