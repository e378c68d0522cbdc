#include "sealkit/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>

#include "sealkit/errors.hpp"

namespace sealkit {

using nlohmann::json;

namespace {

// strict field reader: every key present in `j` must be consumed
class Fields {
 public:
  Fields(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j.is_object()) throw UsageError("config: " + scope_ + " must be an object");
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw UsageError("config: bad value type for " + scope_ + "." + key);
    }
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw UsageError("config: unknown key \"" + scope_ + "." + it.key() + "\"");
  }

 private:
  const json& j_;
  std::string scope_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: JSON parse error: ") + e.what());
  }
  RunConfig c;
  Fields top(j, "");
  top.get("dataset_dir", c.dataset_dir);
  top.get("suite", c.suite);
  top.get("checkpoint_every", c.checkpoint_every);
  top.get("dataset_limit", c.dataset_limit);
  uint64_t seed = c.train.seed;
  top.get("seed", seed);
  c.train.seed = seed;

  if (const json* a = top.sub("arch")) {
    Fields f(*a, "arch");
    f.get("model_res", c.arch.model_res);
    f.get("n_bits", c.arch.n_bits);
    f.get("base_channels", c.arch.base_channels);
    f.get("depth", c.arch.depth);
    f.get("msg_embed_channels", c.arch.msg_embed_channels);
    f.get("gn_groups", c.arch.gn_groups);
    f.finish();
  }
  if (const json* t = top.sub("train")) {
    Fields f(*t, "train");
    f.get("lambda_msg", c.train.lambda_msg);
    f.get("lambda_adv", c.train.lambda_adv);
    f.get("lambda_perc", c.train.lambda_perc);
    f.get("beta", c.train.beta);
    f.get("alpha0", c.train.alpha0);
    f.get("alpha1", c.train.alpha1);
    f.get("n_start", c.train.n_start);
    f.get("n_end", c.train.n_end);
    f.get("s_min", c.train.s_min);
    f.get("s_max", c.train.s_max);
    f.get("lr", c.train.lr);
    f.get("warmup_steps", c.train.warmup_steps);
    f.get("weight_decay", c.train.weight_decay);
    f.get("adam_beta1", c.train.adam_beta1);
    f.get("adam_beta2", c.train.adam_beta2);
    f.get("adam_eps", c.train.adam_eps);
    f.get("batch_size", c.train.batch_size);
    f.get("stage1_max_steps", c.train.stage1_max_steps);
    f.get("stage1_saturation", c.train.stage1_saturation);
    f.get("stage1_window", c.train.stage1_window);
    f.get("stage1_mild_frac", c.train.stage1_mild_frac);
    f.get("stage2_steps", c.train.stage2_steps);
    f.get("stage3_steps", c.train.stage3_steps);
    f.get("adv_from_start", c.train.adv_from_start);
    f.get("disable_jnd", c.train.disable_jnd);
    f.get("fixed_resolution", c.train.fixed_resolution);
    f.finish();
  }
  top.finish();
  c.arch.validate();
  c.train.validate(c.arch);
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("config file not found: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string RunConfig::to_json_text() const {
  json j;
  j["seed"] = train.seed;
  j["dataset_dir"] = dataset_dir;
  j["suite"] = suite;
  j["checkpoint_every"] = checkpoint_every;
  j["dataset_limit"] = dataset_limit;
  j["arch"] = {{"model_res", arch.model_res},
               {"n_bits", arch.n_bits},
               {"base_channels", arch.base_channels},
               {"depth", arch.depth},
               {"msg_embed_channels", arch.msg_embed_channels},
               {"gn_groups", arch.gn_groups}};
  j["train"] = {{"lambda_msg", train.lambda_msg},
                {"lambda_adv", train.lambda_adv},
                {"lambda_perc", train.lambda_perc},
                {"beta", train.beta},
                {"alpha0", train.alpha0},
                {"alpha1", train.alpha1},
                {"n_start", train.n_start},
                {"n_end", train.n_end},
                {"s_min", train.s_min},
                {"s_max", train.s_max},
                {"lr", train.lr},
                {"warmup_steps", train.warmup_steps},
                {"weight_decay", train.weight_decay},
                {"adam_beta1", train.adam_beta1},
                {"adam_beta2", train.adam_beta2},
                {"adam_eps", train.adam_eps},
                {"batch_size", train.batch_size},
                {"stage1_max_steps", train.stage1_max_steps},
                {"stage1_saturation", train.stage1_saturation},
                {"stage1_window", train.stage1_window},
                {"stage1_mild_frac", train.stage1_mild_frac},
                {"stage2_steps", train.stage2_steps},
                {"stage3_steps", train.stage3_steps},
                {"adv_from_start", train.adv_from_start},
                {"disable_jnd", train.disable_jnd},
                {"fixed_resolution", train.fixed_resolution}};
  return j.dump(2);
}

}  // namespace sealkit
