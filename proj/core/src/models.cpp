#include "sealkit/models.hpp"

#include <cmath>

#include "sealkit/errors.hpp"

namespace sealkit {

using nd::Var;
namespace ops = sealkit::nd;

void ArchConfig::validate() const {
  nd::check(depth >= 1 && depth <= 6, "arch: depth out of range");
  nd::check(model_res % (1 << depth) == 0, "arch: model_res must be divisible by 2^depth");
  nd::check(n_bits >= 1, "arch: n_bits must be >= 1");
  nd::check(base_channels >= gn_groups && base_channels % gn_groups == 0,
            "arch: base_channels must be a multiple of gn_groups");
  nd::check(msg_embed_channels >= 1, "arch: msg_embed_channels must be >= 1");
}

bool ModelBundle::all_finite() const {
  for (const auto& [name, t] : params)
    if (!t.all_finite()) return false;
  return true;
}

uint64_t ModelBundle::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : params) {
    feed(name.data(), name.size());
    feed(t.data(), sizeof(real_t) * static_cast<size_t>(t.numel()));
  }
  return h;
}

namespace {

constexpr real_t kGnEps = 1e-5f;
constexpr real_t kLeakySlope = 0.2f;

Tensorf he_conv(int64_t co, int64_t ci, int64_t kh, int64_t kw, Rng& rng, double scale = 1.0) {
  Tensorf t({co, ci, kh, kw});
  double std = scale * std::sqrt(2.0 / static_cast<double>(ci * kh * kw));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real_t>(rng.normal(0, std));
  return t;
}

Tensorf dense_init(int64_t in, int64_t out, Rng& rng) {
  Tensorf t({in, out});
  double std = std::sqrt(1.0 / static_cast<double>(in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real_t>(rng.normal(0, std));
  return t;
}

void add_conv_block(std::map<std::string, Tensorf>& p, const std::string& name, int64_t ci,
                    int64_t co, int k, Rng& rng, bool norm = true, double scale = 1.0) {
  p[name + ".w"] = he_conv(co, ci, k, k, rng, scale);
  p[name + ".b"] = Tensorf({co});
  if (norm) {
    p[name + ".g"] = Tensorf::full({co}, 1.0f);
    p[name + ".gb"] = Tensorf({co});
  }
}

struct Ctx {
  const ArchConfig& arch;
  const ParamVars& p;
};

Varf conv_gn_act(const Ctx& c, const std::string& name, const Varf& x, int stride,
                 bool leaky = false) {
  Varf y = ops::conv2d(x, c.p.at(name + ".w"), c.p.at(name + ".b"), stride, 1);
  y = ops::group_norm(y, c.arch.gn_groups, c.p.at(name + ".g"), c.p.at(name + ".gb"), kGnEps);
  return leaky ? ops::leaky_relu(y, kLeakySlope) : ops::relu(y);
}

}  // namespace

ModelBundle init_models(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  ModelBundle b;
  b.arch = arch;
  auto& p = b.params;
  int M = arch.msg_embed_channels, D = arch.depth;

  // embedder
  p["emb.msg_in.w"] = dense_init(arch.n_bits, M, rng);
  p["emb.msg_bott.w"] = dense_init(arch.n_bits, M, rng);
  add_conv_block(p, "emb.stem", 3 + M, arch.channels_at(0), 3, rng);
  for (int i = 1; i <= D; ++i) {
    add_conv_block(p, "emb.down" + std::to_string(i), arch.channels_at(i - 1),
                   arch.channels_at(i), 3, rng);
    add_conv_block(p, "emb.down" + std::to_string(i) + "r", arch.channels_at(i),
                   arch.channels_at(i), 3, rng);
  }
  add_conv_block(p, "emb.bott", arch.channels_at(D) + M, arch.channels_at(D), 3, rng);
  for (int i = D; i >= 1; --i) {
    add_conv_block(p, "emb.up" + std::to_string(i), arch.channels_at(i), arch.channels_at(i - 1),
                   3, rng);
    add_conv_block(p, "emb.up" + std::to_string(i) + "m", 2 * arch.channels_at(i - 1),
                   arch.channels_at(i - 1), 3, rng);
  }
  p["emb.head.w"] = he_conv(3, arch.channels_at(0), 3, 3, rng);
  p["emb.head.b"] = Tensorf({3});

  // extractor
  add_conv_block(p, "ext.stem", 3, arch.channels_at(0), 3, rng);
  for (int i = 1; i <= D; ++i) {
    add_conv_block(p, "ext.down" + std::to_string(i), arch.channels_at(i - 1),
                   arch.channels_at(i), 3, rng);
    add_conv_block(p, "ext.down" + std::to_string(i) + "r", arch.channels_at(i),
                   arch.channels_at(i), 3, rng);
  }
  add_conv_block(p, "ext.bott", arch.channels_at(D), arch.channels_at(D), 3, rng);
  p["ext.fc.w"] = dense_init(arch.channels_at(D), arch.n_bits, rng);
  p["ext.fc.b"] = Tensorf({arch.n_bits});

  // discriminator: 4 stride-2 4x4 convs, no norm on the first, 1x1 head
  {
    int c0 = arch.base_channels;
    p["disc.c1.w"] = he_conv(c0, 3, 4, 4, rng);
    p["disc.c1.b"] = Tensorf({c0});
    for (int i = 2; i <= 4; ++i) {
      int ci = c0 << (i - 2), co = c0 << (i - 1);
      p["disc.c" + std::to_string(i) + ".w"] = he_conv(co, ci, 4, 4, rng);
      p["disc.c" + std::to_string(i) + ".b"] = Tensorf({co});
      p["disc.c" + std::to_string(i) + ".g"] = Tensorf::full({co}, 1.0f);
      p["disc.c" + std::to_string(i) + ".gb"] = Tensorf({co});
    }
    p["disc.head.w"] = he_conv(1, c0 << 3, 1, 1, rng);
    p["disc.head.b"] = Tensorf({1});
  }
  return b;
}

ParamVars wrap_params(const ModelBundle& bundle,
                      const std::vector<std::string>& trainable_prefixes) {
  ParamVars pv;
  for (const auto& [name, t] : bundle.params) {
    bool train = false;
    for (const auto& pre : trainable_prefixes)
      if (name.rfind(pre, 0) == 0) train = true;
    pv.vars.emplace(name, ops::leaf(t, train));
  }
  return pv;
}

const Varf& ParamVars::at(const std::string& name) const {
  auto it = vars.find(name);
  nd::check(it != vars.end(), "unknown parameter " + name);
  return it->second;
}

Tensorf message_pm1_rows(const BitMessage& m, int64_t rows) {
  Tensorf t({rows, m.n_bits()});
  for (int64_t r = 0; r < rows; ++r)
    for (int i = 0; i < m.n_bits(); ++i)
      t[r * m.n_bits() + i] = m.bits[static_cast<size_t>(i)] ? 1.0f : -1.0f;
  return t;
}

// Shared implementation: plain embed is the pooled path with k=1, d=0 minus
// the pooling ops (identical arithmetic either way).
static Varf embedder_impl(const ArchConfig& arch, const ParamVars& p, const Varf& images,
                          const Varf& msg, bool pooled, int k, int d) {
  Ctx c{arch, p};
  int D = arch.depth;
  int64_t B = images.dim(0);
  nd::check(images.dim(1) == 3 && images.dim(2) == arch.model_res &&
                images.dim(3) == arch.model_res,
            "embed: image must be [B,3," + std::to_string(arch.model_res) + "," +
                std::to_string(arch.model_res) + "], got " + nd::shape_str(images.shape()));
  nd::check(msg.dim(0) == B && msg.dim(1) == arch.n_bits,
            "embed: message length mismatch, expected n_bits=" + std::to_string(arch.n_bits));
  if (pooled) {
    nd::check(k >= 1, "temporal pooling: k must be >= 1");
    nd::check(d >= 0 && d <= D, "temporal pooling: d must be in [0, depth]");
  }

  auto maybe_pool = [&](const Varf& v, int level) {
    return (pooled && level == d) ? ops::temporal_avg_pool(v, k) : v;
  };
  auto maybe_unpool = [&](const Varf& v, int level) {
    return (pooled && level == d) ? ops::temporal_repeat(v, k, B) : v;
  };

  Varf m_in = ops::matmul(msg, p.at("emb.msg_in.w"));  // [B,M]
  Varf x = ops::concat_channels(images, ops::tile_spatial(m_in, arch.model_res, arch.model_res));
  x = maybe_pool(x, 0);
  Varf h = conv_gn_act(c, "emb.stem", x, 1);

  std::vector<Varf> skips(static_cast<size_t>(D + 1));
  skips[0] = h;
  for (int i = 1; i <= D; ++i) {
    h = conv_gn_act(c, "emb.down" + std::to_string(i), h, 2);
    h = conv_gn_act(c, "emb.down" + std::to_string(i) + "r", h, 1);
    h = maybe_pool(h, i);
    skips[static_cast<size_t>(i)] = h;
  }

  Varf m_bott = ops::matmul(msg, p.at("emb.msg_bott.w"));
  if (pooled && d <= D) m_bott = ops::temporal_avg_pool(m_bott, k);
  int br = arch.bottleneck_res();
  h = ops::concat_channels(h, ops::tile_spatial(m_bott, br, br));
  h = conv_gn_act(c, "emb.bott", h, 1);

  for (int i = D; i >= 1; --i) {
    h = ops::nearest_upsample2x(h);
    h = conv_gn_act(c, "emb.up" + std::to_string(i), h, 1);
    h = maybe_unpool(h, i);  // back to per-frame before the per-frame skip
    h = ops::concat_channels(h, skips[static_cast<size_t>(i - 1)]);
    h = conv_gn_act(c, "emb.up" + std::to_string(i) + "m", h, 1);
  }
  Varf w = ops::conv2d(h, p.at("emb.head.w"), p.at("emb.head.b"), 1, 1);
  w = ops::tanh_op(w);
  return maybe_unpool(w, 0);
}

Varf embedder_forward(const ArchConfig& arch, const ParamVars& p, const Varf& images,
                      const Varf& msg) {
  return embedder_impl(arch, p, images, msg, false, 1, -1);
}

Varf embedder_forward_pooled(const ArchConfig& arch, const ParamVars& p, const Varf& frames,
                             const Varf& msg, int k, int d) {
  return embedder_impl(arch, p, frames, msg, true, k, d);
}

Varf extractor_forward(const ArchConfig& arch, const ParamVars& p, const Varf& images) {
  nd::check(images.dim(1) == 3 && images.dim(2) == arch.model_res &&
                images.dim(3) == arch.model_res,
            "extract: image must be at model_res " + std::to_string(arch.model_res) + ", got " +
                nd::shape_str(images.shape()));
  Ctx c{arch, p};
  Varf h = conv_gn_act(c, "ext.stem", images, 1);
  for (int i = 1; i <= arch.depth; ++i) {
    h = conv_gn_act(c, "ext.down" + std::to_string(i), h, 2);
    h = conv_gn_act(c, "ext.down" + std::to_string(i) + "r", h, 1);
  }
  h = conv_gn_act(c, "ext.bott", h, 1);
  Varf pooled = ops::mean_hw(h);  // [B, C]
  Varf logits = ops::add_bias_rows(ops::matmul(pooled, p.at("ext.fc.w")), p.at("ext.fc.b"));
  return ops::sigmoid(logits);
}

Varf discriminator_forward(const ArchConfig& arch, const ParamVars& p, const Varf& images) {
  nd::check(images.dim(1) == 3, "discriminate: 3-channel input required");
  nd::check(images.dim(2) >= 16 && images.dim(3) >= 16,
            "discriminate: image smaller than the receptive field (min 16)");
  Varf h = ops::leaky_relu(ops::conv2d(images, p.at("disc.c1.w"), p.at("disc.c1.b"), 2, 1),
                           kLeakySlope);
  for (int i = 2; i <= 4; ++i) {
    std::string n = "disc.c" + std::to_string(i);
    h = ops::conv2d(h, p.at(n + ".w"), p.at(n + ".b"), 2, 1);
    h = ops::group_norm(h, arch.gn_groups, p.at(n + ".g"), p.at(n + ".gb"), kGnEps);
    h = ops::leaky_relu(h, kLeakySlope);
  }
  return ops::conv2d(h, p.at("disc.head.w"), p.at("disc.head.b"), 1, 0);
}

namespace {
ParamVars frozen(const ModelBundle& b) { return wrap_params(b, {}); }
}  // namespace

Tensorf embed(const ModelBundle& b, const Tensorf& image, const BitMessage& m) {
  nd::check(m.n_bits() == b.arch.n_bits, "embed: message length mismatch");
  ParamVars p = frozen(b);
  Varf msg = ops::constant(message_pm1_rows(m, image.dim(0)));
  return embedder_forward(b.arch, p, ops::constant(image), msg).value();
}

Tensorf extract(const ModelBundle& b, const Tensorf& image) {
  ParamVars p = frozen(b);
  return extractor_forward(b.arch, p, ops::constant(image)).value();
}

Tensorf discriminate(const ModelBundle& b, const Tensorf& image) {
  ParamVars p = frozen(b);
  return discriminator_forward(b.arch, p, ops::constant(image)).value();
}

Tensorf temporal_pooled_embed(const ModelBundle& b, const Tensorf& frames, const BitMessage& m,
                              int k, int d) {
  nd::check(m.n_bits() == b.arch.n_bits, "temporal_pooled_embed: message length mismatch");
  nd::check(frames.dim(0) >= 1, "temporal_pooled_embed: empty frame stack");
  ParamVars p = frozen(b);
  Varf msg = ops::constant(message_pm1_rows(m, frames.dim(0)));
  return embedder_forward_pooled(b.arch, p, ops::constant(frames), msg, k, d).value();
}

}  // namespace sealkit
