#pragma once

#include <map>
#include <string>

#include "sealkit/autodiff.hpp"
#include "sealkit/bit_message.hpp"
#include "sealkit/rng.hpp"

namespace sealkit {

using real_t = float;
using Varf = nd::Var<real_t>;
using Tensorf = nd::Tensor<real_t>;

struct ArchConfig {
  int model_res = 64;
  int n_bits = 16;
  int base_channels = 16;
  int depth = 3;  // number of U-Net down blocks
  int msg_embed_channels = 16;
  int gn_groups = 4;

  void validate() const;
  int bottleneck_res() const { return model_res >> depth; }
  int channels_at(int level) const { return base_channels << level; }
};

/// Named parameters for embedder (emb.*), extractor (ext.*) and
/// discriminator (disc.*). Map order gives a stable parameter enumeration.
struct ModelBundle {
  ArchConfig arch;
  std::map<std::string, Tensorf> params;

  bool all_finite() const;
  /// FNV-1a over names and raw tensor bytes; identifies a set of weights.
  uint64_t content_hash() const;
};

ModelBundle init_models(const ArchConfig& arch, Rng& rng);

/// Leaf Vars over a bundle's tensors for one forward/backward pass.
/// `trainable_prefix` selects which names get requires_grad; everything else
/// is wrapped as a constant. Empty prefix freezes all.
struct ParamVars {
  std::map<std::string, Varf> vars;
  const Varf& at(const std::string& name) const;
};
ParamVars wrap_params(const ModelBundle& bundle, const std::vector<std::string>& trainable_prefixes);

// Graph-building forwards (used by training and by the tensor-level API).
// images are [B,3,r,r]; message_pm1 is [B,n_bits] with entries +-1.
Varf embedder_forward(const ArchConfig& arch, const ParamVars& p, const Varf& images,
                      const Varf& message_pm1);
/// Frame axis = batch axis. Temporal average pooling (kernel=stride=k) is
/// inserted after down block d (d=0 pools the input, d=depth the bottleneck
/// input); the matching un-pool (repeat) is inserted on the way up. k=1
/// reproduces embedder_forward bit-exactly.
Varf embedder_forward_pooled(const ArchConfig& arch, const ParamVars& p, const Varf& frames,
                             const Varf& message_pm1, int k, int d);
Varf extractor_forward(const ArchConfig& arch, const ParamVars& p, const Varf& images);
Varf discriminator_forward(const ArchConfig& arch, const ParamVars& p, const Varf& images);

// Tensor-level inference API.
/// watermark in [-1,1], shape [B,3,r,r]; image must be at model_res.
Tensorf embed(const ModelBundle& b, const Tensorf& image_lowres, const BitMessage& m);
/// soft message in [0,1], shape [B,n_bits]; image must be at model_res.
Tensorf extract(const ModelBundle& b, const Tensorf& image_lowres);
/// patch logit map [B,1,h',w']; any resolution >= the receptive field.
Tensorf discriminate(const ModelBundle& b, const Tensorf& image);
/// per-frame watermarks for frames [T,3,r,r] sharing deep features in
/// k-groups.
Tensorf temporal_pooled_embed(const ModelBundle& b, const Tensorf& frames, const BitMessage& m,
                              int k, int d);

/// [B,n_bits] tensor with entries 2*bit-1 replicated over rows.
Tensorf message_pm1_rows(const BitMessage& m, int64_t rows);

}  // namespace sealkit
