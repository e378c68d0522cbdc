#pragma once

#include <array>
#include <functional>
#include <memory>

#include "sealkit/tensor.hpp"

namespace sealkit::nd {

// Reverse-mode tape. Nodes are created in forward order; the creation index
// is a topological order, so backward just walks reachable nodes by
// descending index. Values are immutable once a node is built.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  int64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backfn;  // reads this->grad, accumulates into parents
};

/// Handle to a tape node. Cheap to copy; holding any output keeps the
/// subgraph that produced it alive.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t numel() const { return node_->value.numel(); }
  int64_t dim(int64_t i) const { return node_->value.dim(i); }

  std::shared_ptr<Node<T>>& node() { return node_; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T> Var<T> leaf(Tensor<T> value, bool requires_grad = false);
template <class T> Var<T> constant(Tensor<T> value);
template <class T> Var<T> detach(const Var<T>& v);

/// Runs reverse-mode accumulation from `out` with the given seed gradient.
/// Gradients of all reachable nodes are reset first, so two consecutive
/// backward calls do not mix.
template <class T> void backward(const Var<T>& out, const Tensor<T>& seed);
template <class T> void backward_scalar(const Var<T>& out);

// ---- elementwise / arithmetic ----
// Binary ops accept equal shapes, or a 1-element tensor on either side
// (broadcast scalar).
template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
template <class T> Var<T> mul_scalar(const Var<T>& a, T s);
template <class T> Var<T> relu(const Var<T>& x);
template <class T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <class T> Var<T> sigmoid(const Var<T>& x);
template <class T> Var<T> tanh_op(const Var<T>& x);
template <class T> Var<T> log_op(const Var<T>& x);
// Pass-through gradient strictly inside (lo, hi), zero elsewhere.
template <class T> Var<T> clamp(const Var<T>& x, T lo, T hi);

// ---- linear algebra / conv ----
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// x:[B,M] + bias:[M] broadcast over rows.
template <class T> Var<T> add_bias_rows(const Var<T>& x, const Var<T>& bias);
/// x:[N,Ci,H,W], w:[Co,Ci,kh,kw], optional bias:[Co]; zero padding.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad);
template <class T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta, T eps);

/// Per-pixel channel mix: out[c] = sum_k M[c*3+k] * x[k] for 3-channel input,
/// evaluated in double precision. M has out_channels*3 entries, row-major.
template <class T>
Var<T> channel_mix(const Var<T>& x, const std::vector<double>& m, int64_t out_channels);

// ---- shape / sampling ----
template <class T> Var<T> reshape(const Var<T>& x, Shape s);
template <class T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> avg_pool2d(const Var<T>& x, int k, int stride);
template <class T> Var<T> nearest_upsample2x(const Var<T>& x);
template <class T> Var<T> bilinear_resize(const Var<T>& x, int64_t out_h, int64_t out_w);
/// homography maps output pixel coords (x,y,1) to input coords; taps outside
/// the frame read `fill`.
template <class T>
Var<T> warp_bilinear(const Var<T>& x, const std::array<double, 9>& out_to_in, int64_t out_h,
                     int64_t out_w, T fill);
template <class T> Var<T> flip_w(const Var<T>& x);
/// Exact right-angle rotation (counter-clockwise, k in 1..3); dims swap for
/// odd k.
template <class T> Var<T> rot90(const Var<T>& x, int k);
template <class T> Var<T> crop2d(const Var<T>& x, int64_t y0, int64_t x0, int64_t h, int64_t w);
template <class T> Var<T> reflect_pad2d(const Var<T>& x, int pt, int pb, int pl, int pr);
/// x:[N,C] tiled to [N,C,h,w].
template <class T> Var<T> tile_spatial(const Var<T>& x, int64_t h, int64_t w);

// ---- reductions ----
template <class T> Var<T> sum_all(const Var<T>& x);
template <class T> Var<T> mean_all(const Var<T>& x);
/// [N,C,H,W] -> [N,C] global average pool.
template <class T> Var<T> mean_hw(const Var<T>& x);

// ---- frame-axis ops (axis 0) ----
/// Averages groups of k frames; a short trailing group is averaged over its
/// actual size.
template <class T> Var<T> temporal_avg_pool(const Var<T>& x, int64_t k);
/// Repeats each frame k times, truncated to t_out frames.
template <class T> Var<T> temporal_repeat(const Var<T>& x, int64_t k, int64_t t_out);

/// Forward applies `f` to the value; backward treats the op as identity.
/// `f` must preserve shape. The forward value is exactly f(x), not a
/// recombination, so value equality with the bare transform is bitwise.
template <class T>
Var<T> straight_through(const Var<T>& x, const std::function<Tensor<T>(const Tensor<T>&)>& f);

}  // namespace sealkit::nd
