#define EIGEN_DONT_PARALLELIZE
#include "sealkit/autodiff.hpp"

#include <Eigen/Core>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sealkit::nd {

namespace {

std::atomic<int64_t> g_seq{1};

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

// C[M,N] (+)= A[M,K] * B[K,N], all row-major contiguous. The N dimension is
// split into fixed-width chunks so the result is identical for any thread
// count: each output element is produced by exactly one single-threaded
// Eigen product over the full K range.
constexpr int64_t kGemmChunk = 2048;

template <class T>
void gemm(const T* a, int64_t m, int64_t k, const T* b, int64_t n, T* c, bool accumulate) {
  int64_t nchunks = (n + kGemmChunk - 1) / kGemmChunk;
#pragma omp parallel for schedule(static) if (nchunks > 1)
  for (int64_t ch = 0; ch < nchunks; ++ch) {
    int64_t c0 = ch * kGemmChunk;
    int64_t cw = std::min(kGemmChunk, n - c0);
    CMapRM<T> A(a, m, k);
    Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>> B(b + c0, k, cw, Eigen::OuterStride<>(n));
    Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>> C(c + c0, m, cw, Eigen::OuterStride<>(n));
    if (accumulate)
      C.noalias() += A * B;
    else
      C.noalias() = A * B;
  }
}

template <class T>
std::shared_ptr<Node<T>> make_node(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                                   const char* op, std::function<void(Node<T>&)> backfn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  for (auto& p : parents)
    if (p && p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
  }
  return n;
}

template <class T>
void ensure_grad(Node<T>& n) {
  if (n.grad.numel() != n.value.numel()) n.grad = Tensor<T>(n.value.shape());
}

template <class T>
bool wants_grad(const Node<T>& n, size_t parent) {
  return n.parents[parent] && n.parents[parent]->requires_grad;
}

// Reduces src into a 1-element gradient (broadcast-scalar backward).
template <class T>
void add_reduced_all(Tensor<T>& dst, const Tensor<T>& src) {
  double acc = 0;
  for (int64_t i = 0; i < src.numel(); ++i) acc += static_cast<double>(src[i]);
  dst[0] += static_cast<T>(acc);
}

enum class Bcast { None, AScalar, BScalar, AChan, BChan };

template <class T>
Bcast binary_mode(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::None;
  if (a.numel() == 1) return Bcast::AScalar;
  if (b.numel() == 1) return Bcast::BScalar;
  if (a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
      a.dim(3) == b.dim(3)) {
    if (a.dim(1) == 1) return Bcast::AChan;
    if (b.dim(1) == 1) return Bcast::BChan;
  }
  fail(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
       shape_str(b.shape()));
}

// Channel-broadcast helpers for [N,1,H,W] against [N,C,H,W].
template <class T, class F>
void chan_bcast_apply(const Tensor<T>& wide, const Tensor<T>& narrow, Tensor<T>& out, F f) {
  int64_t n = wide.dim(0), c = wide.dim(1), hw = wide.dim(2) * wide.dim(3);
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j) {
      const T* w = wide.data() + (i * c + j) * hw;
      const T* s = narrow.data() + i * hw;
      T* o = out.data() + (i * c + j) * hw;
      for (int64_t p = 0; p < hw; ++p) o[p] = f(w[p], s[p]);
    }
}

// Sums grad over channels into the [N,1,H,W] side.
template <class T>
void chan_reduce_add(Tensor<T>& dst, const Tensor<T>& gout, const Tensor<T>* scale_wide) {
  int64_t n = gout.dim(0), c = gout.dim(1), hw = gout.dim(2) * gout.dim(3);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    T* d = dst.data() + i * hw;
    for (int64_t j = 0; j < c; ++j) {
      const T* g = gout.data() + (i * c + j) * hw;
      const T* s = scale_wide ? scale_wide->data() + (i * c + j) * hw : nullptr;
      for (int64_t p = 0; p < hw; ++p) d[p] += s ? g[p] * s[p] : g[p];
    }
  }
}

template <class T, class FwdF>
Tensor<T> ew_binary(const Tensor<T>& a, const Tensor<T>& b, Bcast mode, FwdF f) {
  const Tensor<T>& wide = (mode == Bcast::AScalar || mode == Bcast::AChan) ? b : a;
  Tensor<T> out(wide.shape());
  switch (mode) {
    case Bcast::None: {
      int64_t n = a.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
      for (int64_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
      break;
    }
    case Bcast::AScalar: {
      T s = a[0];
      for (int64_t i = 0; i < b.numel(); ++i) out[i] = f(s, b[i]);
      break;
    }
    case Bcast::BScalar: {
      T s = b[0];
      for (int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], s);
      break;
    }
    case Bcast::AChan:
      chan_bcast_apply(b, a, out, [&](T wv, T sv) { return f(sv, wv); });
      break;
    case Bcast::BChan:
      chan_bcast_apply(a, b, out, [&](T wv, T sv) { return f(wv, sv); });
      break;
  }
  return out;
}

}  // namespace

template <class T>
Var<T> leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return Var<T>(std::move(n));
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

template <class T>
Var<T> detach(const Var<T>& v) {
  return constant(v.value());
}

template <class T>
void backward(const Var<T>& out, const Tensor<T>& seed) {
  check(out.defined(), "backward: undefined output");
  check(seed.shape() == out.value().shape(),
        "backward: seed gradient shape " + shape_str(seed.shape()) + " does not match output " +
            shape_str(out.value().shape()));
  Node<T>* root = out.node().get();
  if (!root->requires_grad) return;

  // Reachable grad-requiring nodes; creation order is a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents)
      if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  for (Node<T>* n : order) {
    ensure_grad(*n);
    std::fill(n->grad.span().begin(), n->grad.span().end(), T(0));
  }
  root->grad = seed;
  std::sort(order.begin(), order.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });
  for (Node<T>* n : order)
    if (n->backfn) n->backfn(*n);
}

template <class T>
void backward_scalar(const Var<T>& out) {
  check(out.numel() == 1, "backward_scalar: output is not a scalar");
  backward(out, Tensor<T>::full(out.shape(), T(1)));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
static Var<T> binary_op(const Var<T>& a, const Var<T>& b, const char* name,
                        T (*fwd)(T, T), int kind /*0=add 1=sub 2=mul*/) {
  Bcast mode = binary_mode(a.value(), b.value(), name);
  Tensor<T> out = ew_binary(a.value(), b.value(), mode, fwd);
  auto an = a.node(), bn = b.node();
  return Var<T>(make_node<T>(
      std::move(out), {an, bn}, name, [an, bn, mode, kind](Node<T>& self) {
        const Tensor<T>& g = self.grad;
        auto side = [&](const std::shared_ptr<Node<T>>& dst, const std::shared_ptr<Node<T>>& other,
                        bool is_a) {
          if (!dst->requires_grad) return;
          ensure_grad(*dst);
          T sign = (kind == 1 && !is_a) ? T(-1) : T(1);
          bool scalar_side = (mode == Bcast::AScalar && is_a) || (mode == Bcast::BScalar && !is_a);
          bool chan_side = (mode == Bcast::AChan && is_a) || (mode == Bcast::BChan && !is_a);
          if (kind != 2) {  // add/sub: dL/dx = ±g
            if (scalar_side) {
              Tensor<T> tmp = g;
              if (sign < 0)
                for (int64_t i = 0; i < tmp.numel(); ++i) tmp[i] = -tmp[i];
              add_reduced_all(dst->grad, tmp);
            } else if (chan_side) {
              Tensor<T> gs = g;
              if (sign < 0)
                for (int64_t i = 0; i < gs.numel(); ++i) gs[i] = -gs[i];
              chan_reduce_add(dst->grad, gs, static_cast<const Tensor<T>*>(nullptr));
            } else {
              for (int64_t i = 0; i < g.numel(); ++i) dst->grad[i] += sign * g[i];
            }
          } else {  // mul: dL/dx = g * other
            const Tensor<T>& ov = other->value;
            if (scalar_side) {
              double acc = 0;
              for (int64_t i = 0; i < g.numel(); ++i)
                acc += static_cast<double>(g[i]) * static_cast<double>(ov[i]);
              dst->grad[0] += static_cast<T>(acc);
            } else if (chan_side) {
              chan_reduce_add(dst->grad, g, &ov);
            } else if (ov.numel() == 1) {
              T s = ov[0];
              for (int64_t i = 0; i < g.numel(); ++i) dst->grad[i] += g[i] * s;
            } else if (mode == Bcast::AChan || mode == Bcast::BChan) {
              // wide side of a channel broadcast: grad = g * narrow(broadcast)
              Tensor<T> prod(g.shape());
              chan_bcast_apply(g, ov, prod, [](T gv, T sv) { return gv * sv; });
              for (int64_t i = 0; i < g.numel(); ++i) dst->grad[i] += prod[i];
            } else {
              for (int64_t i = 0; i < g.numel(); ++i) dst->grad[i] += g[i] * ov[i];
            }
          }
        };
        side(self.parents[0], self.parents[1], true);
        side(self.parents[1], self.parents[0], false);
      }));
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary_op<T>(a, b, "add", [](T x, T y) { return x + y; }, 0);
}
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary_op<T>(a, b, "sub", [](T x, T y) { return x - y; }, 1);
}
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary_op<T>(a, b, "mul", [](T x, T y) { return x * y; }, 2);
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  auto an = a.node();
  return Var<T>(make_node<T>(std::move(out), {an}, "add_scalar", [an](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*self.parents[0]);
    for (int64_t i = 0; i < self.grad.numel(); ++i) self.parents[0]->grad[i] += self.grad[i];
  }));
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  auto an = a.node();
  return Var<T>(make_node<T>(std::move(out), {an}, "mul_scalar", [an, s](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*self.parents[0]);
    for (int64_t i = 0; i < self.grad.numel(); ++i) self.parents[0]->grad[i] += self.grad[i] * s;
  }));
}

template <class T, class F, class G>
static Var<T> unary_op(const Var<T>& x, const char* name, F fwd, G dfdx_from_in_out) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  int64_t n = xv.numel();
#pragma omp parallel for schedule(static) if (n > 65536)
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  auto xn = x.node();
  return Var<T>(
      make_node<T>(std::move(out), {xn}, name, [xn, dfdx_from_in_out](Node<T>& self) {
        if (!wants_grad(self, 0)) return;
        ensure_grad(*self.parents[0]);
        const Tensor<T>& in = self.parents[0]->value;
        const Tensor<T>& outv = self.value;
        Tensor<T>& gi = self.parents[0]->grad;
        for (int64_t i = 0; i < self.grad.numel(); ++i)
          gi[i] += self.grad[i] * dfdx_from_in_out(in[i], outv[i]);
      }));
}

template <class T>
Var<T> relu(const Var<T>& x) {
  // subgradient at 0 is 0
  return unary_op<T>(x, "relu", [](T v) { return v > T(0) ? v : T(0); },
                     [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary_op<T>(x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
                     [slope](T in, T) { return in > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary_op<T>(x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                     [](T, T out) { return out * (T(1) - out); });
}

template <class T>
Var<T> tanh_op(const Var<T>& x) {
  return unary_op<T>(x, "tanh", [](T v) { return std::tanh(v); },
                     [](T, T out) { return T(1) - out * out; });
}

template <class T>
Var<T> log_op(const Var<T>& x) {
  return unary_op<T>(x, "log", [](T v) { return std::log(v); },
                     [](T in, T) { return T(1) / in; });
}

template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  check(lo <= hi, "clamp: lo > hi");
  return unary_op<T>(x, "clamp", [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
                     [lo, hi](T in, T) { return (in > lo && in < hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// matmul / conv2d / group_norm
// ---------------------------------------------------------------------------

// Hand-rolled dense product with per-element double accumulation in a fixed
// K order: each output row's rounding is independent of the row count, which
// keeps batched and single-row forwards bit-identical (the temporal pooling
// equality contracts rely on this). These matrices are small (message
// projections and classifier heads); the heavy GEMMs live in conv2d.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  check(av.rank() == 2 && bv.rank() == 2, "matmul: rank-2 operands required");
  check(av.dim(1) == bv.dim(0), "matmul: inner extents differ " + shape_str(av.shape()) + " x " +
                                    shape_str(bv.shape()));
  int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0;
      for (int64_t p = 0; p < k; ++p)
        acc += static_cast<double>(av[i * k + p]) * static_cast<double>(bv[p * n + j]);
      out[i * n + j] = static_cast<T>(acc);
    }
  auto an = a.node(), bn = b.node();
  return Var<T>(make_node<T>(std::move(out), {an, bn}, "matmul", [an, bn, m, k, n](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    if (wants_grad(self, 0)) {
      ensure_grad(*self.parents[0]);
      const Tensor<T>& bvv = self.parents[1]->value;
      Tensor<T>& ga = self.parents[0]->grad;
      for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
          double acc = 0;
          for (int64_t j = 0; j < n; ++j)
            acc += static_cast<double>(g[i * n + j]) * static_cast<double>(bvv[p * n + j]);
          ga[i * k + p] += static_cast<T>(acc);
        }
    }
    if (wants_grad(self, 1)) {
      ensure_grad(*self.parents[1]);
      const Tensor<T>& avv = self.parents[0]->value;
      Tensor<T>& gb = self.parents[1]->grad;
      for (int64_t p = 0; p < k; ++p)
        for (int64_t j = 0; j < n; ++j) {
          double acc = 0;
          for (int64_t i = 0; i < m; ++i)
            acc += static_cast<double>(avv[i * k + p]) * static_cast<double>(g[i * n + j]);
          gb[p * n + j] += static_cast<T>(acc);
        }
    }
  }));
}

template <class T>
Var<T> add_bias_rows(const Var<T>& x, const Var<T>& bias) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = bias.value();
  check(xv.rank() == 2, "add_bias_rows: rank-2 input required");
  check(bv.numel() == xv.dim(1), "add_bias_rows: bias length must equal columns");
  int64_t r = xv.dim(0), c = xv.dim(1);
  Tensor<T> out(xv.shape());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] + bv[j];
  auto xn = x.node(), bn = bias.node();
  return Var<T>(make_node<T>(std::move(out), {xn, bn}, "add_bias_rows",
                             [xn, bn, r, c](Node<T>& self) {
                               if (xn->requires_grad) {
                                 ensure_grad(*xn);
                                 for (int64_t i = 0; i < r * c; ++i) xn->grad[i] += self.grad[i];
                               }
                               if (bn->requires_grad) {
                                 ensure_grad(*bn);
                                 for (int64_t j = 0; j < c; ++j) {
                                   double acc = 0;
                                   for (int64_t i = 0; i < r; ++i)
                                     acc += static_cast<double>(self.grad[i * c + j]);
                                   bn->grad[j] += static_cast<T>(acc);
                                 }
                               }
                             }));
}

namespace {

// valid ox range so that ix = ox*stride - pad + k stays inside [0, w)
inline void ox_range(int64_t w, int64_t ow, int stride, int pad, int64_t k, int64_t& lo,
                     int64_t& hi) {
  int64_t off = k - pad;  // ix = ox*stride + off
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  int64_t num = w - 1 - off;
  // trunc-toward-zero would round -1/2 up to 0 and read past the row
  hi = num < 0 ? -1 : std::min(ow - 1, num / stride);
}

template <class T>
void im2col(const T* x, int64_t ci, int64_t h, int64_t w, int kh, int kw, int stride, int pad,
            int64_t oh, int64_t ow, T* cols) {
  int64_t nsp = oh * ow;
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t c = 0; c < ci; ++c)
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        T* row = cols + ((c * kh + ky) * kw + kx) * nsp;
        const T* src = x + c * h * w;
        int64_t lo, hi;
        ox_range(w, ow, stride, pad, kx, lo, hi);
        for (int64_t oy = 0; oy < oh; ++oy) {
          int64_t iy = oy * stride - pad + ky;
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= h || lo > hi) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          std::fill(dst, dst + lo, T(0));
          const T* s = src + iy * w + lo * stride - pad + kx;
          if (stride == 1) {
            std::copy(s, s + (hi - lo + 1), dst + lo);
          } else {
            for (int64_t ox = lo; ox <= hi; ++ox) dst[ox] = s[(ox - lo) * stride];
          }
          std::fill(dst + hi + 1, dst + ow, T(0));
        }
      }
}

template <class T>
void col2im_add(const T* cols, int64_t ci, int64_t h, int64_t w, int kh, int kw, int stride,
                int pad, int64_t oh, int64_t ow, T* gx) {
  int64_t nsp = oh * ow;
#pragma omp parallel for schedule(static)
  for (int64_t c = 0; c < ci; ++c) {
    T* dst = gx + c * h * w;
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((c * kh + ky) * kw + kx) * nsp;
        int64_t lo, hi;
        ox_range(w, ow, stride, pad, kx, lo, hi);
        if (lo > hi) continue;
        for (int64_t oy = 0; oy < oh; ++oy) {
          int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* d = dst + iy * w + lo * stride - pad + kx;
          const T* r = row + oy * ow;
          if (stride == 1) {
            for (int64_t ox = lo; ox <= hi; ++ox) d[ox - lo] += r[ox];
          } else {
            for (int64_t ox = lo; ox <= hi; ++ox) d[(ox - lo) * stride] += r[ox];
          }
        }
      }
  }
}

template <class T>
std::vector<T>& conv_scratch() {
  static thread_local std::vector<T> buf;
  return buf;
}

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  check(xv.rank() == 4 && wv.rank() == 4, "conv2d: x and w must be rank 4");
  check(xv.dim(1) == wv.dim(1), "conv2d: channel mismatch, input " + shape_str(xv.shape()) +
                                    " kernel " + shape_str(wv.shape()));
  check(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  check(pad >= 0, "conv2d: negative padding");
  int64_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), ww = xv.dim(3);
  int64_t co = wv.dim(0);
  int kh = static_cast<int>(wv.dim(2)), kw = static_cast<int>(wv.dim(3));
  int64_t oh = (h + 2 * pad - kh) / stride + 1;
  int64_t ow = (ww + 2 * pad - kw) / stride + 1;
  check(oh >= 1 && ow >= 1, "conv2d: input smaller than kernel footprint");
  bool has_bias = bias.defined();
  if (has_bias)
    check(bias.value().numel() == co, "conv2d: bias length must equal output channels");

  int64_t k = ci * kh * kw, nsp = oh * ow;
  Tensor<T> out({n, co, oh, ow});
  {
    std::vector<T>& cols = conv_scratch<T>();
    cols.resize(static_cast<size_t>(k * nsp));
    for (int64_t b = 0; b < n; ++b) {
      im2col(xv.data() + b * ci * h * ww, ci, h, ww, kh, kw, stride, pad, oh, ow, cols.data());
      gemm(wv.data(), co, k, cols.data(), nsp, out.data() + b * co * nsp, false);
    }
  }
  if (has_bias) {
    const Tensor<T>& bv = bias.value();
#pragma omp parallel for schedule(static) collapse(2)
    for (int64_t b = 0; b < n; ++b)
      for (int64_t c = 0; c < co; ++c) {
        T* dst = out.data() + (b * co + c) * nsp;
        T add_v = bv[c];
        for (int64_t i = 0; i < nsp; ++i) dst[i] += add_v;
      }
  }

  auto xn = x.node(), wn = w.node(), bn = bias.defined() ? bias.node() : nullptr;
  std::vector<std::shared_ptr<Node<T>>> parents{xn, wn};
  if (bn) parents.push_back(bn);
  return Var<T>(make_node<T>(
      std::move(out), std::move(parents), "conv2d",
      [xn, wn, bn, stride, pad, kh, kw](Node<T>& self) {
        const Tensor<T>& xv = xn->value;
        const Tensor<T>& wv = wn->value;
        int64_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), ww = xv.dim(3);
        int64_t co = wv.dim(0);
        int64_t oh = self.value.dim(2), ow = self.value.dim(3);
        int64_t k = ci * kh * kw, nsp = oh * ow;
        const Tensor<T>& g = self.grad;
        bool need_x = xn->requires_grad, need_w = wn->requires_grad;
        if (need_x) ensure_grad(*xn);
        if (need_w) ensure_grad(*wn);
        if (need_x || need_w) {
          std::vector<T>& cols = conv_scratch<T>();
          cols.resize(static_cast<size_t>(k * nsp));
          std::vector<T> gcols(need_x ? static_cast<size_t>(k * nsp) : 0);
          for (int64_t b = 0; b < n; ++b) {
            const T* gb = g.data() + b * co * nsp;
            if (need_w) {
              im2col(xv.data() + b * ci * h * ww, ci, h, ww, kh, kw, stride, pad, oh, ow,
                     cols.data());
              // gW += gOut[Co,Nsp] * cols^T[Nsp,K]; fixed chunk order keeps the
              // accumulation deterministic for any thread count.
              int64_t nchunks = (nsp + kGemmChunk - 1) / kGemmChunk;
              if (nchunks > 1) {
                std::vector<T> partial(static_cast<size_t>(nchunks * co * k), T(0));
                T* pdata = partial.data();
                const T* cdata = cols.data();
#pragma omp parallel for schedule(static)
                for (int64_t chk = 0; chk < nchunks; ++chk) {
                  int64_t c0 = chk * kGemmChunk;
                  int64_t cwd = std::min(kGemmChunk, nsp - c0);
                  Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>> G(
                      gb + c0, co, cwd, Eigen::OuterStride<>(nsp));
                  Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>> C(
                      cdata + c0, k, cwd, Eigen::OuterStride<>(nsp));
                  MapRM<T> P(pdata + chk * co * k, co, k);
                  P.noalias() = G * C.transpose();
                }
                MapRM<T> GW(wn->grad.data(), co, k);
                for (int64_t chk = 0; chk < nchunks; ++chk)
                  GW += CMapRM<T>(partial.data() + chk * co * k, co, k);
              } else {
                CMapRM<T> G(gb, co, nsp), C(cols.data(), k, nsp);
                MapRM<T> GW(wn->grad.data(), co, k);
                GW.noalias() += G * C.transpose();
              }
            }
            if (need_x) {
              // gcols = W^T[K,Co] * gOut[Co,Nsp]
              int64_t nchunks = (nsp + kGemmChunk - 1) / kGemmChunk;
#pragma omp parallel for schedule(static) if (nchunks > 1)
              for (int64_t chk = 0; chk < nchunks; ++chk) {
                int64_t c0 = chk * kGemmChunk;
                int64_t cwd = std::min(kGemmChunk, nsp - c0);
                CMapRM<T> W(wv.data(), co, k);
                Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>> G(
                    gb + c0, co, cwd, Eigen::OuterStride<>(nsp));
                Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>> GC(gcols.data() + c0, k, cwd,
                                                                 Eigen::OuterStride<>(nsp));
                GC.noalias() = W.transpose() * G;
              }
              col2im_add(gcols.data(), ci, h, ww, kh, kw, stride, pad, oh, ow,
                         xn->grad.data() + b * ci * h * ww);
            }
          }
        }
        if (bn && bn->requires_grad) {
          ensure_grad(*bn);
          for (int64_t c = 0; c < co; ++c) {
            double acc = 0;
            for (int64_t b = 0; b < n; ++b) {
              const T* gb = g.data() + (b * co + c) * nsp;
              for (int64_t i = 0; i < nsp; ++i) acc += static_cast<double>(gb[i]);
            }
            bn->grad[c] += static_cast<T>(acc);
          }
        }
      }));
}

template <class T>
Var<T> group_norm(const Var<T>& x, int groups, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "group_norm: rank-4 input required");
  int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  check(groups >= 1 && c % groups == 0, "group_norm: channels not divisible by groups");
  check(gamma.value().numel() == c && beta.value().numel() == c,
        "group_norm: affine parameter length must equal channels");
  int64_t cpg = c / groups, m = cpg * hw;

  Tensor<T> out(xv.shape());
  auto mean = std::make_shared<Tensor<T>>(Shape{n * groups});
  auto inv = std::make_shared<Tensor<T>>(Shape{n * groups});
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
#pragma omp parallel for schedule(static) collapse(2)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t g = 0; g < groups; ++g) {
      const T* src = xv.data() + (b * c + g * cpg) * hw;
      double s = 0, s2 = 0;
      for (int64_t i = 0; i < m; ++i) {
        double v = src[i];
        s += v;
        s2 += v * v;
      }
      double mu = s / m;
      double var = std::max(0.0, s2 / m - mu * mu);
      double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
      (*mean)[b * groups + g] = static_cast<T>(mu);
      (*inv)[b * groups + g] = static_cast<T>(is);
      T* dst = out.data() + (b * c + g * cpg) * hw;
      for (int64_t j = 0; j < cpg; ++j) {
        T ga = gv[g * cpg + j], be = bv[g * cpg + j];
        for (int64_t i = 0; i < hw; ++i) {
          T xh = static_cast<T>((src[j * hw + i] - mu) * is);
          dst[j * hw + i] = ga * xh + be;
        }
      }
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return Var<T>(make_node<T>(
      std::move(out), {xn, gn, bn}, "group_norm",
      [xn, gn, bn, groups, mean, inv](Node<T>& self) {
        const Tensor<T>& xv = xn->value;
        int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
        int64_t cpg = c / groups, m = cpg * hw;
        const Tensor<T>& g = self.grad;
        const Tensor<T>& gv = gn->value;
        bool need_x = xn->requires_grad;
        if (need_x) ensure_grad(*xn);
        if (need_x) {
#pragma omp parallel for schedule(static) collapse(2)
          for (int64_t b = 0; b < n; ++b)
            for (int64_t gr = 0; gr < groups; ++gr) {
              const T* src = xv.data() + (b * c + gr * cpg) * hw;
              const T* gy = g.data() + (b * c + gr * cpg) * hw;
              T* gx = xn->grad.data() + (b * c + gr * cpg) * hw;
              double mu = (*mean)[b * groups + gr], is = (*inv)[b * groups + gr];
              double s1 = 0, s2 = 0;
              for (int64_t j = 0; j < cpg; ++j) {
                double ga = gv[gr * cpg + j];
                for (int64_t i = 0; i < hw; ++i) {
                  double dyg = gy[j * hw + i] * ga;
                  double xh = (src[j * hw + i] - mu) * is;
                  s1 += dyg;
                  s2 += dyg * xh;
                }
              }
              s1 /= m;
              s2 /= m;
              for (int64_t j = 0; j < cpg; ++j) {
                double ga = gv[gr * cpg + j];
                for (int64_t i = 0; i < hw; ++i) {
                  double dyg = gy[j * hw + i] * ga;
                  double xh = (src[j * hw + i] - mu) * is;
                  gx[j * hw + i] += static_cast<T>(is * (dyg - s1 - xh * s2));
                }
              }
            }
        }
        if (gn->requires_grad || bn->requires_grad) {
          if (gn->requires_grad) ensure_grad(*gn);
          if (bn->requires_grad) ensure_grad(*bn);
          for (int64_t ch = 0; ch < c; ++ch) {
            int64_t gr = ch / cpg;
            double dg = 0, db = 0;
            for (int64_t b = 0; b < n; ++b) {
              const T* src = xv.data() + (b * c + ch) * hw;
              const T* gy = g.data() + (b * c + ch) * hw;
              double mu = (*mean)[b * groups + gr], is = (*inv)[b * groups + gr];
              for (int64_t i = 0; i < hw; ++i) {
                db += gy[i];
                dg += gy[i] * (src[i] - mu) * is;
              }
            }
            if (gn->requires_grad) gn->grad[ch] += static_cast<T>(dg);
            if (bn->requires_grad) bn->grad[ch] += static_cast<T>(db);
          }
        }
      }));
}

template <class T>
Var<T> channel_mix(const Var<T>& x, const std::vector<double>& m, int64_t out_channels) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4 && xv.dim(1) == 3, "channel_mix: [N,3,H,W] input required");
  check(static_cast<int64_t>(m.size()) == out_channels * 3, "channel_mix: matrix size mismatch");
  int64_t n = xv.dim(0), hw = xv.dim(2) * xv.dim(3);
  Tensor<T> out({n, out_channels, xv.dim(2), xv.dim(3)});
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < n; ++b) {
    const T* r = xv.data() + b * 3 * hw;
    const T* g = r + hw;
    const T* bl = r + 2 * hw;
    for (int64_t c = 0; c < out_channels; ++c) {
      T* dst = out.data() + (b * out_channels + c) * hw;
      double m0 = m[c * 3], m1 = m[c * 3 + 1], m2 = m[c * 3 + 2];
      for (int64_t i = 0; i < hw; ++i)
        dst[i] = static_cast<T>(m0 * static_cast<double>(r[i]) + m1 * static_cast<double>(g[i]) +
                                m2 * static_cast<double>(bl[i]));
    }
  }
  auto xn = x.node();
  auto mm = std::make_shared<std::vector<double>>(m);
  return Var<T>(make_node<T>(std::move(out), {xn}, "channel_mix",
                             [xn, mm, out_channels](Node<T>& self) {
                               if (!wants_grad(self, 0)) return;
                               ensure_grad(*xn);
                               const Tensor<T>& xv = xn->value;
                               int64_t n = xv.dim(0), hw = xv.dim(2) * xv.dim(3);
#pragma omp parallel for schedule(static)
                               for (int64_t b = 0; b < n; ++b)
                                 for (int64_t k = 0; k < 3; ++k) {
                                   T* d = xn->grad.data() + (b * 3 + k) * hw;
                                   for (int64_t c = 0; c < out_channels; ++c) {
                                     const T* gp = self.grad.data() + (b * out_channels + c) * hw;
                                     double w = (*mm)[c * 3 + k];
                                     for (int64_t i = 0; i < hw; ++i)
                                       d[i] += static_cast<T>(w * static_cast<double>(gp[i]));
                                   }
                                 }
                             }));
}

/// 90-degree rotations as exact pixel permutations; k in {1,2,3},
/// counter-clockwise. Output dims swap for odd k.
template <class T>
Var<T> rot90(const Var<T>& x, int k) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "rot90: rank-4 input required");
  check(k >= 1 && k <= 3, "rot90: k must be 1..3");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  int64_t oh = (k == 2) ? h : w, ow = (k == 2) ? w : h;
  Tensor<T> out({n, c, oh, ow});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t xx = 0; xx < ow; ++xx) {
        int64_t sy, sx;
        if (k == 1) {
          sy = xx;
          sx = w - 1 - y;
        } else if (k == 2) {
          sy = h - 1 - y;
          sx = w - 1 - xx;
        } else {
          sy = h - 1 - xx;
          sx = y;
        }
        dst[y * ow + xx] = src[sy * w + sx];
      }
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "rot90", [xn, k](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*xn);
    const Tensor<T>& xv = xn->value;
    int64_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    int64_t oh = self.value.dim(2), ow = self.value.dim(3);
    for (int64_t p = 0; p < nc; ++p) {
      const T* g = self.grad.data() + p * oh * ow;
      T* d = xn->grad.data() + p * h * w;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xx = 0; xx < ow; ++xx) {
          int64_t sy, sx;
          if (k == 1) {
            sy = xx;
            sx = w - 1 - y;
          } else if (k == 2) {
            sy = h - 1 - y;
            sx = w - 1 - xx;
          } else {
            sy = h - 1 - xx;
            sx = y;
          }
          d[sy * w + sx] += g[y * ow + xx];
        }
    }
  }));
}

// ---------------------------------------------------------------------------
// shape / sampling
// ---------------------------------------------------------------------------

template <class T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Tensor<T> out = x.value().reshaped(std::move(s));
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "reshape", [xn](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*self.parents[0]);
    for (int64_t i = 0; i < self.grad.numel(); ++i) self.parents[0]->grad[i] += self.grad[i];
  }));
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  check(av.rank() == 4 && bv.rank() == 4, "concat_channels: rank-4 inputs required");
  check(av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
        "concat_channels: non-channel extents differ");
  int64_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), hw = av.dim(2) * av.dim(3);
  Tensor<T> out({n, ca + cb, av.dim(2), av.dim(3)});
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * (ca + cb) * hw, av.data() + i * ca * hw, sizeof(T) * ca * hw);
    std::memcpy(out.data() + (i * (ca + cb) + ca) * hw, bv.data() + i * cb * hw,
                sizeof(T) * cb * hw);
  }
  auto an = a.node(), bn = b.node();
  return Var<T>(make_node<T>(std::move(out), {an, bn}, "concat_channels",
                             [an, bn, n, ca, cb, hw](Node<T>& self) {
                               for (int64_t i = 0; i < n; ++i) {
                                 const T* g = self.grad.data() + i * (ca + cb) * hw;
                                 if (an->requires_grad) {
                                   ensure_grad(*an);
                                   T* d = an->grad.data() + i * ca * hw;
                                   for (int64_t j = 0; j < ca * hw; ++j) d[j] += g[j];
                                 }
                                 if (bn->requires_grad) {
                                   ensure_grad(*bn);
                                   T* d = bn->grad.data() + i * cb * hw;
                                   for (int64_t j = 0; j < cb * hw; ++j) d[j] += g[ca * hw + j];
                                 }
                               }
                             }));
}

template <class T>
Var<T> avg_pool2d(const Var<T>& x, int k, int stride) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "avg_pool2d: rank-4 input required");
  check(k >= 1 && stride >= 1, "avg_pool2d: bad kernel/stride");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  check(h >= k && w >= k, "avg_pool2d: input smaller than kernel");
  int64_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  Tensor<T> out({n, c, oh, ow});
  T norm = T(1) / static_cast<T>(k * k);
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        T s = 0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) s += src[(oy * stride + ky) * w + ox * stride + kx];
        dst[oy * ow + ox] = s * norm;
      }
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "avg_pool2d",
                             [xn, k, stride, norm](Node<T>& self) {
                               if (!wants_grad(self, 0)) return;
                               ensure_grad(*xn);
                               const Tensor<T>& xv = xn->value;
                               int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
                               int64_t oh = self.value.dim(2), ow = self.value.dim(3);
#pragma omp parallel for schedule(static)
                               for (int64_t p = 0; p < n * c; ++p) {
                                 const T* g = self.grad.data() + p * oh * ow;
                                 T* d = xn->grad.data() + p * h * w;
                                 for (int64_t oy = 0; oy < oh; ++oy)
                                   for (int64_t ox = 0; ox < ow; ++ox) {
                                     T gv = g[oy * ow + ox] * norm;
                                     for (int ky = 0; ky < k; ++ky)
                                       for (int kx = 0; kx < k; ++kx)
                                         d[(oy * stride + ky) * w + ox * stride + kx] += gv;
                                   }
                               }
                             }));
}

template <class T>
Var<T> nearest_upsample2x(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "nearest_upsample2x: rank-4 input required");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> out({n, c, 2 * h, 2 * w});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * 4 * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx) {
        T v = src[y * w + xx];
        dst[(2 * y) * 2 * w + 2 * xx] = v;
        dst[(2 * y) * 2 * w + 2 * xx + 1] = v;
        dst[(2 * y + 1) * 2 * w + 2 * xx] = v;
        dst[(2 * y + 1) * 2 * w + 2 * xx + 1] = v;
      }
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "nearest_upsample2x", [xn](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*xn);
    const Tensor<T>& xv = xn->value;
    int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < n * c; ++p) {
      const T* g = self.grad.data() + p * 4 * h * w;
      T* d = xn->grad.data() + p * h * w;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx)
          d[y * w + xx] += g[(2 * y) * 2 * w + 2 * xx] + g[(2 * y) * 2 * w + 2 * xx + 1] +
                           g[(2 * y + 1) * 2 * w + 2 * xx] + g[(2 * y + 1) * 2 * w + 2 * xx + 1];
    }
  }));
}

namespace {
struct Lerp {
  int64_t i0, i1;
  double f;
};
inline Lerp resize_coord(int64_t o, int64_t in_sz, double scale) {
  // align_corners=false convention
  double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
  if (s < 0) s = 0;
  double limit = static_cast<double>(in_sz - 1);
  if (s > limit) s = limit;
  int64_t i0 = static_cast<int64_t>(s);
  double f = s - static_cast<double>(i0);
  int64_t i1 = std::min(i0 + 1, in_sz - 1);
  return {i0, i1, f};
}
}  // namespace

template <class T>
Var<T> bilinear_resize(const Var<T>& x, int64_t out_h, int64_t out_w) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "bilinear_resize: rank-4 input required");
  check(out_h >= 1 && out_w >= 1, "bilinear_resize: target size must be positive");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  double sh = static_cast<double>(h) / static_cast<double>(out_h);
  double sw = static_cast<double>(w) / static_cast<double>(out_w);
  Tensor<T> out({n, c, out_h, out_w});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      Lerp ly = resize_coord(oy, h, sh);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        Lerp lx = resize_coord(ox, w, sw);
        // lerp form keeps constants bit-exact
        T a = src[ly.i0 * w + lx.i0], b = src[ly.i0 * w + lx.i1];
        T cc = src[ly.i1 * w + lx.i0], d = src[ly.i1 * w + lx.i1];
        T top = a + static_cast<T>(lx.f) * (b - a);
        T bot = cc + static_cast<T>(lx.f) * (d - cc);
        dst[oy * out_w + ox] = top + static_cast<T>(ly.f) * (bot - top);
      }
    }
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(
      std::move(out), {xn}, "bilinear_resize", [xn, out_h, out_w, sh, sw](Node<T>& self) {
        if (!wants_grad(self, 0)) return;
        ensure_grad(*xn);
        const Tensor<T>& xv = xn->value;
        int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
#pragma omp parallel for schedule(static)
        for (int64_t p = 0; p < n * c; ++p) {
          const T* g = self.grad.data() + p * out_h * out_w;
          T* d = xn->grad.data() + p * h * w;
          for (int64_t oy = 0; oy < out_h; ++oy) {
            Lerp ly = resize_coord(oy, h, sh);
            for (int64_t ox = 0; ox < out_w; ++ox) {
              Lerp lx = resize_coord(ox, w, sw);
              T gv = g[oy * out_w + ox];
              T fx = static_cast<T>(lx.f), fy = static_cast<T>(ly.f);
              d[ly.i0 * w + lx.i0] += gv * (T(1) - fy) * (T(1) - fx);
              d[ly.i0 * w + lx.i1] += gv * (T(1) - fy) * fx;
              d[ly.i1 * w + lx.i0] += gv * fy * (T(1) - fx);
              d[ly.i1 * w + lx.i1] += gv * fy * fx;
            }
          }
        }
      }));
}

template <class T>
Var<T> warp_bilinear(const Var<T>& x, const std::array<double, 9>& m, int64_t out_h,
                     int64_t out_w, T fill) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "warp_bilinear: rank-4 input required");
  check(out_h >= 1 && out_w >= 1, "warp_bilinear: target size must be positive");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> out({n, c, out_h, out_w});

  // Precompute source coords per output pixel (shared across n, c).
  std::vector<double> sx(static_cast<size_t>(out_h * out_w)), sy(sx.size());
  bool degenerate = false;
  for (int64_t oy = 0; oy < out_h; ++oy)
    for (int64_t ox = 0; ox < out_w; ++ox) {
      double X = static_cast<double>(ox), Y = static_cast<double>(oy);
      double u = m[0] * X + m[1] * Y + m[2];
      double v = m[3] * X + m[4] * Y + m[5];
      double z = m[6] * X + m[7] * Y + m[8];
      if (std::abs(z) < 1e-12) {
        degenerate = true;
        z = 1;
      }
      sx[oy * out_w + ox] = u / z;
      sy[oy * out_w + ox] = v / z;
    }
  check(!degenerate, "warp_bilinear: degenerate homography");

#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h * out_w; ++i) {
      double X = sx[i], Y = sy[i];
      if (X <= -1.0 || X >= static_cast<double>(w) || Y <= -1.0 || Y >= static_cast<double>(h)) {
        dst[i] = fill;
        continue;
      }
      int64_t x0 = static_cast<int64_t>(std::floor(X)), y0 = static_cast<int64_t>(std::floor(Y));
      T fx = static_cast<T>(X - static_cast<double>(x0));
      T fy = static_cast<T>(Y - static_cast<double>(y0));
      auto tap = [&](int64_t yy, int64_t xx) -> T {
        return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? src[yy * w + xx] : fill;
      };
      T a = tap(y0, x0), b = tap(y0, x0 + 1), cc = tap(y0 + 1, x0), d = tap(y0 + 1, x0 + 1);
      T top = a + fx * (b - a);
      T bot = cc + fx * (d - cc);
      dst[i] = top + fy * (bot - top);
    }
  }
  auto xn = x.node();
  auto sxp = std::make_shared<std::vector<double>>(std::move(sx));
  auto syp = std::make_shared<std::vector<double>>(std::move(sy));
  return Var<T>(make_node<T>(
      std::move(out), {xn}, "warp_bilinear", [xn, sxp, syp, out_h, out_w](Node<T>& self) {
        if (!wants_grad(self, 0)) return;
        ensure_grad(*xn);
        const Tensor<T>& xv = xn->value;
        int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
#pragma omp parallel for schedule(static)
        for (int64_t p = 0; p < n * c; ++p) {
          const T* g = self.grad.data() + p * out_h * out_w;
          T* d = xn->grad.data() + p * h * w;
          for (int64_t i = 0; i < out_h * out_w; ++i) {
            double X = (*sxp)[i], Y = (*syp)[i];
            if (X <= -1.0 || X >= static_cast<double>(w) || Y <= -1.0 ||
                Y >= static_cast<double>(h))
              continue;
            int64_t x0 = static_cast<int64_t>(std::floor(X)),
                    y0 = static_cast<int64_t>(std::floor(Y));
            T fx = static_cast<T>(X - static_cast<double>(x0));
            T fy = static_cast<T>(Y - static_cast<double>(y0));
            T gv = g[i];
            auto scatter = [&](int64_t yy, int64_t xx, T wgt) {
              if (yy >= 0 && yy < h && xx >= 0 && xx < w) d[yy * w + xx] += gv * wgt;
            };
            scatter(y0, x0, (T(1) - fy) * (T(1) - fx));
            scatter(y0, x0 + 1, (T(1) - fy) * fx);
            scatter(y0 + 1, x0, fy * (T(1) - fx));
            scatter(y0 + 1, x0 + 1, fy * fx);
          }
        }
      }));
}

template <class T>
Var<T> flip_w(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "flip_w: rank-4 input required");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor<T> out(xv.shape());
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < n * c * h; ++p) {
    const T* src = xv.data() + p * w;
    T* dst = out.data() + p * w;
    for (int64_t i = 0; i < w; ++i) dst[i] = src[w - 1 - i];
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "flip_w", [xn](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*xn);
    const Tensor<T>& xv = xn->value;
    int64_t rows = xv.dim(0) * xv.dim(1) * xv.dim(2), w = xv.dim(3);
    for (int64_t p = 0; p < rows; ++p) {
      const T* g = self.grad.data() + p * w;
      T* d = xn->grad.data() + p * w;
      for (int64_t i = 0; i < w; ++i) d[w - 1 - i] += g[i];
    }
  }));
}

template <class T>
Var<T> crop2d(const Var<T>& x, int64_t y0, int64_t x0, int64_t ch, int64_t cw) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "crop2d: rank-4 input required");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  check(ch >= 1 && cw >= 1 && y0 >= 0 && x0 >= 0 && y0 + ch <= h && x0 + cw <= w,
        "crop2d: window outside image");
  Tensor<T> out({n, c, ch, cw});
  for (int64_t p = 0; p < n * c; ++p)
    for (int64_t y = 0; y < ch; ++y)
      std::memcpy(out.data() + (p * ch + y) * cw, xv.data() + (p * h + y0 + y) * w + x0,
                  sizeof(T) * cw);
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "crop2d", [xn, y0, x0, ch, cw](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*xn);
    const Tensor<T>& xv = xn->value;
    int64_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    for (int64_t p = 0; p < nc; ++p)
      for (int64_t y = 0; y < ch; ++y) {
        const T* g = self.grad.data() + (p * ch + y) * cw;
        T* d = xn->grad.data() + (p * h + y0 + y) * w + x0;
        for (int64_t i = 0; i < cw; ++i) d[i] += g[i];
      }
  }));
}

namespace {
// reflect-101 index (no edge duplication)
inline int64_t reflect_idx(int64_t i, int64_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}
}  // namespace

template <class T>
Var<T> reflect_pad2d(const Var<T>& x, int pt, int pb, int pl, int pr) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "reflect_pad2d: rank-4 input required");
  int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  check(pt >= 0 && pb >= 0 && pl >= 0 && pr >= 0, "reflect_pad2d: negative padding");
  check(pt < h && pb < h && pl < w && pr < w, "reflect_pad2d: padding must be smaller than image");
  int64_t oh = h + pt + pb, ow = w + pl + pr;
  Tensor<T> out({n, c, oh, ow});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      int64_t iy = reflect_idx(oy - pt, h);
      for (int64_t ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = src[iy * w + reflect_idx(ox - pl, w)];
    }
  }
  auto xn = x.node();
  return Var<T>(
      make_node<T>(std::move(out), {xn}, "reflect_pad2d", [xn, pt, pl](Node<T>& self) {
        if (!wants_grad(self, 0)) return;
        ensure_grad(*xn);
        const Tensor<T>& xv = xn->value;
        int64_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
        int64_t oh = self.value.dim(2), ow = self.value.dim(3);
#pragma omp parallel for schedule(static)
        for (int64_t p = 0; p < nc; ++p) {
          const T* g = self.grad.data() + p * oh * ow;
          T* d = xn->grad.data() + p * h * w;
          for (int64_t oy = 0; oy < oh; ++oy) {
            int64_t iy = reflect_idx(oy - pt, h);
            for (int64_t ox = 0; ox < ow; ++ox) d[iy * w + reflect_idx(ox - pl, w)] += g[oy * ow + ox];
          }
        }
      }));
}

template <class T>
Var<T> tile_spatial(const Var<T>& x, int64_t h, int64_t w) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 2, "tile_spatial: rank-2 input required");
  check(h >= 1 && w >= 1, "tile_spatial: target size must be positive");
  int64_t n = xv.dim(0), c = xv.dim(1);
  Tensor<T> out({n, c, h, w});
  for (int64_t p = 0; p < n * c; ++p) {
    T v = xv[p];
    T* dst = out.data() + p * h * w;
    std::fill(dst, dst + h * w, v);
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "tile_spatial", [xn, h, w](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*xn);
    int64_t nc = xn->value.numel();
    for (int64_t p = 0; p < nc; ++p) {
      const T* g = self.grad.data() + p * h * w;
      double acc = 0;
      for (int64_t i = 0; i < h * w; ++i) acc += static_cast<double>(g[i]);
      xn->grad[p] += static_cast<T>(acc);
    }
  }));
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& x) {
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x.value()[i]);
  auto xn = x.node();
  return Var<T>(make_node<T>(Tensor<T>::scalar(static_cast<T>(acc)), {xn}, "sum_all",
                             [xn](Node<T>& self) {
                               if (!wants_grad(self, 0)) return;
                               ensure_grad(*xn);
                               T g = self.grad[0];
                               for (int64_t i = 0; i < xn->grad.numel(); ++i) xn->grad[i] += g;
                             }));
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
  check(x.numel() > 0, "mean_all: empty tensor");
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x.value()[i]);
  T inv = T(1) / static_cast<T>(x.numel());
  auto xn = x.node();
  return Var<T>(make_node<T>(Tensor<T>::scalar(static_cast<T>(acc / x.numel())), {xn}, "mean_all",
                             [xn, inv](Node<T>& self) {
                               if (!wants_grad(self, 0)) return;
                               ensure_grad(*xn);
                               T g = self.grad[0] * inv;
                               for (int64_t i = 0; i < xn->grad.numel(); ++i) xn->grad[i] += g;
                             }));
}

template <class T>
Var<T> mean_hw(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  check(xv.rank() == 4, "mean_hw: rank-4 input required");
  int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor<T> out({n, c});
  for (int64_t p = 0; p < n * c; ++p) {
    const T* src = xv.data() + p * hw;
    double acc = 0;
    for (int64_t i = 0; i < hw; ++i) acc += static_cast<double>(src[i]);
    out[p] = static_cast<T>(acc / hw);
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "mean_hw", [xn, hw](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*xn);
    T inv = T(1) / static_cast<T>(hw);
    for (int64_t p = 0; p < self.grad.numel(); ++p) {
      T g = self.grad[p] * inv;
      T* d = xn->grad.data() + p * hw;
      for (int64_t i = 0; i < hw; ++i) d[i] += g;
    }
  }));
}

// ---------------------------------------------------------------------------
// frame axis
// ---------------------------------------------------------------------------

template <class T>
Var<T> temporal_avg_pool(const Var<T>& x, int64_t k) {
  const Tensor<T>& xv = x.value();
  check(k >= 1, "temporal_avg_pool: k must be >= 1");
  check(xv.rank() >= 1 && xv.dim(0) >= 1, "temporal_avg_pool: empty frame axis");
  int64_t t = xv.dim(0), inner = xv.numel() / t;
  int64_t g = (t + k - 1) / k;
  Shape os = xv.shape();
  os[0] = g;
  Tensor<T> out(std::move(os));
  for (int64_t gi = 0; gi < g; ++gi) {
    int64_t t0 = gi * k, t1 = std::min(t0 + k, t);
    T* dst = out.data() + gi * inner;
    if (t1 - t0 == 1) {
      std::memcpy(dst, xv.data() + t0 * inner, sizeof(T) * inner);
      continue;
    }
    T inv = T(1) / static_cast<T>(t1 - t0);
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0;
      for (int64_t tt = t0; tt < t1; ++tt) acc += static_cast<double>(xv[tt * inner + i]);
      dst[i] = static_cast<T>(acc) * inv;
    }
  }
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "temporal_avg_pool",
                             [xn, k, t, inner, g](Node<T>& self) {
                               if (!wants_grad(self, 0)) return;
                               ensure_grad(*xn);
                               for (int64_t gi = 0; gi < g; ++gi) {
                                 int64_t t0 = gi * k, t1 = std::min(t0 + k, t);
                                 T inv = T(1) / static_cast<T>(t1 - t0);
                                 const T* gp = self.grad.data() + gi * inner;
                                 for (int64_t tt = t0; tt < t1; ++tt) {
                                   T* d = xn->grad.data() + tt * inner;
                                   for (int64_t i = 0; i < inner; ++i) d[i] += gp[i] * inv;
                                 }
                               }
                             }));
}

template <class T>
Var<T> temporal_repeat(const Var<T>& x, int64_t k, int64_t t_out) {
  const Tensor<T>& xv = x.value();
  check(k >= 1 && t_out >= 1, "temporal_repeat: bad k or t_out");
  int64_t g = xv.dim(0), inner = xv.numel() / g;
  check((t_out + k - 1) / k == g, "temporal_repeat: t_out does not match group count");
  Shape os = xv.shape();
  os[0] = t_out;
  Tensor<T> out(std::move(os));
  for (int64_t tt = 0; tt < t_out; ++tt)
    std::memcpy(out.data() + tt * inner, xv.data() + (tt / k) * inner, sizeof(T) * inner);
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "temporal_repeat",
                             [xn, k, t_out, inner](Node<T>& self) {
                               if (!wants_grad(self, 0)) return;
                               ensure_grad(*xn);
                               for (int64_t tt = 0; tt < t_out; ++tt) {
                                 const T* g = self.grad.data() + tt * inner;
                                 T* d = xn->grad.data() + (tt / k) * inner;
                                 for (int64_t i = 0; i < inner; ++i) d[i] += g[i];
                               }
                             }));
}

template <class T>
Var<T> straight_through(const Var<T>& x, const std::function<Tensor<T>(const Tensor<T>&)>& f) {
  Tensor<T> out = f(x.value());
  check(out.shape() == x.shape(),
        "straight_through: transform changed shape " + shape_str(x.shape()) + " -> " +
            shape_str(out.shape()));
  auto xn = x.node();
  return Var<T>(make_node<T>(std::move(out), {xn}, "straight_through", [xn](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    ensure_grad(*xn);
    for (int64_t i = 0; i < self.grad.numel(); ++i) xn->grad[i] += self.grad[i];
  }));
}

// explicit instantiations
#define SEALKIT_INSTANTIATE(T)                                                                  \
  template Var<T> leaf<T>(Tensor<T>, bool);                                                     \
  template Var<T> constant<T>(Tensor<T>);                                                       \
  template Var<T> detach<T>(const Var<T>&);                                                     \
  template void backward<T>(const Var<T>&, const Tensor<T>&);                                   \
  template void backward_scalar<T>(const Var<T>&);                                              \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                              \
  template Var<T> mul_scalar<T>(const Var<T>&, T);                                              \
  template Var<T> relu<T>(const Var<T>&);                                                       \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                              \
  template Var<T> sigmoid<T>(const Var<T>&);                                                    \
  template Var<T> tanh_op<T>(const Var<T>&);                                                    \
  template Var<T> log_op<T>(const Var<T>&);                                                     \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                                \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> add_bias_rows<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);             \
  template Var<T> group_norm<T>(const Var<T>&, int, const Var<T>&, const Var<T>&, T);           \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                             \
  template Var<T> concat_channels<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> avg_pool2d<T>(const Var<T>&, int, int);                                       \
  template Var<T> nearest_upsample2x<T>(const Var<T>&);                                         \
  template Var<T> bilinear_resize<T>(const Var<T>&, int64_t, int64_t);                          \
  template Var<T> warp_bilinear<T>(const Var<T>&, const std::array<double, 9>&, int64_t,        \
                                   int64_t, T);                                                 \
  template Var<T> flip_w<T>(const Var<T>&);                                                     \
  template Var<T> rot90<T>(const Var<T>&, int);                                                 \
  template Var<T> channel_mix<T>(const Var<T>&, const std::vector<double>&, int64_t);           \
  template Var<T> crop2d<T>(const Var<T>&, int64_t, int64_t, int64_t, int64_t);                 \
  template Var<T> reflect_pad2d<T>(const Var<T>&, int, int, int, int);                          \
  template Var<T> tile_spatial<T>(const Var<T>&, int64_t, int64_t);                             \
  template Var<T> sum_all<T>(const Var<T>&);                                                    \
  template Var<T> mean_all<T>(const Var<T>&);                                                   \
  template Var<T> mean_hw<T>(const Var<T>&);                                                    \
  template Var<T> temporal_avg_pool<T>(const Var<T>&, int64_t);                                 \
  template Var<T> temporal_repeat<T>(const Var<T>&, int64_t, int64_t);                          \
  template Var<T> straight_through<T>(const Var<T>&,                                           \
                                      const std::function<Tensor<T>(const Tensor<T>&)>&);

SEALKIT_INSTANTIATE(float)
SEALKIT_INSTANTIATE(double)
#undef SEALKIT_INSTANTIATE

}  // namespace sealkit::nd
