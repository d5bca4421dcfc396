#include "yformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace yformer {

namespace {

constexpr real kNegInf = -std::numeric_limits<real>::infinity();

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("yformer: " + msg);
}

void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

int64_t idx3(int64_t L, int64_t C, int64_t n, int64_t l, int64_t c) {
  return (n * L + l) * C + c;
}

using NodePtr = std::shared_ptr<detail::Node>;

NodePtr make_node(Shape shape, std::vector<real> values,
                  std::vector<NodePtr> parents,
                  std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->values = std::move(values);
  node->parents = std::move(parents);
  node->backward_fn = std::move(backward_fn);
  for (const auto& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  return node;
}

void accumulate(detail::Node& p, int64_t i, real v) {
  p.grad[static_cast<size_t>(i)] += v;
}

}  // namespace

// ---- Shape ----

Shape::Shape(std::initializer_list<int64_t> ds) {
  if (ds.size() > 3) fail("shape rank exceeds 3");
  rank = static_cast<int>(ds.size());
  int i = 0;
  for (int64_t d : ds) {
    if (d < 0) fail("negative shape extent");
    dim[static_cast<size_t>(i++)] = d;
  }
}

int64_t Shape::numel() const {
  int64_t n = 1;
  for (int i = 0; i < rank; ++i) n *= dim[static_cast<size_t>(i)];
  return n;
}

std::string Shape::str() const {
  std::string s = "(";
  for (int i = 0; i < rank; ++i) {
    if (i) s += ",";
    s += std::to_string(dim[static_cast<size_t>(i)]);
  }
  return s + ")";
}

// ---- Node / Tensor ----

void detail::Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), real(0));
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  return from_values(s, std::vector<real>(static_cast<size_t>(s.numel()), real(0)),
                     requires_grad);
}

Tensor Tensor::full(const Shape& s, real v, bool requires_grad) {
  return from_values(s, std::vector<real>(static_cast<size_t>(s.numel()), v),
                     requires_grad);
}

Tensor Tensor::from_values(const Shape& s, std::vector<real> v, bool requires_grad) {
  check(static_cast<int64_t>(v.size()) == s.numel(),
        "value count " + std::to_string(v.size()) + " does not match shape " + s.str());
  auto node = std::make_shared<detail::Node>();
  node->shape = s;
  node->values = std::move(v);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(real v, bool requires_grad) {
  return from_values(Shape{}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return node_->shape.numel(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const real> Tensor::values() const {
  return {node_->values.data(), node_->values.size()};
}

std::span<real> Tensor::values_mut() {
  return {node_->values.data(), node_->values.size()};
}

bool Tensor::grad_ready() const { return node_->grad_ready; }

std::span<const real> Tensor::grad() const {
  if (!node_->grad_ready)
    throw std::runtime_error("yformer: gradient not populated; run backward first");
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  node_->grad.assign(node_->values.size(), real(0));
  node_->grad_ready = false;
}

real Tensor::item() const {
  check(numel() == 1, "item() on tensor of shape " + shape().str());
  return node_->values[0];
}

real Tensor::at(int64_t n, int64_t l, int64_t c) const {
  const Shape& s = shape();
  check(s.rank == 3, "at(n,l,c) requires rank 3, got " + s.str());
  return node_->values[static_cast<size_t>(idx3(s[1], s[2], n, l, c))];
}

// ---- ConvSpec ----

int64_t ConvSpec::out_length(int64_t L) const {
  return (L + 2 * padding - kernel_size) / stride + 1;
}

int64_t ConvSpec::transpose_out_length(int64_t L) const {
  return (L - 1) * stride - 2 * padding + kernel_size;
}

void ConvSpec::validate() const {
  check(kernel_size >= 1 && stride >= 1 && padding >= 0, "invalid conv spec");
  check(in_channels >= 0 && out_channels >= 1, "invalid conv channels");
}

// ---- backward engine ----

void backward(const Tensor& loss) {
  check(loss.defined(), "backward on undefined tensor");
  NodePtr root = loss.node();
  if (root->shape.numel() != 1)
    throw std::invalid_argument("yformer: backward root must be scalar, got shape " +
                                root->shape.str());
  if (!root->requires_grad)
    throw std::runtime_error("yformer: backward root does not require grad");

  // Reverse post-order over parent edges = valid reverse topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (n->grad_ready)
      throw std::runtime_error(
          "yformer: backward called twice without grad reset; call zero_grad first");
  }

  root->ensure_grad();
  root->grad[0] = real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    n->ensure_grad();
    for (const auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (detail::Node* n : order) n->grad_ready = true;
}

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sa.rank == 3 && sb.rank == 3,
        "matmul expects rank-3 tensors, got " + sa.str() + " and " + sb.str());
  check(sa[0] == sb[0] && sa[2] == sb[1],
        "matmul shape mismatch: " + sa.str() + " x " + sb.str());
  const int64_t N = sa[0], P = sa[1], Q = sa[2], R = sb[2];
  std::vector<real> out(static_cast<size_t>(N * P * R), real(0));
  const auto* av = a.values().data();
  const auto* bv = b.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t p = 0; p < P; ++p) {
      real* orow = out.data() + (n * P + p) * R;
      const real* arow = av + (n * P + p) * Q;
      for (int64_t q = 0; q < Q; ++q) {
        const real x = arow[q];
        const real* brow = bv + (n * Q + q) * R;
        for (int64_t r = 0; r < R; ++r) orow[r] += x * brow[r];
      }
    }
  auto bw = [N, P, Q, R](detail::Node& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t p = 0; p < P; ++p) {
        const real* grow = g + (n * P + p) * R;
        const real* arow = A.values.data() + (n * P + p) * Q;
        for (int64_t q = 0; q < Q; ++q) {
          const real* brow = B.values.data() + (n * Q + q) * R;
          if (A.requires_grad) {
            real acc = 0;
            for (int64_t r = 0; r < R; ++r) acc += grow[r] * brow[r];
            accumulate(A, (n * P + p) * Q + q, acc);
          }
          if (B.requires_grad) {
            const real x = arow[q];
            real* bg = B.grad.data() + (n * Q + q) * R;
            for (int64_t r = 0; r < R; ++r) bg[r] += x * grow[r];
          }
        }
      }
  };
  return Tensor(make_node({N, P, R}, std::move(out), {a.node(), b.node()}, bw));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sa.rank == 3 && sb.rank == 3,
        "matmul_nt expects rank-3 tensors, got " + sa.str() + " and " + sb.str());
  check(sa[0] == sb[0] && sa[2] == sb[2],
        "matmul_nt shape mismatch: " + sa.str() + " x " + sb.str());
  const int64_t N = sa[0], P = sa[1], Q = sa[2], R = sb[1];
  std::vector<real> out(static_cast<size_t>(N * P * R));
  const auto* av = a.values().data();
  const auto* bv = b.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t p = 0; p < P; ++p) {
      const real* arow = av + (n * P + p) * Q;
      real* orow = out.data() + (n * P + p) * R;
      for (int64_t r = 0; r < R; ++r) {
        const real* brow = bv + (n * R + r) * Q;
        real acc = 0;
        for (int64_t q = 0; q < Q; ++q) acc += arow[q] * brow[q];
        orow[r] = acc;
      }
    }
  auto bw = [N, P, Q, R](detail::Node& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t p = 0; p < P; ++p) {
        const real* grow = g + (n * P + p) * R;
        const real* arow = A.values.data() + (n * P + p) * Q;
        for (int64_t r = 0; r < R; ++r) {
          const real gv = grow[r];
          if (gv == real(0)) continue;
          const real* brow = B.values.data() + (n * R + r) * Q;
          if (A.requires_grad) {
            real* ag = A.grad.data() + (n * P + p) * Q;
            for (int64_t q = 0; q < Q; ++q) ag[q] += gv * brow[q];
          }
          if (B.requires_grad) {
            real* bg = B.grad.data() + (n * R + r) * Q;
            for (int64_t q = 0; q < Q; ++q) bg[q] += gv * arow[q];
          }
        }
      }
  };
  return Tensor(make_node({N, P, R}, std::move(out), {a.node(), b.node()}, bw));
}

// ---- softmax ----

// -inf logits are legal (masking) and map to exactly-zero weight; NaN and
// +inf are rejected. Each slice needs at least one finite entry.
Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  check(s.rank >= 1, "softmax on scalar");
  check(axis >= 0 && axis < s.rank, "softmax axis out of range for " + s.str());
  for (real v : x.values())
    if (std::isnan(v) || v == std::numeric_limits<real>::infinity())
      fail("softmax input contains NaN or +inf");

  const int64_t len = s[axis];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < s.rank; ++i) inner *= s[i];

  std::vector<real> out(x.values().begin(), x.values().end());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      real m = kNegInf;
      for (int64_t a = 0; a < len; ++a)
        m = std::max(m, out[static_cast<size_t>((o * len + a) * inner + i)]);
      check(std::isfinite(m), "softmax slice is entirely -inf");
      real denom = 0;
      for (int64_t a = 0; a < len; ++a) {
        auto& v = out[static_cast<size_t>((o * len + a) * inner + i)];
        v = std::exp(v - m);
        denom += v;
      }
      for (int64_t a = 0; a < len; ++a)
        out[static_cast<size_t>((o * len + a) * inner + i)] /= denom;
    }

  auto bw = [len, outer, inner](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* y = self.values.data();
    const real* g = self.grad.data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        real dot = 0;
        for (int64_t a = 0; a < len; ++a) {
          const int64_t k = (o * len + a) * inner + i;
          dot += y[k] * g[k];
        }
        for (int64_t a = 0; a < len; ++a) {
          const int64_t k = (o * len + a) * inner + i;
          accumulate(X, k, y[k] * (g[k] - dot));
        }
      }
  };
  return Tensor(make_node(s, std::move(out), {x.node()}, bw));
}

// ---- conv1d ----

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              const ConvSpec& spec) {
  spec.validate();
  const Shape& sx = x.shape();
  check(sx.rank == 3, "conv1d input must be rank 3, got " + sx.str());
  const int64_t N = sx[0], L = sx[1], Ci = sx[2];
  check(Ci == spec.in_channels, "conv1d channel mismatch: input " + sx.str() +
                                    " vs spec in_channels " +
                                    std::to_string(spec.in_channels));
  const Shape& sw = w.shape();
  check(sw == Shape({spec.out_channels, spec.in_channels, spec.kernel_size}),
        "conv1d weight shape " + sw.str() + " does not match spec");
  check(b.shape() == Shape({spec.out_channels}), "conv1d bias shape mismatch");
  check(L + 2 * spec.padding >= spec.kernel_size,
        "conv1d input length " + std::to_string(L) + " too short for kernel " +
            std::to_string(spec.kernel_size) + " with padding " +
            std::to_string(spec.padding));
  const int64_t K = spec.kernel_size, S = spec.stride, P = spec.padding;
  const int64_t Co = spec.out_channels;
  const int64_t Lo = spec.out_length(L);

  std::vector<real> out(static_cast<size_t>(N * Lo * Co));
  const real* xv = x.values().data();
  const real* wv = w.values().data();
  const real* bv = b.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t lo = 0; lo < Lo; ++lo) {
      real* orow = out.data() + (n * Lo + lo) * Co;
      for (int64_t co = 0; co < Co; ++co) orow[co] = bv[co];
      const int64_t t0 = lo * S - P;
      for (int64_t k = 0; k < K; ++k) {
        const int64_t t = t0 + k;
        if (t < 0 || t >= L) continue;
        const real* xrow = xv + (n * L + t) * Ci;
        for (int64_t co = 0; co < Co; ++co) {
          const real* wrow = wv + (co * Ci) * K + k;
          real acc = 0;
          for (int64_t ci = 0; ci < Ci; ++ci) acc += wrow[ci * K] * xrow[ci];
          orow[co] += acc;
        }
      }
    }

  auto bw = [N, L, Ci, K, S, P, Co, Lo](detail::Node& self) {
    auto& X = *self.parents[0];
    auto& W = *self.parents[1];
    auto& B = *self.parents[2];
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t lo = 0; lo < Lo; ++lo) {
        const real* grow = g + (n * Lo + lo) * Co;
        if (B.requires_grad)
          for (int64_t co = 0; co < Co; ++co) accumulate(B, co, grow[co]);
        const int64_t t0 = lo * S - P;
        for (int64_t k = 0; k < K; ++k) {
          const int64_t t = t0 + k;
          if (t < 0 || t >= L) continue;
          const real* xrow = X.values.data() + (n * L + t) * Ci;
          for (int64_t co = 0; co < Co; ++co) {
            const real gv = grow[co];
            if (gv == real(0)) continue;
            const real* wrow = W.values.data() + (co * Ci) * K + k;
            if (X.requires_grad) {
              real* xg = X.grad.data() + (n * L + t) * Ci;
              for (int64_t ci = 0; ci < Ci; ++ci) xg[ci] += gv * wrow[ci * K];
            }
            if (W.requires_grad) {
              real* wg = W.grad.data() + (co * Ci) * K + k;
              for (int64_t ci = 0; ci < Ci; ++ci) wg[ci * K] += gv * xrow[ci];
            }
          }
        }
      }
  };
  return Tensor(
      make_node({N, Lo, Co}, std::move(out), {x.node(), w.node(), b.node()}, bw));
}

// ---- conv_transpose1d ----

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& b,
                        const ConvSpec& spec) {
  spec.validate();
  const Shape& sx = x.shape();
  check(sx.rank == 3, "conv_transpose1d input must be rank 3, got " + sx.str());
  const int64_t N = sx[0], L = sx[1], Ci = sx[2];
  check(Ci == spec.in_channels, "conv_transpose1d channel mismatch: input " +
                                    sx.str() + " vs spec in_channels " +
                                    std::to_string(spec.in_channels));
  const Shape& sw = w.shape();
  check(sw == Shape({spec.in_channels, spec.out_channels, spec.kernel_size}),
        "conv_transpose1d weight shape " + sw.str() + " does not match spec");
  check(b.shape() == Shape({spec.out_channels}),
        "conv_transpose1d bias shape mismatch");
  const int64_t K = spec.kernel_size, S = spec.stride, P = spec.padding;
  const int64_t Co = spec.out_channels;
  const int64_t Lo = spec.transpose_out_length(L);
  check(Lo >= 1, "conv_transpose1d output length would be " + std::to_string(Lo));

  std::vector<real> out(static_cast<size_t>(N * Lo * Co));
  const real* xv = x.values().data();
  const real* wv = w.values().data();
  const real* bv = b.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t t = 0; t < Lo; ++t) {
      real* orow = out.data() + (n * Lo + t) * Co;
      for (int64_t co = 0; co < Co; ++co) orow[co] = bv[co];
    }
  for (int64_t n = 0; n < N; ++n)
    for (int64_t l = 0; l < L; ++l) {
      const real* xrow = xv + (n * L + l) * Ci;
      for (int64_t k = 0; k < K; ++k) {
        const int64_t t = l * S + k - P;
        if (t < 0 || t >= Lo) continue;
        real* orow = out.data() + (n * Lo + t) * Co;
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const real xval = xrow[ci];
          if (xval == real(0)) continue;
          const real* wrow = wv + (ci * Co) * K + k;
          for (int64_t co = 0; co < Co; ++co) orow[co] += xval * wrow[co * K];
        }
      }
    }

  auto bw = [N, L, Ci, K, S, P, Co, Lo](detail::Node& self) {
    auto& X = *self.parents[0];
    auto& W = *self.parents[1];
    auto& B = *self.parents[2];
    const real* g = self.grad.data();
    if (B.requires_grad)
      for (int64_t n = 0; n < N; ++n)
        for (int64_t t = 0; t < Lo; ++t) {
          const real* grow = g + (n * Lo + t) * Co;
          for (int64_t co = 0; co < Co; ++co) accumulate(B, co, grow[co]);
        }
    for (int64_t n = 0; n < N; ++n)
      for (int64_t l = 0; l < L; ++l) {
        const real* xrow = X.values.data() + (n * L + l) * Ci;
        for (int64_t k = 0; k < K; ++k) {
          const int64_t t = l * S + k - P;
          if (t < 0 || t >= Lo) continue;
          const real* grow = g + (n * Lo + t) * Co;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const real* wrow = W.values.data() + (ci * Co) * K + k;
            if (X.requires_grad) {
              real acc = 0;
              for (int64_t co = 0; co < Co; ++co) acc += grow[co] * wrow[co * K];
              accumulate(X, (n * L + l) * Ci + ci, acc);
            }
            if (W.requires_grad) {
              real* wg = W.grad.data() + (ci * Co) * K + k;
              const real xval = xrow[ci];
              for (int64_t co = 0; co < Co; ++co) wg[co * K] += xval * grow[co];
            }
          }
        }
      }
  };
  return Tensor(
      make_node({N, Lo, Co}, std::move(out), {x.node(), w.node(), b.node()}, bw));
}

// ---- maxpool1d ----

Tensor maxpool1d(const Tensor& x, int64_t kernel_size, int64_t stride,
                 int64_t padding) {
  const Shape& s = x.shape();
  check(s.rank == 3, "maxpool1d input must be rank 3, got " + s.str());
  check(kernel_size >= 1 && stride >= 1 && padding >= 0, "invalid maxpool spec");
  check(padding <= kernel_size / 2, "maxpool1d padding must be <= kernel_size/2");
  const int64_t N = s[0], L = s[1], C = s[2];
  check(L + 2 * padding >= kernel_size,
        "maxpool1d input length " + std::to_string(L) + " too short for kernel " +
            std::to_string(kernel_size));
  const int64_t Lo = (L + 2 * padding - kernel_size) / stride + 1;

  std::vector<real> out(static_cast<size_t>(N * Lo * C));
  std::vector<int64_t> argmax(static_cast<size_t>(N * Lo * C));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t lo = 0; lo < Lo; ++lo) {
      const int64_t t0 = lo * stride - padding;
      for (int64_t c = 0; c < C; ++c) {
        real best = kNegInf;
        int64_t best_t = -1;
        for (int64_t m = 0; m < kernel_size; ++m) {
          const int64_t t = t0 + m;
          if (t < 0 || t >= L) continue;  // -inf padding never wins
          const real v = xv[(n * L + t) * C + c];
          if (v > best) {
            best = v;
            best_t = t;
          }
        }
        const int64_t o = (n * Lo + lo) * C + c;
        out[static_cast<size_t>(o)] = best;
        argmax[static_cast<size_t>(o)] = best_t;
      }
    }

  auto bw = [N, Lo, C, L, argmax = std::move(argmax)](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t lo = 0; lo < Lo; ++lo)
        for (int64_t c = 0; c < C; ++c) {
          const int64_t o = (n * Lo + lo) * C + c;
          accumulate(X, (n * L + argmax[static_cast<size_t>(o)]) * C + c, g[o]);
        }
  };
  return Tensor(make_node({N, Lo, C}, std::move(out), {x.node()}, bw));
}

// ---- layer_norm ----

Tensor layer_norm(const Tensor& x, const LayerNormParams& params) {
  const Shape& s = x.shape();
  check(s.rank == 3, "layer_norm input must be rank 3, got " + s.str());
  const int64_t N = s[0], L = s[1], C = s[2];
  check(C >= 1, "layer_norm needs at least one channel");
  check(params.gamma.shape() == Shape({C}) && params.beta.shape() == Shape({C}),
        "layer_norm gamma/beta must have shape (" + std::to_string(C) + ")");
  check(params.epsilon > 0, "layer_norm epsilon must be positive");
  const real eps = params.epsilon;

  std::vector<real> out(static_cast<size_t>(N * L * C));
  std::vector<real> xhat(static_cast<size_t>(N * L * C));
  std::vector<real> inv_std(static_cast<size_t>(N * L));
  const real* xv = x.values().data();
  const real* gv = params.gamma.values().data();
  const real* bv = params.beta.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t l = 0; l < L; ++l) {
      const real* row = xv + (n * L + l) * C;
      real mu = 0;
      for (int64_t c = 0; c < C; ++c) mu += row[c];
      mu /= real(C);
      real var = 0;
      for (int64_t c = 0; c < C; ++c) {
        const real d = row[c] - mu;
        var += d * d;
      }
      var /= real(C);
      const real inv = real(1) / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(n * L + l)] = inv;
      for (int64_t c = 0; c < C; ++c) {
        const int64_t o = (n * L + l) * C + c;
        xhat[static_cast<size_t>(o)] = (row[c] - mu) * inv;
        out[static_cast<size_t>(o)] = gv[c] * xhat[static_cast<size_t>(o)] + bv[c];
      }
    }

  auto bw = [N, L, C, xhat = std::move(xhat),
             inv_std = std::move(inv_std)](detail::Node& self) {
    auto& X = *self.parents[0];
    auto& G = *self.parents[1];
    auto& B = *self.parents[2];
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t l = 0; l < L; ++l) {
        const int64_t base = (n * L + l) * C;
        real mean_gy = 0, mean_gyx = 0;
        for (int64_t c = 0; c < C; ++c) {
          const real gy = g[base + c] * G.values[static_cast<size_t>(c)];
          mean_gy += gy;
          mean_gyx += gy * xhat[static_cast<size_t>(base + c)];
        }
        mean_gy /= real(C);
        mean_gyx /= real(C);
        const real inv = inv_std[static_cast<size_t>(n * L + l)];
        for (int64_t c = 0; c < C; ++c) {
          const real xh = xhat[static_cast<size_t>(base + c)];
          if (G.requires_grad) accumulate(G, c, g[base + c] * xh);
          if (B.requires_grad) accumulate(B, c, g[base + c]);
          if (X.requires_grad) {
            const real gy = g[base + c] * G.values[static_cast<size_t>(c)];
            accumulate(X, base + c, inv * (gy - mean_gy - xh * mean_gyx));
          }
        }
      }
  };
  return Tensor(make_node(s, std::move(out),
                          {x.node(), params.gamma.node(), params.beta.node()}, bw));
}

// ---- elu ----

Tensor elu(const Tensor& x, real alpha) {
  std::vector<real> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > 0 ? v : alpha * (std::exp(v) - real(1));
  auto bw = [alpha](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (size_t i = 0; i < self.values.size(); ++i) {
      const real xv = X.values[i];
      X.grad[i] += g[i] * (xv > 0 ? real(1) : alpha * std::exp(xv));
    }
  };
  return Tensor(make_node(x.shape(), std::move(out), {x.node()}, bw));
}

// ---- linear ----

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  check(sx.rank == 3, "linear input must be rank 3, got " + sx.str());
  check(sw.rank == 2, "linear weight must be rank 2, got " + sw.str());
  const int64_t N = sx[0], L = sx[1], Ci = sx[2], Co = sw[1];
  check(sw[0] == Ci, "linear shape mismatch: input " + sx.str() + " vs weight " +
                         sw.str());
  check(b.shape() == Shape({Co}), "linear bias shape mismatch");

  std::vector<real> out(static_cast<size_t>(N * L * Co));
  const real* xv = x.values().data();
  const real* wv = w.values().data();
  const real* bv = b.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t l = 0; l < L; ++l) {
      const real* xrow = xv + (n * L + l) * Ci;
      real* orow = out.data() + (n * L + l) * Co;
      for (int64_t co = 0; co < Co; ++co) orow[co] = bv[co];
      for (int64_t ci = 0; ci < Ci; ++ci) {
        const real xval = xrow[ci];
        const real* wrow = wv + ci * Co;
        for (int64_t co = 0; co < Co; ++co) orow[co] += xval * wrow[co];
      }
    }

  auto bw = [N, L, Ci, Co](detail::Node& self) {
    auto& X = *self.parents[0];
    auto& W = *self.parents[1];
    auto& B = *self.parents[2];
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t l = 0; l < L; ++l) {
        const real* grow = g + (n * L + l) * Co;
        const real* xrow = X.values.data() + (n * L + l) * Ci;
        if (B.requires_grad)
          for (int64_t co = 0; co < Co; ++co) accumulate(B, co, grow[co]);
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const real* wrow = W.values.data() + ci * Co;
          if (X.requires_grad) {
            real acc = 0;
            for (int64_t co = 0; co < Co; ++co) acc += grow[co] * wrow[co];
            accumulate(X, (n * L + l) * Ci + ci, acc);
          }
          if (W.requires_grad) {
            real* wg = W.grad.data() + ci * Co;
            const real xval = xrow[ci];
            for (int64_t co = 0; co < Co; ++co) wg[co] += xval * grow[co];
          }
        }
      }
  };
  return Tensor(
      make_node({N, L, Co}, std::move(out), {x.node(), w.node(), b.node()}, bw));
}

// ---- concat / slice ----

Tensor concat_time(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  check(sa.rank == 3 && sb.rank == 3, "concat_time expects rank-3 tensors");
  check(sa[0] == sb[0] && sa[2] == sb[2],
        "concat_time non-time extents mismatch: " + sa.str() + " vs " + sb.str());
  const int64_t N = sa[0], La = sa[1], Lb = sb[1], C = sa[2];
  std::vector<real> out(static_cast<size_t>(N * (La + Lb) * C));
  const real* av = a.values().data();
  const real* bv = b.values().data();
  for (int64_t n = 0; n < N; ++n) {
    std::copy(av + n * La * C, av + (n + 1) * La * C,
              out.data() + n * (La + Lb) * C);
    std::copy(bv + n * Lb * C, bv + (n + 1) * Lb * C,
              out.data() + (n * (La + Lb) + La) * C);
  }
  auto bw = [N, La, Lb, C](detail::Node& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n) {
      if (A.requires_grad)
        for (int64_t i = 0; i < La * C; ++i)
          A.grad[static_cast<size_t>(n * La * C + i)] += g[n * (La + Lb) * C + i];
      if (B.requires_grad)
        for (int64_t i = 0; i < Lb * C; ++i)
          B.grad[static_cast<size_t>(n * Lb * C + i)] +=
              g[(n * (La + Lb) + La) * C + i];
    }
  };
  return Tensor(make_node({N, La + Lb, C}, std::move(out), {a.node(), b.node()}, bw));
}

Tensor slice_time(const Tensor& x, int64_t start, int64_t len) {
  const Shape& s = x.shape();
  check(s.rank == 3, "slice_time expects rank 3, got " + s.str());
  check(start >= 0 && len >= 0 && start + len <= s[1],
        "slice_time range [" + std::to_string(start) + "," +
            std::to_string(start + len) + ") out of bounds for " + s.str());
  const int64_t N = s[0], L = s[1], C = s[2];
  std::vector<real> out(static_cast<size_t>(N * len * C));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    std::copy(xv + (n * L + start) * C, xv + (n * L + start + len) * C,
              out.data() + n * len * C);
  auto bw = [N, L, C, start, len](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t i = 0; i < len * C; ++i)
        X.grad[static_cast<size_t>((n * L + start) * C + i)] += g[n * len * C + i];
  };
  return Tensor(make_node({N, len, C}, std::move(out), {x.node()}, bw));
}

// ---- elementwise / reductions ----

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + " shape mismatch: " +
                                    a.shape().str() + " vs " + b.shape().str());
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<real> out(a.values().begin(), a.values().end());
  const real* bv = b.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto bw = [](detail::Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  };
  return Tensor(make_node(a.shape(), std::move(out), {a.node(), b.node()}, bw));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<real> out(a.values().begin(), a.values().end());
  const real* bv = b.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto bw = [](detail::Node& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i];
      if (B.requires_grad) B.grad[i] -= self.grad[i];
    }
  };
  return Tensor(make_node(a.shape(), std::move(out), {a.node(), b.node()}, bw));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<real> out(a.values().begin(), a.values().end());
  const real* bv = b.values().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto bw = [](detail::Node& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i] * B.values[i];
      if (B.requires_grad) B.grad[i] += self.grad[i] * A.values[i];
    }
  };
  return Tensor(make_node(a.shape(), std::move(out), {a.node(), b.node()}, bw));
}

Tensor scale(const Tensor& x, real s) {
  std::vector<real> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= s;
  auto bw = [s](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += s * self.grad[i];
  };
  return Tensor(make_node(x.shape(), std::move(out), {x.node()}, bw));
}

Tensor sum(const Tensor& x) {
  real acc = 0;
  for (real v : x.values()) acc += v;
  auto bw = [](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real g = self.grad[0];
    for (auto& gv : X.grad) gv += g;
  };
  return Tensor(make_node(Shape{}, {acc}, {x.node()}, bw));
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "mse");
  check(pred.numel() > 0, "mse on empty tensor");
  const real inv_n = real(1) / real(pred.numel());
  real acc = 0;
  const real* pv = pred.values().data();
  const real* tv = target.values().data();
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const real d = pv[i] - tv[i];
    acc += d * d;
  }
  auto bw = [inv_n](detail::Node& self) {
    auto& P = *self.parents[0];
    auto& T = *self.parents[1];
    const real g = self.grad[0];
    for (size_t i = 0; i < P.values.size(); ++i) {
      const real d = real(2) * inv_n * (P.values[i] - T.values[i]) * g;
      if (P.requires_grad) P.grad[i] += d;
      if (T.requires_grad) T.grad[i] -= d;
    }
  };
  return Tensor(
      make_node(Shape{}, {acc * inv_n}, {pred.node(), target.node()}, bw));
}

// ---- head split / merge ----

Tensor split_heads(const Tensor& x, int64_t n_heads) {
  const Shape& s = x.shape();
  check(s.rank == 3, "split_heads expects rank 3, got " + s.str());
  check(s[2] % n_heads == 0, "channels " + std::to_string(s[2]) +
                                 " not divisible by heads " +
                                 std::to_string(n_heads));
  const int64_t N = s[0], L = s[1], C = s[2], H = n_heads, D = C / n_heads;
  std::vector<real> out(static_cast<size_t>(N * H * L * D));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t l = 0; l < L; ++l) {
        const real* src = xv + (n * L + l) * C + h * D;
        real* dst = out.data() + ((n * H + h) * L + l) * D;
        std::copy(src, src + D, dst);
      }
  auto bw = [N, L, C, H, D](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t l = 0; l < L; ++l) {
          const real* src = g + ((n * H + h) * L + l) * D;
          real* dst = X.grad.data() + (n * L + l) * C + h * D;
          for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
        }
  };
  return Tensor(make_node({N * H, L, D}, std::move(out), {x.node()}, bw));
}

Tensor merge_heads(const Tensor& x, int64_t n_heads) {
  const Shape& s = x.shape();
  check(s.rank == 3, "merge_heads expects rank 3, got " + s.str());
  check(s[0] % n_heads == 0, "batch " + std::to_string(s[0]) +
                                 " not divisible by heads " +
                                 std::to_string(n_heads));
  const int64_t H = n_heads, N = s[0] / H, L = s[1], D = s[2], C = H * D;
  std::vector<real> out(static_cast<size_t>(N * L * C));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t l = 0; l < L; ++l) {
        const real* src = xv + ((n * H + h) * L + l) * D;
        real* dst = out.data() + (n * L + l) * C + h * D;
        std::copy(src, src + D, dst);
      }
  auto bw = [N, L, C, H, D](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t l = 0; l < L; ++l) {
          const real* src = g + (n * L + l) * C + h * D;
          real* dst = X.grad.data() + ((n * H + h) * L + l) * D;
          for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
        }
  };
  return Tensor(make_node({N, L, C}, std::move(out), {x.node()}, bw));
}

// ---- gather / scatter along time ----

namespace {
void check_index_lists(const std::vector<std::vector<int64_t>>& idx, int64_t N,
                       int64_t L, const char* op) {
  check(static_cast<int64_t>(idx.size()) == N,
        std::string(op) + ": need one index list per batch entry");
  const size_t u = idx.empty() ? 0 : idx[0].size();
  for (const auto& list : idx) {
    check(list.size() == u, std::string(op) + ": ragged index lists");
    for (int64_t i : list)
      check(i >= 0 && i < L, std::string(op) + ": index out of range");
  }
}
}  // namespace

Tensor gather_time(const Tensor& x, const std::vector<std::vector<int64_t>>& idx) {
  const Shape& s = x.shape();
  check(s.rank == 3, "gather_time expects rank 3, got " + s.str());
  const int64_t N = s[0], L = s[1], C = s[2];
  check_index_lists(idx, N, L, "gather_time");
  const int64_t U = idx.empty() ? 0 : static_cast<int64_t>(idx[0].size());
  std::vector<real> out(static_cast<size_t>(N * U * C));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t r = 0; r < U; ++r) {
      const real* src = xv + (n * L + idx[static_cast<size_t>(n)][static_cast<size_t>(r)]) * C;
      std::copy(src, src + C, out.data() + (n * U + r) * C);
    }
  auto bw = [N, L, C, U, idx](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t r = 0; r < U; ++r) {
        real* dst = X.grad.data() +
                    (n * L + idx[static_cast<size_t>(n)][static_cast<size_t>(r)]) * C;
        const real* src = g + (n * U + r) * C;
        for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
      }
  };
  return Tensor(make_node({N, U, C}, std::move(out), {x.node()}, bw));
}

Tensor scatter_time(const Tensor& base, const Tensor& rows,
                    const std::vector<std::vector<int64_t>>& idx) {
  const Shape& sb = base.shape();
  const Shape& sr = rows.shape();
  check(sb.rank == 3 && sr.rank == 3, "scatter_time expects rank-3 tensors");
  check(sb[0] == sr[0] && sb[2] == sr[2],
        "scatter_time batch/channel mismatch: " + sb.str() + " vs " + sr.str());
  const int64_t N = sb[0], L = sb[1], C = sb[2], U = sr[1];
  check_index_lists(idx, N, L, "scatter_time");
  check(idx.empty() || static_cast<int64_t>(idx[0].size()) == U,
        "scatter_time: rows count does not match index lists");

  std::vector<real> out(base.values().begin(), base.values().end());
  const real* rv = rows.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t r = 0; r < U; ++r) {
      real* dst = out.data() +
                  (n * L + idx[static_cast<size_t>(n)][static_cast<size_t>(r)]) * C;
      std::copy(rv + (n * U + r) * C, rv + (n * U + r + 1) * C, dst);
    }
  auto bw = [N, L, C, U, idx](detail::Node& self) {
    auto& B = *self.parents[0];
    auto& R = *self.parents[1];
    const real* g = self.grad.data();
    std::vector<char> replaced(static_cast<size_t>(N * L), 0);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t r = 0; r < U; ++r)
        replaced[static_cast<size_t>(
            n * L + idx[static_cast<size_t>(n)][static_cast<size_t>(r)])] = 1;
    if (R.requires_grad)
      for (int64_t n = 0; n < N; ++n)
        for (int64_t r = 0; r < U; ++r) {
          const real* src =
              g + (n * L + idx[static_cast<size_t>(n)][static_cast<size_t>(r)]) * C;
          real* dst = R.grad.data() + (n * U + r) * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
        }
    if (B.requires_grad)
      for (int64_t n = 0; n < N; ++n)
        for (int64_t l = 0; l < L; ++l) {
          if (replaced[static_cast<size_t>(n * L + l)]) continue;
          const real* src = g + (n * L + l) * C;
          real* dst = B.grad.data() + (n * L + l) * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
        }
  };
  return Tensor(make_node(sb, std::move(out), {base.node(), rows.node()}, bw));
}

// ---- time means / broadcast ----

Tensor mean_time(const Tensor& x) {
  const Shape& s = x.shape();
  check(s.rank == 3 && s[1] >= 1, "mean_time expects rank 3 with L >= 1");
  const int64_t N = s[0], L = s[1], C = s[2];
  std::vector<real> out(static_cast<size_t>(N * C), real(0));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t c = 0; c < C; ++c)
        out[static_cast<size_t>(n * C + c)] += xv[(n * L + l) * C + c];
  for (auto& v : out) v /= real(L);
  auto bw = [N, L, C](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t l = 0; l < L; ++l)
        for (int64_t c = 0; c < C; ++c)
          X.grad[static_cast<size_t>((n * L + l) * C + c)] +=
              g[n * C + c] / real(L);
  };
  return Tensor(make_node({N, 1, C}, std::move(out), {x.node()}, bw));
}

Tensor cummean_time(const Tensor& x) {
  const Shape& s = x.shape();
  check(s.rank == 3 && s[1] >= 1, "cummean_time expects rank 3 with L >= 1");
  const int64_t N = s[0], L = s[1], C = s[2];
  std::vector<real> out(static_cast<size_t>(N * L * C));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      real acc = 0;
      for (int64_t l = 0; l < L; ++l) {
        acc += xv[(n * L + l) * C + c];
        out[static_cast<size_t>((n * L + l) * C + c)] = acc / real(l + 1);
      }
    }
  auto bw = [N, L, C](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    // dx[t] = sum_{i >= t} g[i] / (i+1): suffix sums.
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        real suffix = 0;
        for (int64_t l = L - 1; l >= 0; --l) {
          suffix += g[(n * L + l) * C + c] / real(l + 1);
          X.grad[static_cast<size_t>((n * L + l) * C + c)] += suffix;
        }
      }
  };
  return Tensor(make_node(s, std::move(out), {x.node()}, bw));
}

Tensor broadcast_time(const Tensor& x, int64_t L) {
  const Shape& s = x.shape();
  check(s.rank == 3 && s[1] == 1, "broadcast_time expects shape (N,1,C)");
  check(L >= 1, "broadcast_time length must be >= 1");
  const int64_t N = s[0], C = s[2];
  std::vector<real> out(static_cast<size_t>(N * L * C));
  const real* xv = x.values().data();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t l = 0; l < L; ++l)
      std::copy(xv + n * C, xv + (n + 1) * C, out.data() + (n * L + l) * C);
  auto bw = [N, L, C](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t l = 0; l < L; ++l)
        for (int64_t c = 0; c < C; ++c)
          X.grad[static_cast<size_t>(n * C + c)] += g[(n * L + l) * C + c];
  };
  return Tensor(make_node({N, L, C}, std::move(out), {x.node()}, bw));
}

// ---- masking ----

Tensor causal_mask_fill(const Tensor& logits) {
  const Shape& s = logits.shape();
  check(s.rank == 3 && s[1] == s[2],
        "causal_mask_fill expects square (N,L,L) logits, got " + s.str());
  const int64_t N = s[0], L = s[1];
  std::vector<real> out(logits.values().begin(), logits.values().end());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t i = 0; i < L; ++i)
      for (int64_t j = i + 1; j < L; ++j)
        out[static_cast<size_t>((n * L + i) * L + j)] = kNegInf;
  auto bw = [N, L](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t i = 0; i < L; ++i)
        for (int64_t j = 0; j <= i; ++j)
          X.grad[static_cast<size_t>((n * L + i) * L + j)] += g[(n * L + i) * L + j];
  };
  return Tensor(make_node(s, std::move(out), {logits.node()}, bw));
}

Tensor position_mask_fill(const Tensor& logits,
                          const std::vector<std::vector<int64_t>>& query_pos) {
  const Shape& s = logits.shape();
  check(s.rank == 3, "position_mask_fill expects rank 3, got " + s.str());
  const int64_t N = s[0], U = s[1], LK = s[2];
  check(static_cast<int64_t>(query_pos.size()) == N,
        "position_mask_fill: need one position list per batch entry");
  for (const auto& list : query_pos)
    check(static_cast<int64_t>(list.size()) == U,
          "position_mask_fill: positions do not match logit rows");
  std::vector<real> out(logits.values().begin(), logits.values().end());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t r = 0; r < U; ++r) {
      const int64_t pos = query_pos[static_cast<size_t>(n)][static_cast<size_t>(r)];
      for (int64_t j = pos + 1; j < LK; ++j)
        out[static_cast<size_t>((n * U + r) * LK + j)] = kNegInf;
    }
  auto bw = [N, U, LK, query_pos](detail::Node& self) {
    auto& X = *self.parents[0];
    if (!X.requires_grad) return;
    const real* g = self.grad.data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t r = 0; r < U; ++r) {
        const int64_t pos =
            query_pos[static_cast<size_t>(n)][static_cast<size_t>(r)];
        for (int64_t j = 0; j <= std::min(pos, LK - 1); ++j)
          X.grad[static_cast<size_t>((n * U + r) * LK + j)] +=
              g[(n * U + r) * LK + j];
      }
  };
  return Tensor(make_node(s, std::move(out), {logits.node()}, bw));
}

bool all_finite(const Tensor& x) {
  for (real v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace yformer
