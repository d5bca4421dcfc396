#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace yformer {

#ifdef YFORMER_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

// Dense shape, rank 0 (scalar) to rank 3. Rank-3 tensors are laid out
// row-major as (batch N, time L, channel C).
struct Shape {
  std::array<int64_t, 3> dim{1, 1, 1};
  int rank = 0;

  Shape() = default;
  Shape(std::initializer_list<int64_t> ds);

  int64_t numel() const;
  int64_t operator[](int i) const { return dim[static_cast<size_t>(i)]; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> values;
  bool requires_grad = false;
  std::vector<real> grad;   // allocated lazily during backward
  bool grad_ready = false;  // set once a backward pass has populated grad
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

}  // namespace detail

// Reverse-mode tensor. Cheap to copy: a Tensor is a shared handle onto one
// graph node. Leaf tensors (parameters, inputs) own their values; ops return
// fresh nodes wired to their parents.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, real v, bool requires_grad = false);
  static Tensor from_values(const Shape& s, std::vector<real> v,
                            bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  bool requires_grad() const;

  std::span<const real> values() const;
  // Mutable view onto a leaf's values (parameter updates, finite differences).
  std::span<real> values_mut();

  bool grad_ready() const;
  std::span<const real> grad() const;
  void zero_grad();

  real item() const;
  real at(int64_t n, int64_t l, int64_t c) const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// 1-d convolution geometry. `out_length` follows
// floor((L + 2*padding - kernel_size) / stride) + 1; the transposed form
// inverts it to (L - 1)*stride - 2*padding + kernel_size.
struct ConvSpec {
  int64_t kernel_size = 1;
  int64_t stride = 1;
  int64_t padding = 0;
  int64_t in_channels = 1;
  int64_t out_channels = 1;

  int64_t out_length(int64_t L) const;
  int64_t transpose_out_length(int64_t L) const;
  void validate() const;
};

struct LayerNormParams {
  Tensor gamma;  // per-channel scale
  Tensor beta;   // per-channel shift
  real epsilon = real(1e-5);
};

// ---- operations on the public contract ----

// Batched matrix product: (N,P,Q) x (N,Q,R) -> (N,P,R).
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T on the last two axes: (N,P,Q) x (N,R,Q) -> (N,P,R).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis);

// x: (N,L,C_in), w: (C_out,C_in,K), b: (C_out). Cross-correlation with
// zero padding.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              const ConvSpec& spec);

// x: (N,L,C_in), w: (C_in,C_out,K), b: (C_out). Adjoint of conv1d under a
// shared weight buffer.
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& b,
                        const ConvSpec& spec);

// -inf padding semantics; gradient routes to the first argmax of each window.
// Requires padding <= kernel_size / 2 so every window sees real data.
Tensor maxpool1d(const Tensor& x, int64_t kernel_size, int64_t stride,
                 int64_t padding);

// Normalizes over the channel axis per (n, l) position, population variance.
Tensor layer_norm(const Tensor& x, const LayerNormParams& params);

Tensor elu(const Tensor& x, real alpha = real(1));

// Per-position affine map: x: (N,L,C_in), w: (C_in,C_out), b: (C_out).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// a occupies [0, L_a), b occupies [L_a, L_a + L_b) along the time axis.
Tensor concat_time(const Tensor& a, const Tensor& b);

// Reverse-mode pass from a scalar root. Populates grad on every
// participating tensor with requires_grad. A second call over nodes whose
// grad is still populated throws; call zero_grad on the leaves first.
void backward(const Tensor& loss);

// ---- elementwise / reductions ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real s);
Tensor sum(const Tensor& x);  // rank-0 scalar
// Mean of squared differences over all elements (Eq.-style MSE once shapes
// are (N,L,O): mean over time of mean over channels).
Tensor mse(const Tensor& pred, const Tensor& target);

// ---- structural ops ----

Tensor slice_time(const Tensor& x, int64_t start, int64_t len);
// (N,L,H*dh) -> (N*H,L,dh); batch-major head blocks.
Tensor split_heads(const Tensor& x, int64_t n_heads);
Tensor merge_heads(const Tensor& x, int64_t n_heads);
// idx: one ascending row-index list per batch entry, all the same length u.
Tensor gather_time(const Tensor& x, const std::vector<std::vector<int64_t>>& idx);
// base rows at idx are replaced by `rows`; gradient splits accordingly.
Tensor scatter_time(const Tensor& base, const Tensor& rows,
                    const std::vector<std::vector<int64_t>>& idx);
Tensor mean_time(const Tensor& x);      // (N,L,C) -> (N,1,C)
Tensor cummean_time(const Tensor& x);   // row i = mean of rows [0, i]
Tensor broadcast_time(const Tensor& x, int64_t L);  // (N,1,C) -> (N,L,C)
// logits: (N,L,L); entries with key j > query i become -inf.
Tensor causal_mask_fill(const Tensor& logits);
// logits: (N,u,L_K); row r of batch n may attend keys j <= query_pos[n][r].
Tensor position_mask_fill(const Tensor& logits,
                          const std::vector<std::vector<int64_t>>& query_pos);

bool all_finite(const Tensor& x);

}  // namespace yformer
