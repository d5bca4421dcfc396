#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "yformer/rng.hpp"
#include "yformer/tensor.hpp"

namespace yformer {

struct AttentionConfig {
  int64_t d_model = 32;
  int64_t n_heads = 4;
  // c in u = ceil(c * ln L_Q) dominant queries and ceil(c * ln L_K) sampled
  // keys; both clamped to [1, L].
  double sampling_factor = 5.0;
  uint64_t seed = 0;

  int64_t d_head() const { return d_model / n_heads; }
  void validate() const;
};

// Key position j is visible to query position i iff j <= i.
struct CausalMask {
  static bool allowed(int64_t i, int64_t j) { return j <= i; }
};

// Realized attention weights for inspection: `weights` holds one
// rows x keys matrix per flattened (batch * head) entry; `selected` names
// the query positions those rows correspond to.
struct AttentionTrace {
  int64_t batch = 0;
  int64_t heads = 0;
  int64_t rows = 0;
  int64_t keys = 0;
  std::vector<real> weights;
  std::vector<std::vector<int64_t>> selected;

  real weight(int64_t b, int64_t row, int64_t key) const {
    return weights[static_cast<size_t>((b * rows + row) * keys + key)];
  }
};

int64_t dominant_query_count(double sampling_factor, int64_t len_q);
int64_t sampled_key_count(double sampling_factor, int64_t len_k);

// Max-minus-mean of scaled dot products against the sampled keys.
// q: (B, L_Q, d), k_sample: (B, S, d); plain values, no gradient.
std::vector<std::vector<double>> sparsity_scores(const Tensor& q,
                                                 const Tensor& k_sample);

// Full selection pipeline on head-split projections: seeded key sampling,
// sparsity scoring, top-u by (score desc, index asc); returned ascending.
std::vector<std::vector<int64_t>> select_dominant_queries(
    const Tensor& q_heads, const Tensor& k_heads, double sampling_factor,
    uint64_t seed);

class MultiHeadAttention {
 public:
  MultiHeadAttention(const AttentionConfig& cfg, Rng& init_rng);

  // Softmax(QK^T / sqrt(d_head)) V per head, heads re-concatenated and
  // output-projected. Sources are d_model wide; Q/K/V projections live here.
  Tensor canonical(const Tensor& q_src, const Tensor& k_src, const Tensor& v_src,
                   std::optional<CausalMask> mask,
                   AttentionTrace* trace = nullptr) const;

  // Top-u queries receive full attention; the rest fall back to the mean of
  // V (unmasked) or the cumulative mean up to their own position (masked).
  Tensor probsparse(const Tensor& q_src, const Tensor& k_src, const Tensor& v_src,
                    std::optional<CausalMask> mask,
                    AttentionTrace* trace = nullptr) const;

  const AttentionConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  int64_t parameter_count() const;

 private:
  struct Projected {
    Tensor q, k, v;  // head-split: (N*H, L, d_head)
  };
  Projected project(const Tensor& q_src, const Tensor& k_src,
                    const Tensor& v_src) const;
  Tensor finish(const Tensor& per_head, int64_t batch) const;

  AttentionConfig cfg_;
  Tensor wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
};

}  // namespace yformer
