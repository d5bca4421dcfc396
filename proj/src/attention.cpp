#include "yformer/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "yformer/gradcheck.hpp"

namespace yformer {

void AttentionConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0)
    throw std::invalid_argument("yformer: attention dims must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("yformer: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " +
                                std::to_string(n_heads));
  if (sampling_factor <= 0)
    throw std::invalid_argument("yformer: sampling factor must be positive");
}

int64_t dominant_query_count(double sampling_factor, int64_t len_q) {
  const auto u = static_cast<int64_t>(
      std::ceil(sampling_factor * std::log(double(len_q))));
  return std::clamp<int64_t>(u, 1, len_q);
}

int64_t sampled_key_count(double sampling_factor, int64_t len_k) {
  const auto s = static_cast<int64_t>(
      std::ceil(sampling_factor * std::log(double(len_k))));
  return std::clamp<int64_t>(s, 1, len_k);
}

std::vector<std::vector<double>> sparsity_scores(const Tensor& q,
                                                 const Tensor& k_sample) {
  const Shape& sq = q.shape();
  const Shape& sk = k_sample.shape();
  if (sq.rank != 3 || sk.rank != 3 || sq[0] != sk[0] || sq[2] != sk[2])
    throw std::invalid_argument("yformer: sparsity_scores shape mismatch " +
                                sq.str() + " vs " + sk.str());
  const int64_t B = sq[0], LQ = sq[1], S = sk[1], D = sq[2];
  const double inv_sqrt_d = 1.0 / std::sqrt(double(D));
  const real* qv = q.values().data();
  const real* kv = k_sample.values().data();
  std::vector<std::vector<double>> scores(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    auto& row = scores[static_cast<size_t>(b)];
    row.resize(static_cast<size_t>(LQ));
    for (int64_t i = 0; i < LQ; ++i) {
      const real* qrow = qv + (b * LQ + i) * D;
      double maxdot = -std::numeric_limits<double>::infinity();
      double meandot = 0;
      for (int64_t j = 0; j < S; ++j) {
        const real* krow = kv + (b * S + j) * D;
        double dot = 0;
        for (int64_t d = 0; d < D; ++d) dot += double(qrow[d]) * double(krow[d]);
        dot *= inv_sqrt_d;
        maxdot = std::max(maxdot, dot);
        meandot += dot;
      }
      meandot /= double(S);
      row[static_cast<size_t>(i)] = maxdot - meandot;
    }
  }
  return scores;
}

std::vector<std::vector<int64_t>> select_dominant_queries(
    const Tensor& q_heads, const Tensor& k_heads, double sampling_factor,
    uint64_t seed) {
  const int64_t B = q_heads.shape()[0];
  const int64_t LQ = q_heads.shape()[1];
  const int64_t LK = k_heads.shape()[1];
  const int64_t u = dominant_query_count(sampling_factor, LQ);
  const int64_t s = sampled_key_count(sampling_factor, LK);

  // One seeded key sample shared across the flattened (batch, head) entries,
  // so an instance's output does not depend on its position in the batch. A
  // full sample skips the RNG entirely; scores then cannot depend on the seed.
  std::vector<int64_t> sample;
  if (s == LK) {
    sample.resize(static_cast<size_t>(LK));
    std::iota(sample.begin(), sample.end(), int64_t{0});
  } else {
    Rng rng(seed);
    sample = rng.sample_without_replacement(LK, s);
  }
  std::vector<std::vector<int64_t>> sample_idx(static_cast<size_t>(B), sample);

  Tensor k_sample = gather_time(k_heads, sample_idx);
  const auto scores = sparsity_scores(q_heads, k_sample);

  std::vector<std::vector<int64_t>> selected(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    std::vector<int64_t> order(static_cast<size_t>(LQ));
    std::iota(order.begin(), order.end(), int64_t{0});
    const auto& sc = scores[static_cast<size_t>(b)];
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t c) {
      return sc[static_cast<size_t>(a)] > sc[static_cast<size_t>(c)];
    });
    order.resize(static_cast<size_t>(u));
    std::sort(order.begin(), order.end());
    selected[static_cast<size_t>(b)] = std::move(order);
  }
  return selected;
}

MultiHeadAttention::MultiHeadAttention(const AttentionConfig& cfg, Rng& init_rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int64_t d = cfg_.d_model;
  wq_ = glorot_uniform(init_rng, {d, d}, d, d);
  bq_ = Tensor::zeros({d}, true);
  wk_ = glorot_uniform(init_rng, {d, d}, d, d);
  bk_ = Tensor::zeros({d}, true);
  wv_ = glorot_uniform(init_rng, {d, d}, d, d);
  bv_ = Tensor::zeros({d}, true);
  wo_ = glorot_uniform(init_rng, {d, d}, d, d);
  bo_ = Tensor::zeros({d}, true);
}

MultiHeadAttention::Projected MultiHeadAttention::project(
    const Tensor& q_src, const Tensor& k_src, const Tensor& v_src) const {
  const Shape& sq = q_src.shape();
  const Shape& sk = k_src.shape();
  const Shape& sv = v_src.shape();
  if (sq.rank != 3 || sk.rank != 3 || sv.rank != 3)
    throw std::invalid_argument("yformer: attention sources must be rank 3");
  if (sq[2] != cfg_.d_model || sk[2] != cfg_.d_model || sv[2] != cfg_.d_model)
    throw std::invalid_argument(
        "yformer: attention channel mismatch: sources " + sq.str() + "/" +
        sk.str() + "/" + sv.str() + " vs d_model " + std::to_string(cfg_.d_model));
  if (sk[0] != sq[0] || sv[0] != sq[0] || sk[1] != sv[1])
    throw std::invalid_argument("yformer: keys and values must align, got " +
                                sk.str() + " and " + sv.str());
  Projected p;
  p.q = split_heads(linear(q_src, wq_, bq_), cfg_.n_heads);
  p.k = split_heads(linear(k_src, wk_, bk_), cfg_.n_heads);
  p.v = split_heads(linear(v_src, wv_, bv_), cfg_.n_heads);
  return p;
}

Tensor MultiHeadAttention::finish(const Tensor& per_head, int64_t) const {
  return linear(merge_heads(per_head, cfg_.n_heads), wo_, bo_);
}

namespace {

void fill_trace(AttentionTrace* trace, const Tensor& weights, int64_t n_heads,
                const std::vector<std::vector<int64_t>>* selected) {
  if (!trace) return;
  const Shape& s = weights.shape();
  trace->batch = s[0] / n_heads;
  trace->heads = n_heads;
  trace->rows = s[1];
  trace->keys = s[2];
  trace->weights.assign(weights.values().begin(), weights.values().end());
  if (selected) {
    trace->selected = *selected;
  } else {
    trace->selected.assign(static_cast<size_t>(s[0]), {});
    for (auto& rows : trace->selected) {
      rows.resize(static_cast<size_t>(s[1]));
      std::iota(rows.begin(), rows.end(), int64_t{0});
    }
  }
}

}  // namespace

Tensor MultiHeadAttention::canonical(const Tensor& q_src, const Tensor& k_src,
                                     const Tensor& v_src,
                                     std::optional<CausalMask> mask,
                                     AttentionTrace* trace) const {
  Projected p = project(q_src, k_src, v_src);
  if (mask && q_src.shape()[1] != k_src.shape()[1])
    throw std::invalid_argument(
        "yformer: causal mask requires equal query/key lengths");
  const real inv_sqrt_d =
      real(1) / static_cast<real>(std::sqrt(double(cfg_.d_head())));
  Tensor logits = scale(matmul_nt(p.q, p.k), inv_sqrt_d);
  if (mask) logits = causal_mask_fill(logits);
  Tensor weights = softmax(logits, 2);
  fill_trace(trace, weights, cfg_.n_heads, nullptr);
  return finish(matmul(weights, p.v), q_src.shape()[0]);
}

Tensor MultiHeadAttention::probsparse(const Tensor& q_src, const Tensor& k_src,
                                      const Tensor& v_src,
                                      std::optional<CausalMask> mask,
                                      AttentionTrace* trace) const {
  Projected p = project(q_src, k_src, v_src);
  const int64_t LQ = q_src.shape()[1];
  const int64_t LK = k_src.shape()[1];
  if (mask && LQ != LK)
    throw std::invalid_argument(
        "yformer: causal mask requires equal query/key lengths");

  const auto selected =
      select_dominant_queries(p.q, p.k, cfg_.sampling_factor, cfg_.seed);

  // Fallback rows: global mean of V, or the causal-safe cumulative mean.
  Tensor base = mask ? cummean_time(p.v)
                     : broadcast_time(mean_time(p.v), LQ);

  Tensor q_sel = gather_time(p.q, selected);
  const real inv_sqrt_d =
      real(1) / static_cast<real>(std::sqrt(double(cfg_.d_head())));
  Tensor logits = scale(matmul_nt(q_sel, p.k), inv_sqrt_d);
  if (mask) logits = position_mask_fill(logits, selected);
  Tensor weights = softmax(logits, 2);
  fill_trace(trace, weights, cfg_.n_heads, &selected);
  Tensor rows = matmul(weights, p.v);
  Tensor per_head = scatter_time(base, rows, selected);
  return finish(per_head, q_src.shape()[0]);
}

std::vector<std::pair<std::string, Tensor>> MultiHeadAttention::named_parameters()
    const {
  return {{"wq", wq_}, {"bq", bq_}, {"wk", wk_}, {"bk", bk_},
          {"wv", wv_}, {"bv", bv_}, {"wo", wo_}, {"bo", bo_}};
}

int64_t MultiHeadAttention::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

}  // namespace yformer
