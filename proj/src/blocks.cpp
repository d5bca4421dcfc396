#include "yformer/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "yformer/gradcheck.hpp"

namespace yformer {

void EmbeddingConfig::validate() const {
  if (in_channels < 0 || time_features < 0)
    throw std::invalid_argument("yformer: negative embedding channel count");
  if (d_model <= 0 || max_len <= 0)
    throw std::invalid_argument("yformer: invalid embedding config");
  if (value_kernel < 1 || value_kernel % 2 == 0)
    throw std::invalid_argument("yformer: value kernel must be odd");
}

InputEmbedding::InputEmbedding(const EmbeddingConfig& cfg, Rng& init_rng)
    : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.in_channels > 0) {
    conv_w_ = glorot_uniform(
        init_rng, {cfg_.d_model, cfg_.in_channels, cfg_.value_kernel},
        cfg_.in_channels * cfg_.value_kernel, cfg_.d_model * cfg_.value_kernel);
    conv_b_ = Tensor::zeros({cfg_.d_model}, true);
  }
  if (cfg_.time_features > 0) {
    time_w_ = glorot_uniform(init_rng, {cfg_.time_features, cfg_.d_model},
                             cfg_.time_features, cfg_.d_model);
    time_b_ = Tensor::zeros({cfg_.d_model}, true);
  }
}

std::vector<real> InputEmbedding::positional_encoding(int64_t len,
                                                      int64_t d_model) {
  std::vector<real> table(static_cast<size_t>(len * d_model));
  for (int64_t pos = 0; pos < len; ++pos)
    for (int64_t i = 0; i < d_model; ++i) {
      const double exponent = double(2 * (i / 2)) / double(d_model);
      const double angle = double(pos) / std::pow(10000.0, exponent);
      table[static_cast<size_t>(pos * d_model + i)] =
          static_cast<real>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return table;
}

Tensor InputEmbedding::forward(const Tensor& values,
                               const Tensor& time_feats) const {
  const Shape& sv = values.shape();
  if (sv.rank != 3 || sv[2] != cfg_.in_channels)
    throw std::invalid_argument("yformer: embedding input shape " + sv.str() +
                                " does not carry " +
                                std::to_string(cfg_.in_channels) + " channels");
  const int64_t N = sv[0], L = sv[1];
  if (L > cfg_.max_len)
    throw std::invalid_argument("yformer: sequence length " + std::to_string(L) +
                                " exceeds positional table max_len " +
                                std::to_string(cfg_.max_len));
  if (cfg_.time_features > 0) {
    const Shape& st = time_feats.shape();
    if (st.rank != 3 || st[0] != N || st[2] != cfg_.time_features)
      throw std::invalid_argument("yformer: time feature shape " + st.str() +
                                  " does not match input " + sv.str());
    if (st[1] != L)
      throw std::invalid_argument(
          "yformer: timestamp/series length mismatch: " + std::to_string(st[1]) +
          " vs " + std::to_string(L));
  }

  // fixed positional term, restarted at 0 for every call
  std::vector<real> pos_rows = positional_encoding(L, cfg_.d_model);
  std::vector<real> pos_full(static_cast<size_t>(N * L * cfg_.d_model));
  for (int64_t n = 0; n < N; ++n)
    std::copy(pos_rows.begin(), pos_rows.end(),
              pos_full.begin() + n * L * cfg_.d_model);
  Tensor out =
      Tensor::from_values({N, L, cfg_.d_model}, std::move(pos_full), false);

  if (cfg_.in_channels > 0) {
    ConvSpec spec;
    spec.kernel_size = cfg_.value_kernel;
    spec.stride = 1;
    spec.padding = (cfg_.value_kernel - 1) / 2;
    spec.in_channels = cfg_.in_channels;
    spec.out_channels = cfg_.d_model;
    out = add(out, conv1d(values, conv_w_, conv_b_, spec));
  }
  if (cfg_.time_features > 0)
    out = add(out, linear(time_feats, time_w_, time_b_));
  return out;
}

std::vector<std::pair<std::string, Tensor>> InputEmbedding::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> params;
  if (cfg_.in_channels > 0) {
    params.emplace_back("value_w", conv_w_);
    params.emplace_back("value_b", conv_b_);
  }
  if (cfg_.time_features > 0) {
    params.emplace_back("time_w", time_w_);
    params.emplace_back("time_b", time_b_);
  }
  return params;
}

ConvSpec BlockStackConfig::distill_spec() const {
  ConvSpec s;
  s.kernel_size = distill_kernel;
  s.stride = distill_stride;
  s.padding = distill_padding;
  s.in_channels = d_model;
  s.out_channels = d_model;
  return s;
}

ConvSpec BlockStackConfig::up_spec() const {
  ConvSpec s;
  s.kernel_size = up_kernel;
  s.stride = up_stride;
  s.padding = up_padding;
  s.in_channels = d_model;
  s.out_channels = d_model;
  return s;
}

namespace {

AttentionConfig attention_config(const BlockStackConfig& cfg, uint64_t seed) {
  AttentionConfig a;
  a.d_model = cfg.d_model;
  a.n_heads = cfg.n_heads;
  a.sampling_factor = cfg.sampling_factor;
  a.seed = seed;
  return a;
}

Tensor make_gamma(int64_t c) {
  return Tensor::full({c}, real(1), true);
}

}  // namespace

ContractingBlock::ContractingBlock(const BlockStackConfig& cfg,
                                   SelfAttentionKind kind, uint64_t sample_seed,
                                   Rng& init_rng)
    : cfg_(cfg), kind_(kind), attn_(attention_config(cfg, sample_seed), init_rng) {
  const ConvSpec d = cfg_.distill_spec();
  const int64_t fan = cfg_.d_model * d.kernel_size;
  conv1_w_ = glorot_uniform(init_rng, {d.out_channels, d.in_channels, d.kernel_size},
                            fan, fan);
  conv1_b_ = Tensor::zeros({d.out_channels}, true);
  norm_.gamma = make_gamma(cfg_.d_model);
  norm_.beta = Tensor::zeros({cfg_.d_model}, true);
  conv2_w_ = glorot_uniform(init_rng, {d.out_channels, d.in_channels, d.kernel_size},
                            fan, fan);
  conv2_b_ = Tensor::zeros({d.out_channels}, true);
}

Tensor ContractingBlock::forward(const Tensor& h, AttentionTrace* trace) const {
  if (h.shape().rank != 3 || h.shape()[2] != cfg_.d_model)
    throw std::invalid_argument("yformer: block input shape " + h.shape().str() +
                                " does not match d_model " +
                                std::to_string(cfg_.d_model));
  if (h.shape()[1] < 2)
    throw std::invalid_argument(
        "yformer: contracting block cannot pool a length-1 sequence");

  Tensor attended = kind_ == SelfAttentionKind::probsparse
                        ? attn_.probsparse(h, h, h, std::nullopt, trace)
                        : attn_.canonical(h, h, h, CausalMask{}, trace);
  Tensor x = add(h, attended);
  x = conv1d(x, conv1_w_, conv1_b_, cfg_.distill_spec());
  x = layer_norm(x, norm_);
  x = conv1d(x, conv2_w_, conv2_b_, cfg_.distill_spec());
  x = elu(x);
  return maxpool1d(x, cfg_.pool_kernel, cfg_.pool_stride, cfg_.pool_padding);
}

std::vector<std::pair<std::string, Tensor>> ContractingBlock::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> params;
  for (auto& [name, t] : attn_.named_parameters())
    params.emplace_back("attn." + name, t);
  params.emplace_back("conv1_w", conv1_w_);
  params.emplace_back("conv1_b", conv1_b_);
  params.emplace_back("norm_gamma", norm_.gamma);
  params.emplace_back("norm_beta", norm_.beta);
  params.emplace_back("conv2_w", conv2_w_);
  params.emplace_back("conv2_b", conv2_b_);
  return params;
}

int64_t ContractingBlock::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

ExpandingBlock::ExpandingBlock(const BlockStackConfig& cfg, uint64_t sample_seed,
                               Rng& init_rng)
    : cfg_(cfg), attn_(attention_config(cfg, sample_seed), init_rng) {
  const ConvSpec d = cfg_.distill_spec();
  const int64_t fan = cfg_.d_model * d.kernel_size;
  conv_w_ = glorot_uniform(init_rng, {d.out_channels, d.in_channels, d.kernel_size},
                           fan, fan);
  conv_b_ = Tensor::zeros({d.out_channels}, true);
  norm_.gamma = make_gamma(cfg_.d_model);
  norm_.beta = Tensor::zeros({cfg_.d_model}, true);
  const ConvSpec u = cfg_.up_spec();
  const int64_t ufan = cfg_.d_model * u.kernel_size;
  up_w_ = glorot_uniform(init_rng, {u.in_channels, u.out_channels, u.kernel_size},
                         ufan, ufan);
  up_b_ = Tensor::zeros({u.out_channels}, true);
}

Tensor ExpandingBlock::forward(const Tensor& d_prev, const Tensor& e_skip,
                               AttentionTrace* trace) const {
  if (d_prev.shape().rank != 3 || e_skip.shape().rank != 3 ||
      d_prev.shape()[2] != cfg_.d_model || e_skip.shape()[2] != cfg_.d_model)
    throw std::invalid_argument(
        "yformer: expanding block channel mismatch: " + d_prev.shape().str() +
        " vs " + e_skip.shape().str());

  Tensor attended = attn_.probsparse(d_prev, e_skip, e_skip, std::nullopt, trace);
  Tensor x = add(d_prev, attended);
  x = conv1d(x, conv_w_, conv_b_, cfg_.distill_spec());
  x = layer_norm(x, norm_);
  x = conv_transpose1d(x, up_w_, up_b_, cfg_.up_spec());
  return elu(x);
}

std::vector<std::pair<std::string, Tensor>> ExpandingBlock::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> params;
  for (auto& [name, t] : attn_.named_parameters())
    params.emplace_back("attn." + name, t);
  params.emplace_back("conv_w", conv_w_);
  params.emplace_back("conv_b", conv_b_);
  params.emplace_back("norm_gamma", norm_.gamma);
  params.emplace_back("norm_beta", norm_.beta);
  params.emplace_back("up_w", up_w_);
  params.emplace_back("up_b", up_b_);
  return params;
}

int64_t ExpandingBlock::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

}  // namespace yformer
