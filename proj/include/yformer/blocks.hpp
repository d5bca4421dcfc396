#pragma once

#include <string>
#include <utility>
#include <vector>

#include "yformer/attention.hpp"
#include "yformer/tensor.hpp"

namespace yformer {

struct EmbeddingConfig {
  int64_t in_channels = 1;   // 0 skips the value projection entirely
  int64_t d_model = 32;
  int64_t time_features = 4;  // 0 skips the temporal term
  int64_t max_len = 512;
  int64_t value_kernel = 3;  // odd; padding (k-1)/2 keeps the length

  void validate() const;
};

// Scalar conv projection + fixed sinusoidal positional encoding + learned
// linear embedding of calendar features, summed. Output length equals input
// length.
class InputEmbedding {
 public:
  InputEmbedding(const EmbeddingConfig& cfg, Rng& init_rng);

  Tensor forward(const Tensor& values, const Tensor& time_feats) const;

  const EmbeddingConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;

  // Fixed table, (L, d_model) rows starting at position 0.
  static std::vector<real> positional_encoding(int64_t len, int64_t d_model);

 private:
  EmbeddingConfig cfg_;
  Tensor conv_w_, conv_b_;
  Tensor time_w_, time_b_;
};

struct BlockStackConfig {
  int64_t d_model = 32;
  int64_t n_heads = 4;
  double sampling_factor = 5.0;
  // Distilling convs keep the length; the pool halves it (ceil); the
  // transposed conv doubles it.
  int64_t distill_kernel = 3, distill_stride = 1, distill_padding = 1;
  int64_t pool_kernel = 3, pool_stride = 2, pool_padding = 1;
  int64_t up_kernel = 2, up_stride = 2, up_padding = 0;

  ConvSpec distill_spec() const;
  ConvSpec up_spec() const;
};

enum class SelfAttentionKind { probsparse, masked_canonical };

// Self-attention (residual) -> Conv1d -> LayerNorm -> Conv1d -> ELU ->
// MaxPool; maps length L to ceil(L/2).
class ContractingBlock {
 public:
  ContractingBlock(const BlockStackConfig& cfg, SelfAttentionKind kind,
                   uint64_t sample_seed, Rng& init_rng);

  Tensor forward(const Tensor& h, AttentionTrace* trace = nullptr) const;

  SelfAttentionKind kind() const { return kind_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  int64_t parameter_count() const;

 private:
  BlockStackConfig cfg_;
  SelfAttentionKind kind_;
  MultiHeadAttention attn_;
  Tensor conv1_w_, conv1_b_;
  LayerNormParams norm_;
  Tensor conv2_w_, conv2_b_;
};

// ProbSparse cross-attention from the decoder stream into an encoder
// pyramid entry (residual on the query side) -> Conv1d -> LayerNorm ->
// ConvTranspose1d -> ELU; maps length L to 2L.
class ExpandingBlock {
 public:
  ExpandingBlock(const BlockStackConfig& cfg, uint64_t sample_seed,
                 Rng& init_rng);

  Tensor forward(const Tensor& d_prev, const Tensor& e_skip,
                 AttentionTrace* trace = nullptr) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  int64_t parameter_count() const;

 private:
  BlockStackConfig cfg_;
  MultiHeadAttention attn_;
  Tensor conv_w_, conv_b_;
  LayerNormParams norm_;
  Tensor up_w_, up_b_;
};

}  // namespace yformer
