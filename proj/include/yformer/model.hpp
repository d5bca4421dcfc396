#pragma once

#include <string>
#include <utility>
#include <vector>

#include "yformer/blocks.hpp"

namespace yformer {

struct ModelConfig {
  int64_t history_len = 48;  // T
  int64_t horizon = 24;      // tau
  int64_t predictor_channels = 0;         // M, past covariates
  int64_t target_channels = 1;            // O
  int64_t future_predictor_channels = 0;  // numeric channels of x'
  int64_t time_features = 4;
  int64_t d_model = 32;
  int64_t n_heads = 4;
  int64_t depth = 2;  // I, encoder blocks per encoder = decoder blocks
  double sampling_factor = 5.0;
  double alpha = 0.7;  // reconstruction factor in the combined loss
  bool disable_skips = false;  // ablation: decoder attends e_I at every level
  uint64_t seed = 0;

  void validate() const;
};

struct ModelInput {
  Tensor past_values;    // (N, T, M+O): predictor channels, then targets
  Tensor past_time;      // (N, T, F)
  Tensor future_values;  // (N, tau, M_fut)
  Tensor future_time;    // (N, tau, F)
};

struct ForecastOutput {
  Tensor y_hat_past;  // (N, T, O)
  Tensor y_hat_fut;   // (N, tau, O)
};

struct ForwardTrace {
  std::vector<Tensor> pyramid;  // e_0 .. e_I
  std::vector<AttentionTrace> future_attention;  // per Y-Future encoder level
  std::vector<int64_t> decoder_lengths;          // d_0 .. d_I
};

// Y-Past encoder, Y-Future encoder (masked), concatenated embedding pyramid,
// canonical decoder attention over e_I, expanding blocks with U-Net skips,
// and the dual reconstruction/forecast head.
class Yformer {
 public:
  explicit Yformer(const ModelConfig& cfg);

  ForecastOutput forward(const ModelInput& in, ForwardTrace* trace = nullptr) const;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const {
    return params_;
  }
  std::vector<Tensor> parameters() const;
  int64_t parameter_count() const;

  void save_checkpoint(const std::string& path) const;
  static Yformer load_checkpoint(const std::string& path);

  // Flat copies of all parameter values, for best-epoch snapshots.
  std::vector<std::vector<real>> snapshot() const;
  void restore(const std::vector<std::vector<real>>& snap);

 private:
  ModelConfig cfg_;
  std::vector<InputEmbedding> embeds_;        // [past, future]
  std::vector<ContractingBlock> past_blocks_;
  std::vector<ContractingBlock> fut_blocks_;
  std::vector<MultiHeadAttention> decoder_attn_;  // single entry
  std::vector<ExpandingBlock> dec_blocks_;
  Tensor head_w_, head_b_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

// alpha * mse(y_past, y_hat_past) + (1 - alpha) * mse(y_fut, y_hat_fut).
Tensor combined_loss(const ForecastOutput& out, const Tensor& y_past,
                     const Tensor& y_fut, double alpha);

// (MSE, MAE): mean over time of per-step channel means, averaged over the
// batch. Plain values, no gradient.
std::pair<double, double> forecast_metrics(const Tensor& truth,
                                           const Tensor& pred);

// Total learnable scalar count for a config; deterministic, length-free.
int64_t parameter_count(const ModelConfig& cfg);

}  // namespace yformer
