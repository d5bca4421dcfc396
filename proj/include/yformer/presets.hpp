#pragma once

#include <optional>
#include <string>
#include <vector>

namespace yformer {

// Published optimal hyperparameters per (dataset, horizon, setting).
struct Preset {
  std::string dataset;
  int64_t horizon;
  std::string setting;  // "univariate" | "multivariate"
  int64_t history_len;
  double weight_decay;
  double learning_rate;
  double alpha;
  int64_t batch_size;
  int64_t encoder_blocks;
};

const std::vector<Preset>& preset_table();
std::optional<Preset> find_preset(const std::string& dataset, int64_t horizon,
                                  const std::string& setting);

}  // namespace yformer
