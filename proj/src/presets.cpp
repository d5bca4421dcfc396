#include "yformer/presets.hpp"

namespace yformer {

const std::vector<Preset>& preset_table() {
  // {dataset, horizon, setting, history, weight_decay, lr, alpha, batch, blocks}
  static const std::vector<Preset> table = {
      {"ETTh1", 24, "univariate", 720, 0, 0.0001, 0.7, 32, 2},
      {"ETTh1", 48, "univariate", 720, 0, 0.0001, 0.7, 16, 4},
      {"ETTh1", 168, "univariate", 720, 0, 0.001, 0.7, 32, 4},
      {"ETTh1", 336, "univariate", 720, 0.05, 0.0001, 0.1, 32, 4},
      {"ETTh1", 720, "univariate", 720, 0.05, 0.0001, 0.7, 16, 2},
      {"ETTh2", 24, "univariate", 48, 0, 0.0001, 0.7, 32, 2},
      {"ETTh2", 48, "univariate", 96, 0.02, 0.0001, 0.3, 32, 4},
      {"ETTh2", 168, "univariate", 336, 0.02, 0.001, 0.3, 32, 2},
      {"ETTh2", 336, "univariate", 336, 0.09, 0.0001, 0, 32, 2},
      {"ETTh2", 720, "univariate", 336, 0.09, 0.0001, 0.7, 16, 2},
      {"ETTm1", 24, "univariate", 96, 0.02, 0.0001, 0.7, 32, 4},
      {"ETTm1", 48, "univariate", 96, 0.02, 0.0001, 0.7, 32, 4},
      {"ETTm1", 96, "univariate", 384, 0.02, 0.0001, 0.1, 32, 4},
      {"ETTm1", 288, "univariate", 384, 0.02, 0.001, 0.7, 16, 2},
      {"ETTm1", 672, "univariate", 384, 0.07, 0.001, 0.3, 16, 2},
      {"ECL", 48, "univariate", 168, 0, 0.0001, 0.7, 16, 2},
      {"ECL", 168, "univariate", 168, 0.01, 0.0001, 0.3, 16, 2},
      {"ECL", 336, "univariate", 168, 0.01, 0.0001, 0.7, 16, 2},
      {"ECL", 720, "univariate", 168, 0, 0.0001, 0.1, 16, 2},
      {"ECL", 960, "univariate", 48, 0, 0.0001, 0.5, 16, 4},

      {"ETTh1", 24, "multivariate", 48, 0, 0.0001, 0.7, 32, 3},
      {"ETTh1", 48, "multivariate", 96, 0.02, 0.001, 0.5, 32, 2},
      {"ETTh1", 168, "multivariate", 168, 0.02, 0.001, 0.7, 32, 2},
      {"ETTh1", 336, "multivariate", 168, 0, 0.0001, 0.7, 32, 4},
      {"ETTh1", 720, "multivariate", 336, 0.05, 0.0001, 1, 16, 2},
      {"ETTh2", 24, "multivariate", 48, 0, 0.0001, 0.7, 32, 2},
      {"ETTh2", 48, "multivariate", 96, 0.02, 0.001, 0, 32, 4},
      {"ETTh2", 168, "multivariate", 336, 0.09, 0.001, 0.7, 32, 2},
      {"ETTh2", 336, "multivariate", 336, 0.07, 0.001, 0.3, 32, 2},
      {"ETTh2", 720, "multivariate", 336, 0, 0.0001, 0, 16, 2},
      {"ETTm1", 24, "multivariate", 672, 0, 0.0001, 0.7, 32, 2},
      {"ETTm1", 48, "multivariate", 96, 0, 0.0001, 0.7, 32, 4},
      {"ETTm1", 96, "multivariate", 384, 0.05, 0.0001, 0.7, 32, 4},
      {"ETTm1", 288, "multivariate", 672, 0.02, 0.001, 0.5, 16, 2},
      {"ETTm1", 672, "multivariate", 672, 0.02, 0.0001, 0.3, 16, 2},
      {"ECL", 48, "multivariate", 24, 0, 0.0001, 0.7, 16, 3},
      {"ECL", 168, "multivariate", 48, 0, 0.0001, 0.7, 16, 3},
      {"ECL", 336, "multivariate", 24, 0, 0.0001, 0.5, 16, 2},
      {"ECL", 720, "multivariate", 48, 0, 0.0001, 0.7, 16, 2},
      {"ECL", 960, "multivariate", 336, 0, 0.0001, 0.7, 16, 2},
  };
  return table;
}

std::optional<Preset> find_preset(const std::string& dataset, int64_t horizon,
                                  const std::string& setting) {
  for (const auto& p : preset_table())
    if (p.dataset == dataset && p.horizon == horizon && p.setting == setting)
      return p;
  return std::nullopt;
}

}  // namespace yformer
