#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "yformer/data.hpp"
#include "yformer/model.hpp"

namespace yformer {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;  // decoupled, applied outside the moments
  int64_t batch_size = 32;
  int64_t max_epochs = 20;
  int64_t patience = 3;
  uint64_t seed = 0;

  void validate() const;
};

// Adam with decoupled weight decay. step() consumes the populated gradients
// and resets them.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double weight_decay = 0.0,
       double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step();
  void zero_grad();
  int64_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, weight_decay_, beta1_, beta2_, epsilon_;
  int64_t t_ = 0;
};

// Patience-k early stopping on validation loss, strict improvement.
struct EarlyStopper {
  int64_t patience = 3;
  double best = std::numeric_limits<double>::infinity();
  int64_t best_epoch = 0;  // 1-based
  int64_t epoch = 0;
  int64_t epochs_since_best = 0;

  // Call once per epoch; returns true when training should stop after it.
  bool observe(double val_loss) {
    ++epoch;
    if (val_loss < best) {
      best = val_loss;
      best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    return epochs_since_best >= patience;
  }

  bool improved_this_epoch() const { return epochs_since_best == 0; }
};

struct EpochLog {
  double train_loss = 0;
  double val_loss = 0;
};

struct ExperimentRecord {
  std::string run_id;
  std::string variant = "yformer";  // yformer | alpha0 | skipless
  nlohmann::json model_config;
  nlohmann::json train_config;
  nlohmann::json dataset;
  std::vector<EpochLog> epochs;
  int64_t best_epoch = 0;  // 1-based
  double test_mse = std::numeric_limits<double>::quiet_NaN();
  double test_mae = std::numeric_limits<double>::quiet_NaN();
  int64_t parameter_count = 0;
  double wall_seconds = 0;
  std::string version;
  std::string status = "ok";  // ok | diverged

  nlohmann::json to_json() const;
  static ExperimentRecord from_json(const nlohmann::json& j);
};

nlohmann::json train_config_to_json(const TrainConfig& c);
nlohmann::json model_config_to_json(const ModelConfig& c);

struct TrainOptions {
  std::string run_id = "run";
  std::string variant = "yformer";
  nlohmann::json dataset_info;
  // Report test metrics on the original scale using these stats.
  const StandardizeStats* destandardize = nullptr;
  std::vector<int64_t> target_channels;  // needed with destandardize
  std::function<void(int64_t, const EpochLog&)> on_epoch;
};

// Adam + early stopping + best-checkpoint restore; the model is left holding
// the best-epoch parameters.
ExperimentRecord train_model(Yformer& model, const WindowedDataset& train,
                             const WindowedDataset& val,
                             const WindowedDataset& test, const TrainConfig& cfg,
                             const TrainOptions& opts = {});

// Forecast MSE/MAE of a model over a dataset, horizon slice only (any
// divisibility padding is dropped before scoring).
std::pair<double, double> evaluate_model(const Yformer& model,
                                         const WindowedDataset& data,
                                         int64_t batch_size = 64,
                                         const StandardizeStats* destd = nullptr,
                                         std::span<const int64_t> targets = {});

// Naive references for the smoke-training gate.
double repeat_last_baseline_mse(const WindowedDataset& data);
double train_mean_baseline_mse(const WindowedDataset& train,
                               const WindowedDataset& test);

struct GridSpec {
  std::vector<double> learning_rates{1e-3, 1e-4};
  std::vector<double> alphas{0, 0.3, 0.5, 0.7, 1};
  std::vector<double> weight_decays{0};
  std::vector<int64_t> depths{2};
};

struct GridResult {
  std::vector<ExperimentRecord> records;
  size_t best_index = 0;  // lowest best-epoch validation loss
};

GridResult grid_search(const ModelConfig& base_model, const TrainConfig& base_train,
                       const GridSpec& grid, const DataSplits& splits,
                       const TrainOptions& opts = {});

// {full, alpha=0, skip-less} per horizon; rows mirror the published ablation
// layout (variant, horizon, mse, mae).
struct AblationRow {
  std::string variant;
  int64_t horizon;
  double mse, mae;
  int64_t parameter_count;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<ExperimentRecord> records;
};

AblationResult ablate(const ModelConfig& base_model, const TrainConfig& base_train,
                      const std::vector<int64_t>& horizons,
                      const std::function<DataSplits(int64_t horizon)>& make_splits,
                      const TrainOptions& opts = {});

// Histogram of winning reconstruction factors per horizon.
std::map<int64_t, std::map<double, int64_t>> alpha_distribution(
    const std::vector<ExperimentRecord>& records);

// One JSON object per line in <dir>/index.jsonl plus <dir>/<run_id>.json;
// append-only.
void persist_record(const ExperimentRecord& record, const std::string& results_dir);
void write_ablation_csv(const AblationResult& result, const std::string& path);

extern const char* kVersion;

}  // namespace yformer
