#include "yformer/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "yformer/rng.hpp"

namespace yformer {

const char* kVersion = "yformer 0.1.0";

void TrainConfig::validate() const {
  if (learning_rate < 0 || weight_decay < 0)
    throw std::invalid_argument("yformer: negative learning rate or decay");
  if (batch_size < 1 || max_epochs < 1 || patience < 1)
    throw std::invalid_argument("yformer: batch_size, max_epochs and patience must be >= 1");
}

// ---- Adam ----

Adam::Adam(std::vector<Tensor> params, double lr, double weight_decay,
           double beta1, double beta2, double epsilon)
    : params_(std::move(params)),
      lr_(lr),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(static_cast<size_t>(params_[i].numel()), 0.0);
    v_[i].assign(static_cast<size_t>(params_[i].numel()), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.numel() == 0) continue;
    if (!p.grad_ready())
      throw std::runtime_error(
          "yformer: Adam step without a populated gradient (dead wiring?)");
    const auto g = p.grad();
    auto vals = p.values_mut();
    for (size_t k = 0; k < vals.size(); ++k) {
      const double gk = g[k];
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      double update = lr_ * mhat / (std::sqrt(vhat) + epsilon_);
      update += lr_ * weight_decay_ * double(vals[k]);
      vals[k] = static_cast<real>(double(vals[k]) - update);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---- records ----

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed}};
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"history_len", c.history_len},
          {"horizon", c.horizon},
          {"predictor_channels", c.predictor_channels},
          {"target_channels", c.target_channels},
          {"future_predictor_channels", c.future_predictor_channels},
          {"time_features", c.time_features},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"depth", c.depth},
          {"sampling_factor", c.sampling_factor},
          {"alpha", c.alpha},
          {"disable_skips", c.disable_skips},
          {"seed", c.seed}};
}

nlohmann::json ExperimentRecord::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs)
    epochs_json.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  return {{"run_id", run_id},
          {"variant", variant},
          {"model_config", model_config},
          {"train_config", train_config},
          {"dataset", dataset},
          {"epochs", epochs_json},
          {"best_epoch", best_epoch},
          {"test_mse", test_mse},
          {"test_mae", test_mae},
          {"parameter_count", parameter_count},
          {"wall_seconds", wall_seconds},
          {"version", version},
          {"status", status}};
}

ExperimentRecord ExperimentRecord::from_json(const nlohmann::json& j) {
  ExperimentRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.variant = j.at("variant").get<std::string>();
  r.model_config = j.at("model_config");
  r.train_config = j.at("train_config");
  r.dataset = j.at("dataset");
  for (const auto& e : j.at("epochs"))
    r.epochs.push_back(
        {e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
  r.best_epoch = j.at("best_epoch").get<int64_t>();
  r.test_mse = j.at("test_mse").get<double>();
  r.test_mae = j.at("test_mae").get<double>();
  r.parameter_count = j.at("parameter_count").get<int64_t>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.version = j.at("version").get<std::string>();
  r.status = j.at("status").get<std::string>();
  return r;
}

// ---- evaluation ----

namespace {

ModelInput batch_input(const WindowedDataset::Batch& b) {
  return ModelInput{b.past_values, b.past_time, b.future_values, b.future_time};
}

std::vector<int64_t> iota_ids(int64_t n) {
  std::vector<int64_t> ids(static_cast<size_t>(n));
  std::iota(ids.begin(), ids.end(), int64_t{0});
  return ids;
}

// Strips padded positions and optionally restores the original scale.
std::pair<Tensor, Tensor> horizon_slice(const WindowedDataset& data,
                                        const WindowedDataset::Batch& batch,
                                        const Tensor& y_hat,
                                        const StandardizeStats* destd,
                                        std::span<const int64_t> targets) {
  const int64_t pad = data.pad_horizon();
  Tensor truth = slice_time(batch.y_fut, pad, data.spec().horizon);
  Tensor pred = slice_time(y_hat, pad, data.spec().horizon);
  if (!destd) return {truth, pred};
  auto expand = [&](const Tensor& t) {
    std::vector<real> vals(t.values().begin(), t.values().end());
    const int64_t O = t.shape()[2];
    for (size_t i = 0; i < vals.size(); ++i) {
      const int64_t c = targets[static_cast<size_t>(int64_t(i) % O)];
      vals[i] = static_cast<real>(destandardize_value(*destd, c, double(vals[i])));
    }
    return Tensor::from_values(t.shape(), std::move(vals));
  };
  return {expand(truth), expand(pred)};
}

}  // namespace

std::pair<double, double> evaluate_model(const Yformer& model,
                                         const WindowedDataset& data,
                                         int64_t batch_size,
                                         const StandardizeStats* destd,
                                         std::span<const int64_t> targets) {
  const auto ids = iota_ids(data.size());
  double se = 0, ae = 0;
  int64_t count = 0;
  for (int64_t at = 0; at < data.size(); at += batch_size) {
    const int64_t n = std::min<int64_t>(batch_size, data.size() - at);
    auto batch = data.make_batch({ids.data() + at, static_cast<size_t>(n)});
    ForecastOutput out = model.forward(batch_input(batch));
    auto [truth, pred] = horizon_slice(data, batch, out.y_hat_fut, destd, targets);
    const auto [mse_v, mae_v] = forecast_metrics(truth, pred);
    se += mse_v * double(truth.numel());
    ae += mae_v * double(truth.numel());
    count += truth.numel();
  }
  return {se / double(count), ae / double(count)};
}

double repeat_last_baseline_mse(const WindowedDataset& data) {
  double se = 0;
  int64_t count = 0;
  for (int64_t i = 0; i < data.size(); ++i) {
    const auto inst = data.instance(i);
    const auto y = inst.y.values();
    const auto yf = inst.y_fut.values();
    const int64_t O = inst.y.shape()[2];
    const int64_t T = inst.y.shape()[1];
    const int64_t pad = data.pad_horizon();
    const int64_t H = inst.y_fut.shape()[1];
    for (int64_t t = pad; t < H; ++t)
      for (int64_t c = 0; c < O; ++c) {
        const double last = y[static_cast<size_t>((T - 1) * O + c)];
        const double d = double(yf[static_cast<size_t>(t * O + c)]) - last;
        se += d * d;
        ++count;
      }
  }
  return se / double(count);
}

double train_mean_baseline_mse(const WindowedDataset& train,
                               const WindowedDataset& test) {
  const int64_t O =
      static_cast<int64_t>(train.spec().target_channels.size());
  std::vector<double> mean(static_cast<size_t>(O), 0.0);
  int64_t rows = 0;
  for (int64_t i = 0; i < train.size(); ++i) {
    const auto inst = train.instance(i);
    const auto yf = inst.y_fut.values();
    const int64_t H = inst.y_fut.shape()[1];
    for (int64_t t = 0; t < H; ++t)
      for (int64_t c = 0; c < O; ++c)
        mean[static_cast<size_t>(c)] += yf[static_cast<size_t>(t * O + c)];
    rows += H;
  }
  for (auto& m : mean) m /= double(rows);

  double se = 0;
  int64_t count = 0;
  for (int64_t i = 0; i < test.size(); ++i) {
    const auto inst = test.instance(i);
    const auto yf = inst.y_fut.values();
    const int64_t H = inst.y_fut.shape()[1];
    const int64_t pad = test.pad_horizon();
    for (int64_t t = pad; t < H; ++t)
      for (int64_t c = 0; c < O; ++c) {
        const double d = double(yf[static_cast<size_t>(t * O + c)]) -
                         mean[static_cast<size_t>(c)];
        se += d * d;
        ++count;
      }
  }
  return se / double(count);
}

// ---- training ----

ExperimentRecord train_model(Yformer& model, const WindowedDataset& train,
                             const WindowedDataset& val,
                             const WindowedDataset& test, const TrainConfig& cfg,
                             const TrainOptions& opts) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const double alpha = model.config().alpha;

  ExperimentRecord record;
  record.run_id = opts.run_id;
  record.variant = opts.variant;
  record.model_config = model_config_to_json(model.config());
  record.train_config = train_config_to_json(cfg);
  record.dataset = opts.dataset_info;
  record.parameter_count = model.parameter_count();
  record.version = kVersion;

  Adam opt(model.parameters(), cfg.learning_rate, cfg.weight_decay);
  EarlyStopper stopper{cfg.patience};
  std::vector<std::vector<real>> best_params = model.snapshot();

  auto dataset_loss = [&](const WindowedDataset& data) {
    double acc = 0;
    int64_t seen = 0;
    const auto ids = iota_ids(data.size());
    for (int64_t at = 0; at < data.size(); at += cfg.batch_size) {
      const int64_t n = std::min<int64_t>(cfg.batch_size, data.size() - at);
      auto batch = data.make_batch({ids.data() + at, static_cast<size_t>(n)});
      ForecastOutput out = model.forward(batch_input(batch));
      Tensor loss = combined_loss(out, batch.y_past, batch.y_fut, alpha);
      acc += loss.item() * double(n);
      seen += n;
    }
    return acc / double(seen);
  };

  for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto order = iota_ids(train.size());
    Rng shuffle_rng(Rng::fork(cfg.seed, 1000 + uint64_t(epoch)));
    shuffle_rng.shuffle(order);

    double train_acc = 0;
    int64_t seen = 0;
    for (int64_t at = 0; at < train.size(); at += cfg.batch_size) {
      const int64_t n = std::min<int64_t>(cfg.batch_size, train.size() - at);
      auto batch = train.make_batch({order.data() + at, static_cast<size_t>(n)});
      ForecastOutput out = model.forward(batch_input(batch));
      Tensor loss = combined_loss(out, batch.y_past, batch.y_fut, alpha);
      backward(loss);
      opt.step();
      train_acc += loss.item() * double(n);
      seen += n;
    }
    const double train_loss = train_acc / double(seen);

    if (!std::isfinite(train_loss)) {
      record.status = "diverged";
      record.epochs.push_back({train_loss, std::numeric_limits<double>::quiet_NaN()});
      record.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
              .count();
      return record;
    }

    const double val_loss = dataset_loss(val);
    record.epochs.push_back({train_loss, val_loss});
    if (opts.on_epoch) opts.on_epoch(epoch, record.epochs.back());

    const bool stop = stopper.observe(val_loss);
    if (stopper.improved_this_epoch()) best_params = model.snapshot();
    if (stop) break;
  }

  model.restore(best_params);
  record.best_epoch = stopper.best_epoch;
  std::tie(record.test_mse, record.test_mae) = evaluate_model(
      model, test, cfg.batch_size, opts.destandardize,
      {opts.target_channels.data(), opts.target_channels.size()});
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return record;
}

// ---- grid search ----

GridResult grid_search(const ModelConfig& base_model, const TrainConfig& base_train,
                       const GridSpec& grid, const DataSplits& splits,
                       const TrainOptions& opts) {
  if (grid.learning_rates.empty() || grid.alphas.empty() ||
      grid.weight_decays.empty() || grid.depths.empty())
    throw std::invalid_argument("yformer: empty grid");
  GridResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int cell = 0;
  for (int64_t depth : grid.depths)
    for (double lr : grid.learning_rates)
      for (double wd : grid.weight_decays)
        for (double alpha : grid.alphas) {
          ModelConfig mc = base_model;
          mc.depth = depth;
          mc.alpha = alpha;
          TrainConfig tc = base_train;
          tc.learning_rate = lr;
          tc.weight_decay = wd;
          Yformer model(mc);
          TrainOptions cell_opts = opts;
          cell_opts.run_id = opts.run_id + "-cell" + std::to_string(cell++);
          ExperimentRecord rec =
              train_model(model, splits.train, splits.val, splits.test, tc, cell_opts);
          const double val = rec.status == "ok" && rec.best_epoch >= 1
                                 ? rec.epochs[size_t(rec.best_epoch - 1)].val_loss
                                 : std::numeric_limits<double>::infinity();
          if (val < best_val) {
            best_val = val;
            result.best_index = result.records.size();
          }
          result.records.push_back(std::move(rec));
        }
  return result;
}

// ---- ablation ----

AblationResult ablate(const ModelConfig& base_model, const TrainConfig& base_train,
                      const std::vector<int64_t>& horizons,
                      const std::function<DataSplits(int64_t)>& make_splits,
                      const TrainOptions& opts) {
  AblationResult result;
  for (int64_t horizon : horizons) {
    DataSplits splits = make_splits(horizon);
    struct VariantSpec {
      const char* name;
      double alpha;
      bool disable_skips;
    };
    const VariantSpec variants[] = {
        {"yformer", base_model.alpha, false},
        {"alpha0", 0.0, false},
        {"skipless", base_model.alpha, true},
    };
    for (const auto& v : variants) {
      ModelConfig mc = base_model;
      mc.history_len = splits.train.padded_history();
      mc.horizon = splits.train.padded_horizon();
      mc.alpha = v.alpha;
      mc.disable_skips = v.disable_skips;
      Yformer model(mc);
      TrainOptions run_opts = opts;
      run_opts.run_id = opts.run_id + "-" + v.name + "-h" + std::to_string(horizon);
      run_opts.variant = v.name;
      ExperimentRecord rec = train_model(model, splits.train, splits.val,
                                         splits.test, base_train, run_opts);
      result.rows.push_back({v.name, horizon, rec.test_mse, rec.test_mae,
                             rec.parameter_count});
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

std::map<int64_t, std::map<double, int64_t>> alpha_distribution(
    const std::vector<ExperimentRecord>& records) {
  std::map<int64_t, std::map<double, int64_t>> hist;
  for (const auto& r : records) {
    const int64_t horizon = r.model_config.at("horizon").get<int64_t>();
    const double alpha = r.model_config.at("alpha").get<double>();
    ++hist[horizon][alpha];
  }
  return hist;
}

// ---- persistence ----

void persist_record(const ExperimentRecord& record, const std::string& results_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(results_dir);
  const std::string line = record.to_json().dump();
  {
    std::ofstream out(fs::path(results_dir) / (record.run_id + ".json"));
    if (!out) throw std::runtime_error("yformer: cannot write record");
    out << line << "\n";
  }
  std::ofstream index(fs::path(results_dir) / "index.jsonl", std::ios::app);
  if (!index) throw std::runtime_error("yformer: cannot append to index.jsonl");
  index << line << "\n";
}

void write_ablation_csv(const AblationResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("yformer: cannot write " + path);
  out << "variant,horizon,mse,mae\n";
  char buf[64];
  for (const auto& row : result.rows) {
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g", row.mse, row.mae);
    out << row.variant << "," << row.horizon << "," << buf << "\n";
  }
}

}  // namespace yformer
