// Command-line front end: train / grid / ablate / gradcheck / synth / eval /
// presets.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "yformer/gradcheck.hpp"
#include "yformer/harness.hpp"
#include "yformer/presets.hpp"

using namespace yformer;

namespace {

struct DataOptions {
  std::string csv_path;
  std::string manifest_path;
  std::string synth_kind;
  int64_t synth_length = 2000;
  double synth_noise = 0.1;
  uint64_t synth_seed = 7;
  std::vector<std::string> targets;
  bool covariates = false;         // feed non-target columns as past predictors
  bool future_covariates = false;  // covariates are known for the horizon
  std::string split = "";          // "months:12,4,4" or "fractions:0.7,0.15,0.15"
  bool forward_fill = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", csv_path, "CSV file (date,<channels...>)");
    cmd->add_option("--manifest", manifest_path,
                    "dataset manifest JSON (or set YFORMER_MANIFEST)");
    cmd->add_option("--synth", synth_kind,
                    "synthetic kind: sum-of-sines | trend+season | random-walk");
    cmd->add_option("--length", synth_length, "synthetic series length");
    cmd->add_option("--noise", synth_noise, "synthetic noise sigma");
    cmd->add_option("--synth-seed", synth_seed, "synthetic generator seed");
    cmd->add_option("--targets", targets, "target channel names");
    cmd->add_flag("--covariates", covariates,
                  "use non-target columns as past predictors");
    cmd->add_flag("--future-covariates", future_covariates,
                  "covariates are known over the horizon");
    cmd->add_option("--split", split,
                    "months:<tr>,<va>,<te> or fractions:<tr>,<va>,<te>");
    cmd->add_flag("--forward-fill", forward_fill, "fill missing cells forward");
  }
};

SplitSpec parse_split(const std::string& text, SplitSpec fallback) {
  if (text.empty()) return fallback;
  SplitSpec spec;
  std::string rest;
  if (text.rfind("months:", 0) == 0) {
    spec.mode = SplitSpec::Mode::months;
    rest = text.substr(7);
  } else if (text.rfind("fractions:", 0) == 0) {
    spec.mode = SplitSpec::Mode::fractions;
    rest = text.substr(10);
  } else {
    throw CLI::ValidationError("--split",
                               "expected months:<a>,<b>,<c> or fractions:<a>,<b>,<c>");
  }
  if (std::sscanf(rest.c_str(), "%lf,%lf,%lf", &spec.train, &spec.val,
                  &spec.test) != 3)
    throw CLI::ValidationError("--split", "need three comma-separated numbers");
  return spec;
}

struct LoadedData {
  std::shared_ptr<RawSeries> series;
  SplitRanges ranges;
  StandardizeStats stats;
  std::vector<int64_t> target_channels;
  std::vector<int64_t> predictor_channels;
  nlohmann::json info;
};

LoadedData load_data(const DataOptions& opts) {
  LoadedData out;
  SplitSpec default_split;
  std::vector<std::string> target_names = opts.targets;

  if (!opts.synth_kind.empty()) {
    out.series = std::make_shared<RawSeries>(
        synth_series(synth_kind_from_string(opts.synth_kind), opts.synth_length,
                     opts.synth_noise, opts.synth_seed));
    default_split.mode = SplitSpec::Mode::fractions;
    default_split.train = 0.7;
    default_split.val = 0.15;
    default_split.test = 0.15;
    if (target_names.empty()) target_names = {"value"};
    out.info = {{"kind", opts.synth_kind},
                {"length", opts.synth_length},
                {"noise_sigma", opts.synth_noise},
                {"seed", opts.synth_seed}};
  } else {
    std::string manifest_path = opts.manifest_path;
    if (manifest_path.empty())
      if (const char* env = std::getenv("YFORMER_MANIFEST")) manifest_path = env;
    std::string csv = opts.csv_path;
    if (!manifest_path.empty()) {
      DatasetManifest m = load_manifest(manifest_path);
      if (csv.empty()) csv = m.path;
      if (target_names.empty()) target_names = m.target_channels;
      default_split = m.split;
      out.info = {{"manifest", manifest_path}, {"name", m.name}};
    }
    if (csv.empty())
      throw CLI::ValidationError("--data",
                                 "need --data, --manifest or --synth");
    IngestOptions ing;
    ing.forward_fill = opts.forward_fill;
    out.series = std::make_shared<RawSeries>(ingest_csv(csv, ing));
    out.info["path"] = csv;
    if (target_names.empty())
      target_names = {out.series->channel_names.back()};
  }

  for (const auto& name : target_names) {
    const int64_t idx = out.series->channel_index(name);
    if (idx < 0)
      throw CLI::ValidationError("--targets", "no channel named '" + name + "'");
    out.target_channels.push_back(idx);
  }
  if (opts.covariates)
    for (int64_t c = 0; c < out.series->channels(); ++c)
      if (std::find(out.target_channels.begin(), out.target_channels.end(), c) ==
          out.target_channels.end())
        out.predictor_channels.push_back(c);

  const SplitSpec split = parse_split(opts.split, default_split);
  out.ranges = split_rows(*out.series, split);
  out.stats = compute_stats(*out.series, out.ranges.train.end);
  standardize_inplace(*out.series, out.stats);
  out.info["targets"] = target_names;
  out.info["rows"] = out.series->rows();
  return out;
}

DataSplits window_data(const LoadedData& data, int64_t T, int64_t tau,
                       int64_t depth, bool future_covariates, int64_t stride = 1) {
  WindowSpec spec;
  spec.history_len = T;
  spec.horizon = tau;
  spec.stride = stride;
  spec.target_channels = data.target_channels;
  spec.predictor_channels = data.predictor_channels;
  spec.future_covariates_known = future_covariates;
  spec.divisor = int64_t{1} << depth;
  return make_windows(data.series, data.ranges, spec);
}

ModelConfig build_model_config(const LoadedData& data, const DataSplits& splits,
                               int64_t d_model, int64_t heads, int64_t depth,
                               double c, double alpha, bool disable_skips,
                               uint64_t seed, bool future_covariates) {
  ModelConfig cfg;
  cfg.history_len = splits.train.padded_history();
  cfg.horizon = splits.train.padded_horizon();
  cfg.predictor_channels = int64_t(data.predictor_channels.size());
  cfg.target_channels = int64_t(data.target_channels.size());
  cfg.future_predictor_channels =
      future_covariates ? int64_t(data.predictor_channels.size()) : 0;
  cfg.time_features = time_feature_count(data.series->spacing_seconds);
  cfg.d_model = d_model;
  cfg.n_heads = heads;
  cfg.depth = depth;
  cfg.sampling_factor = c;
  cfg.alpha = alpha;
  cfg.disable_skips = disable_skips;
  cfg.seed = seed;
  return cfg;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  double v;
  const char* p = text.c_str();
  char* end;
  while (*p) {
    v = std::strtod(p, &end);
    if (end == p) break;
    out.push_back(v);
    p = (*end == ',') ? end + 1 : end;
  }
  return out;
}

void print_preset(const Preset& p) {
  std::printf(
      "%s horizon=%lld setting=%s: history %lld, weight decay %g, lr %g, "
      "alpha %g, batch %lld, encoder blocks %lld\n",
      p.dataset.c_str(), (long long)p.horizon, p.setting.c_str(),
      (long long)p.history_len, p.weight_decay, p.learning_rate, p.alpha,
      (long long)p.batch_size, (long long)p.encoder_blocks);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Yformer far-horizon time-series forecasting"};
  app.require_subcommand(1);

  // ---- shared model/train flags ----
  int64_t history = 48, horizon = 24, d_model = 32, heads = 4, depth = 2;
  double sampling_factor = 5.0, alpha = 0.7;
  bool disable_skips = false, alpha_zero = false;
  uint64_t seed = 0;
  double lr = 1e-4, wd = 0.0;
  int64_t batch = 32, epochs = 20, patience = 3;
  std::string results_dir = "results", run_id = "";
  std::string ckpt_out = "", ckpt_in = "";
  bool destandardize = false;

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("-T,--history", history, "history length T");
    cmd->add_option("--horizon", horizon, "forecast horizon tau");
    cmd->add_option("--d-model", d_model, "embedding width");
    cmd->add_option("--heads", heads, "attention heads");
    cmd->add_option("-I,--depth", depth, "encoder/decoder blocks");
    cmd->add_option("-c,--sampling-factor", sampling_factor,
                    "ProbSparse sampling factor");
    cmd->add_option("--alpha", alpha, "reconstruction factor in [0,1]");
    cmd->add_flag("--alpha0", alpha_zero, "shorthand for --alpha 0");
    cmd->add_flag("--disable-skips", disable_skips,
                  "ablation: decoder attends only the coarsest embedding");
    cmd->add_option("--seed", seed, "master seed");
  };
  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--wd", wd, "weight decay (decoupled)");
    cmd->add_option("--batch", batch, "batch size");
    cmd->add_option("--epochs", epochs, "max epochs");
    cmd->add_option("--patience", patience, "early-stopping patience");
    cmd->add_option("--results", results_dir, "results directory");
    cmd->add_option("--run-id", run_id, "record identifier");
    cmd->add_flag("--destandardize", destandardize,
                  "report metrics on the original scale");
  };

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train one model");
  DataOptions train_data;
  train_data.attach(train_cmd);
  add_model_flags(train_cmd);
  add_train_flags(train_cmd);
  train_cmd->add_option("--save-checkpoint", ckpt_out, "checkpoint output path");

  // ---- grid ----
  auto* grid_cmd = app.add_subcommand("grid", "exhaustive hyperparameter grid");
  DataOptions grid_data;
  grid_data.attach(grid_cmd);
  add_model_flags(grid_cmd);
  add_train_flags(grid_cmd);
  std::string lrs = "0.001,0.0001", alphas = "0,0.3,0.5,0.7,1", wds = "0",
              depths = "2";
  grid_cmd->add_option("--lrs", lrs, "learning-rate grid");
  grid_cmd->add_option("--alphas", alphas, "alpha grid");
  grid_cmd->add_option("--wds", wds, "weight-decay grid");
  grid_cmd->add_option("--depths", depths, "encoder-block grid");

  // ---- ablate ----
  auto* ablate_cmd = app.add_subcommand(
      "ablate", "compare yformer / alpha=0 / skip-less per horizon");
  DataOptions ablate_data;
  ablate_data.attach(ablate_cmd);
  add_model_flags(ablate_cmd);
  add_train_flags(ablate_cmd);
  std::string horizons_text = "24,48";
  ablate_cmd->add_option("--horizons", horizons_text, "comma-separated horizons");

  // ---- gradcheck ----
  auto* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient suites");
  uint64_t grad_seed = 20240901;
  grad_cmd->add_option("--seed", grad_seed, "suite seed");

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic series CSV");
  std::string synth_kind = "sum-of-sines", synth_out = "synth.csv";
  int64_t synth_length = 2000;
  double synth_noise = 0.1;
  uint64_t synth_seed = 7;
  synth_cmd->add_option("--kind", synth_kind, "generator kind");
  synth_cmd->add_option("--length", synth_length, "rows");
  synth_cmd->add_option("--noise", synth_noise, "noise sigma");
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--out", synth_out, "output CSV path");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  DataOptions eval_data;
  eval_data.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", ckpt_in, "checkpoint path")->required();
  eval_cmd->add_flag("--destandardize", destandardize,
                     "report metrics on the original scale");

  // ---- presets ----
  auto* presets_cmd =
      app.add_subcommand("presets", "published hyperparameter presets");
  std::string p_dataset, p_setting = "univariate";
  int64_t p_horizon = 0;
  bool p_list = false;
  presets_cmd->add_option("--dataset", p_dataset, "ETTh1|ETTh2|ETTm1|ECL");
  presets_cmd->add_option("--horizon", p_horizon, "forecast horizon");
  presets_cmd->add_option("--setting", p_setting, "univariate|multivariate");
  presets_cmd->add_flag("--list", p_list, "print the whole table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*grad_cmd) {
      SuiteResult suite = run_gradient_suite(grad_seed);
      for (const auto& line : suite.lines)
        std::printf("[%s] %-32s max rel err %.3g over %lld elements\n",
                    line.report.ok ? "ok" : "FAIL", line.name.c_str(),
                    line.report.max_rel_err,
                    (long long)line.report.elements_checked);
      std::printf(suite.all_ok ? "gradient suite passed\n"
                               : "gradient suite FAILED\n");
      return suite.all_ok ? 0 : 1;
    }

    if (*synth_cmd) {
      RawSeries s = synth_series(synth_kind_from_string(synth_kind), synth_length,
                                 synth_noise, synth_seed);
      write_csv(s, synth_out);
      std::printf("wrote %lld rows to %s\n", (long long)s.rows(),
                  synth_out.c_str());
      return 0;
    }

    if (*presets_cmd) {
      if (p_list || p_dataset.empty()) {
        for (const auto& p : preset_table()) print_preset(p);
        return 0;
      }
      auto p = find_preset(p_dataset, p_horizon, p_setting);
      if (!p) {
        std::fprintf(stderr, "no preset for %s horizon=%lld setting=%s\n",
                     p_dataset.c_str(), (long long)p_horizon, p_setting.c_str());
        return 1;
      }
      print_preset(*p);
      return 0;
    }

    if (*train_cmd) {
      if (alpha_zero) alpha = 0;
      LoadedData data = load_data(train_data);
      DataSplits splits =
          window_data(data, history, horizon, depth, train_data.future_covariates);
      ModelConfig mcfg = build_model_config(
          data, splits, d_model, heads, depth, sampling_factor, alpha,
          disable_skips, seed, train_data.future_covariates);
      Yformer model(mcfg);
      TrainConfig tcfg{lr, wd, batch, epochs, patience, seed};
      TrainOptions opts;
      opts.run_id = run_id.empty() ? "train-seed" + std::to_string(seed) : run_id;
      opts.dataset_info = data.info;
      if (destandardize) {
        opts.destandardize = &data.stats;
        opts.target_channels = data.target_channels;
      }
      opts.on_epoch = [](int64_t epoch, const EpochLog& log) {
        std::printf("epoch %lld: train %.6f val %.6f\n", (long long)epoch,
                    log.train_loss, log.val_loss);
      };
      ExperimentRecord rec =
          train_model(model, splits.train, splits.val, splits.test, tcfg, opts);
      persist_record(rec, results_dir);
      if (!ckpt_out.empty()) model.save_checkpoint(ckpt_out);
      std::printf("%s\n", rec.to_json().dump().c_str());
      return rec.status == "ok" ? 0 : 2;
    }

    if (*grid_cmd) {
      LoadedData data = load_data(grid_data);
      DataSplits splits =
          window_data(data, history, horizon, depth, grid_data.future_covariates);
      GridSpec gspec;
      gspec.learning_rates = parse_list(lrs);
      gspec.alphas = parse_list(alphas);
      gspec.weight_decays = parse_list(wds);
      gspec.depths.clear();
      for (double d : parse_list(depths)) gspec.depths.push_back(int64_t(d));
      // depth changes the divisibility requirement; pad for the deepest one
      int64_t max_depth = 2;
      for (int64_t d : gspec.depths) max_depth = std::max(max_depth, d);
      splits = window_data(data, history, horizon, max_depth,
                           grid_data.future_covariates);
      ModelConfig base = build_model_config(
          data, splits, d_model, heads, max_depth, sampling_factor, alpha,
          disable_skips, seed, grid_data.future_covariates);
      TrainConfig tcfg{lr, wd, batch, epochs, patience, seed};
      TrainOptions opts;
      opts.run_id = run_id.empty() ? "grid" : run_id;
      opts.dataset_info = data.info;
      GridResult result = grid_search(base, tcfg, gspec, splits, opts);
      std::filesystem::create_directories(results_dir);
      std::ofstream flat(std::filesystem::path(results_dir) / "grid.csv");
      flat << "run_id,lr,wd,alpha,depth,horizon,val_loss,mse,mae\n";
      for (const auto& rec : result.records) {
        persist_record(rec, results_dir);
        const double val =
            rec.best_epoch >= 1
                ? rec.epochs[size_t(rec.best_epoch - 1)].val_loss
                : std::numeric_limits<double>::quiet_NaN();
        flat << rec.run_id << ','
             << rec.train_config.at("learning_rate").get<double>() << ','
             << rec.train_config.at("weight_decay").get<double>() << ','
             << rec.model_config.at("alpha").get<double>() << ','
             << rec.model_config.at("depth").get<int64_t>() << ','
             << rec.model_config.at("horizon").get<int64_t>() << ',' << val
             << ',' << rec.test_mse << ',' << rec.test_mae << "\n";
      }
      const auto& best = result.records[result.best_index];
      std::printf("best cell: %s\n", best.to_json().dump().c_str());

      auto hist = alpha_distribution({best});
      for (const auto& [h, byalpha] : hist)
        for (const auto& [a, n] : byalpha)
          std::printf("winning alpha at horizon %lld: %g (count %lld)\n",
                      (long long)h, a, (long long)n);
      return 0;
    }

    if (*ablate_cmd) {
      LoadedData data = load_data(ablate_data);
      std::vector<int64_t> horizons;
      for (double h : parse_list(horizons_text)) horizons.push_back(int64_t(h));
      if (horizons.empty())
        throw CLI::ValidationError("--horizons", "need at least one horizon");

      DataSplits shape_splits =
          window_data(data, history, horizons[0], depth,
                      ablate_data.future_covariates);
      ModelConfig base = build_model_config(
          data, shape_splits, d_model, heads, depth, sampling_factor, alpha,
          disable_skips, seed, ablate_data.future_covariates);
      TrainConfig tcfg{lr, wd, batch, epochs, patience, seed};
      TrainOptions opts;
      opts.run_id = run_id.empty() ? "ablate" : run_id;
      opts.dataset_info = data.info;

      auto make_splits = [&](int64_t h) {
        return window_data(data, history, h, depth, ablate_data.future_covariates);
      };
      AblationResult result = ablate(base, tcfg, horizons, make_splits, opts);
      for (const auto& rec : result.records) persist_record(rec, results_dir);
      write_ablation_csv(result,
                         (std::filesystem::path(results_dir) / "ablation.csv")
                             .string());
      for (const auto& row : result.rows)
        std::printf("%-9s horizon %-5lld mse %.6f mae %.6f params %lld\n",
                    row.variant.c_str(), (long long)row.horizon, row.mse,
                    row.mae, (long long)row.parameter_count);
      return 0;
    }

    if (*eval_cmd) {
      Yformer model = Yformer::load_checkpoint(ckpt_in);
      const ModelConfig& mcfg = model.config();
      LoadedData data = load_data(eval_data);
      DataSplits splits = window_data(
          data, mcfg.history_len, mcfg.horizon, 0, eval_data.future_covariates);
      auto [mse_v, mae_v] = evaluate_model(
          model, splits.test, 64, destandardize ? &data.stats : nullptr,
          {data.target_channels.data(), data.target_channels.size()});
      nlohmann::json out = {{"checkpoint", ckpt_in},
                            {"mse", mse_v},
                            {"mae", mae_v},
                            {"scale", destandardize ? "original" : "standardized"}};
      std::printf("%s\n", out.dump().c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
