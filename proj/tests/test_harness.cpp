#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>

#include "test_util.hpp"
#include "yformer/harness.hpp"
#include "yformer/presets.hpp"

using namespace yformer;

namespace {

DataSplits synth_splits(int64_t T, int64_t tau, int64_t divisor,
                        int64_t length = 400, int64_t stride = 1) {
  auto raw = std::make_shared<RawSeries>(
      synth_series(SynthKind::sum_of_sines, length, 0.05, 3));
  SplitSpec split;
  split.mode = SplitSpec::Mode::fractions;
  split.train = 0.6;
  split.val = 0.2;
  split.test = 0.2;
  const SplitRanges ranges = split_rows(*raw, split);
  const StandardizeStats stats = compute_stats(*raw, ranges.train.end);
  standardize_inplace(*raw, stats);
  WindowSpec spec;
  spec.history_len = T;
  spec.horizon = tau;
  spec.stride = stride;
  spec.target_channels = {0};
  spec.divisor = divisor;
  return make_windows(raw, ranges, spec);
}

ModelConfig tiny_model(int64_t T = 16, int64_t tau = 8) {
  ModelConfig cfg;
  cfg.history_len = T;
  cfg.horizon = tau;
  cfg.target_channels = 1;
  cfg.time_features = 4;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.depth = 2;
  cfg.alpha = 0.5;
  cfg.seed = 21;
  return cfg;
}

TrainConfig quick_train(int64_t epochs = 2) {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 32;
  cfg.max_epochs = epochs;
  cfg.patience = 3;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("adam matches a hand-rolled reference on a quadratic") {
  for (double wd : {0.0, 0.05}) {
    Tensor w = Tensor::from_values({2}, {0, 0}, true);
    Tensor target = Tensor::from_values({2}, {3, -1});
    Tensor curv = Tensor::from_values({2}, {1, 2});
    Adam opt({w}, 0.05, wd);

    double ref[2] = {0, 0};
    double m[2] = {0, 0}, v[2] = {0, 0};
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05;

    for (int t = 1; t <= 100; ++t) {
      Tensor d = sub(w, target);
      backward(sum(mul(curv, mul(d, d))));
      opt.step();

      for (int i = 0; i < 2; ++i) {
        const double tgt = i == 0 ? 3.0 : -1.0;
        const double c = i == 0 ? 1.0 : 2.0;
        const double g = 2.0 * c * (ref[i] - tgt);
        m[i] = b1 * m[i] + (1 - b1) * g;
        v[i] = b2 * v[i] + (1 - b2) * g * g;
        const double mhat = m[i] / (1 - std::pow(b1, t));
        const double vhat = v[i] / (1 - std::pow(b2, t));
        ref[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * ref[i];
      }
      CHECK(std::abs(double(w.values()[0]) - ref[0]) < 1e-10);
      CHECK(std::abs(double(w.values()[1]) - ref[1]) < 1e-10);
    }
  }
}

TEST_CASE("adam refuses to step without gradients") {
  Tensor w = Tensor::from_values({2}, {1, 1}, true);
  Adam opt({w}, 0.1);
  CHECK_THROWS_AS(opt.step(), std::runtime_error);
}

TEST_CASE("early stopping traces the spec example") {
  EarlyStopper stop{3};
  const double vals[] = {3, 2, 2.5, 2.6, 2.7};
  std::vector<bool> decisions;
  for (double v : vals) decisions.push_back(stop.observe(v));
  CHECK(decisions == std::vector<bool>{false, false, false, false, true});
  CHECK(stop.best_epoch == 2);
  CHECK(stop.best == 2.0);

  EarlyStopper improving{2};
  CHECK_FALSE(improving.observe(5));
  CHECK_FALSE(improving.observe(4));
  CHECK_FALSE(improving.observe(3));
  CHECK(improving.best_epoch == 3);
}

TEST_CASE("lr = 0 leaves parameters and losses frozen") {
  DataSplits splits = synth_splits(16, 8, 4);
  Yformer model(tiny_model());
  const auto before = model.snapshot();
  TrainConfig cfg = quick_train(3);
  cfg.learning_rate = 0;
  ExperimentRecord rec =
      train_model(model, splits.train, splits.val, splits.test, cfg);
  const auto after = model.snapshot();
  CHECK(before == after);
  REQUIRE(rec.epochs.size() >= 2);
  for (size_t e = 1; e < rec.epochs.size(); ++e)
    CHECK(rec.epochs[e].train_loss ==
          doctest::Approx(rec.epochs[0].train_loss).epsilon(1e-15));
}

TEST_CASE("smoke run learns on sum-of-sines") {
  DataSplits splits = synth_splits(16, 8, 4);
  Yformer model(tiny_model());
  ExperimentRecord rec =
      train_model(model, splits.train, splits.val, splits.test, quick_train(5));
  CHECK(rec.status == "ok");
  REQUIRE(rec.epochs.size() >= 2);
  CHECK(rec.epochs.back().train_loss < rec.epochs.front().train_loss);
  CHECK(std::isfinite(rec.test_mse));
  CHECK(rec.best_epoch >= 1);
}

TEST_CASE("weight decay shrinks the parameter norm") {
  DataSplits splits = synth_splits(16, 8, 4);
  auto norm_after = [&](double wd) {
    Yformer model(tiny_model());
    TrainConfig cfg = quick_train(2);
    cfg.weight_decay = wd;
    train_model(model, splits.train, splits.val, splits.test, cfg);
    double norm = 0;
    for (const auto& [name, t] : model.named_parameters())
      for (real v : t.values()) norm += double(v) * double(v);
    return norm;
  };
  CHECK(norm_after(0.1) < norm_after(0.0));
}

TEST_CASE("records round-trip bit-identically") {
  DataSplits splits = synth_splits(16, 8, 4);
  Yformer model(tiny_model());
  ExperimentRecord rec =
      train_model(model, splits.train, splits.val, splits.test, quick_train(1));
  const std::string dumped = rec.to_json().dump();
  ExperimentRecord back = ExperimentRecord::from_json(nlohmann::json::parse(dumped));
  CHECK(back.to_json().dump() == dumped);
}

TEST_CASE("identical config and seed reproduce the loss trajectory") {
  DataSplits splits = synth_splits(16, 8, 4);
  auto run = [&] {
    Yformer model(tiny_model());
    return train_model(model, splits.train, splits.val, splits.test,
                       quick_train(3));
  };
  ExperimentRecord a = run();
  ExperimentRecord b = run();
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);
    CHECK(a.epochs[e].val_loss == b.epochs[e].val_loss);
  }
  CHECK(a.test_mse == b.test_mse);
  CHECK(a.test_mae == b.test_mae);
}

TEST_CASE("grid search enumerates the product and tracks the best cell") {
  DataSplits splits = synth_splits(16, 8, 4);
  GridSpec singleton;
  singleton.learning_rates = {1e-3};
  singleton.alphas = {0.5};
  singleton.weight_decays = {0};
  singleton.depths = {2};
  GridResult one = grid_search(tiny_model(), quick_train(1), singleton, splits);
  CHECK(one.records.size() == 1);

  GridSpec grid;
  grid.learning_rates = {1e-3, 1e-4};
  grid.alphas = {0.0, 0.7};
  grid.weight_decays = {0};
  grid.depths = {2};
  GridResult four = grid_search(tiny_model(), quick_train(1), grid, splits);
  CHECK(four.records.size() == 4);

  double best = std::numeric_limits<double>::infinity();
  size_t best_idx = 0;
  for (size_t i = 0; i < four.records.size(); ++i) {
    const auto& r = four.records[i];
    const double val = r.epochs[size_t(r.best_epoch - 1)].val_loss;
    if (val < best) {
      best = val;
      best_idx = i;
    }
  }
  CHECK(four.best_index == best_idx);
}

TEST_CASE("ablation produces three variants per horizon") {
  auto make_splits = [&](int64_t horizon) { return synth_splits(16, horizon, 4); };
  AblationResult result = ablate(tiny_model(), quick_train(1), {8, 16}, make_splits);
  REQUIRE(result.rows.size() == 6);
  REQUIRE(result.records.size() == 6);

  int64_t full_params = 0, skipless_params = 0;
  for (const auto& row : result.rows) {
    if (row.variant == "yformer") full_params = row.parameter_count;
    if (row.variant == "skipless") skipless_params = row.parameter_count;
  }
  CHECK(full_params > 0);
  CHECK(full_params == skipless_params);

  for (const auto& rec : result.records)
    if (rec.variant == "alpha0")
      CHECK(rec.model_config.at("alpha").get<double>() == 0.0);

  write_ablation_csv(result, "ablation_test.csv");
  std::ifstream in("ablation_test.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "variant,horizon,mse,mae");
  int lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 6);
  std::filesystem::remove("ablation_test.csv");
}

TEST_CASE("alpha histogram counts winners per horizon") {
  ExperimentRecord r1;
  r1.model_config = {{"horizon", 24}, {"alpha", 0.7}};
  auto hist = alpha_distribution({r1});
  CHECK(hist[24][0.7] == 1);

  ExperimentRecord r2;
  r2.model_config = {{"horizon", 24}, {"alpha", 0.3}};
  ExperimentRecord r3;
  r3.model_config = {{"horizon", 48}, {"alpha", 0.7}};
  hist = alpha_distribution({r1, r2, r3});
  int64_t total = 0;
  for (const auto& [h, byalpha] : hist)
    for (const auto& [a, n] : byalpha) total += n;
  CHECK(total == 3);
  CHECK(hist[24][0.7] == 1);
  CHECK(hist[24][0.3] == 1);
  CHECK(hist[48][0.7] == 1);
}

TEST_CASE("baselines are finite and positive on synthetic data") {
  DataSplits splits = synth_splits(16, 8, 4);
  const double repeat = repeat_last_baseline_mse(splits.test);
  const double mean = train_mean_baseline_mse(splits.train, splits.test);
  CHECK(std::isfinite(repeat));
  CHECK(std::isfinite(mean));
  CHECK(repeat > 0);
  CHECK(mean > 0);
}

TEST_CASE("records persist as JSONL plus per-run files") {
  DataSplits splits = synth_splits(16, 8, 4);
  Yformer model(tiny_model());
  TrainOptions opts;
  opts.run_id = "persist-check";
  ExperimentRecord rec = train_model(model, splits.train, splits.val,
                                     splits.test, quick_train(1), opts);
  const std::string dir = "results_test_dir";
  persist_record(rec, dir);
  CHECK(std::filesystem::exists(dir + "/persist-check.json"));
  CHECK(std::filesystem::exists(dir + "/index.jsonl"));
  std::ifstream in(dir + "/index.jsonl");
  std::string line;
  std::getline(in, line);
  ExperimentRecord parsed = ExperimentRecord::from_json(nlohmann::json::parse(line));
  CHECK(parsed.run_id == "persist-check");
  std::filesystem::remove_all(dir);
}

TEST_CASE("preset lookups match the published tables") {
  CHECK(preset_table().size() == 40);

  auto p = find_preset("ETTh1", 24, "univariate");
  REQUIRE(p.has_value());
  CHECK(p->history_len == 720);
  CHECK(p->learning_rate == 0.0001);
  CHECK(p->alpha == 0.7);
  CHECK(p->batch_size == 32);
  CHECK(p->encoder_blocks == 2);
  CHECK(p->weight_decay == 0);

  auto q = find_preset("ETTh2", 168, "univariate");
  REQUIRE(q.has_value());
  CHECK(q->history_len == 336);
  CHECK(q->learning_rate == 0.001);
  CHECK(q->alpha == 0.3);

  auto r = find_preset("ETTm1", 288, "univariate");
  REQUIRE(r.has_value());
  CHECK(r->learning_rate == 0.001);
  CHECK(r->alpha == 0.7);
  CHECK(r->batch_size == 16);
  CHECK(r->encoder_blocks == 2);

  CHECK_FALSE(find_preset("ETTh1", 999, "univariate").has_value());
}
