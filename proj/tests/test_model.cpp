#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "test_util.hpp"
#include "yformer/gradcheck.hpp"
#include "yformer/model.hpp"

using namespace yformer;

namespace {

ModelConfig tiny_config(int64_t T = 16, int64_t tau = 8, int64_t depth = 2) {
  ModelConfig cfg;
  cfg.history_len = T;
  cfg.horizon = tau;
  cfg.predictor_channels = 0;
  cfg.target_channels = 1;
  cfg.future_predictor_channels = 0;
  cfg.time_features = 4;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.depth = depth;
  cfg.alpha = 0.5;
  cfg.seed = 11;
  return cfg;
}

ModelInput random_input(const ModelConfig& cfg, uint64_t seed, int64_t batch = 2) {
  Rng rng(seed);
  ModelInput in;
  in.past_values = random_uniform(
      rng, {batch, cfg.history_len, cfg.predictor_channels + cfg.target_channels},
      -1, 1);
  in.past_time = random_uniform(rng, {batch, cfg.history_len, cfg.time_features},
                                real(-0.5), real(0.5));
  in.future_values = random_uniform(
      rng, {batch, cfg.horizon, cfg.future_predictor_channels}, -1, 1);
  in.future_time = random_uniform(rng, {batch, cfg.horizon, cfg.time_features},
                                  real(-0.5), real(0.5));
  return in;
}

}  // namespace

TEST_CASE("config validation enforces divisibility and alpha range") {
  ModelConfig cfg = tiny_config();
  cfg.history_len = 18;  // not divisible by 4
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("pyramid and decoder lengths for (48,24,2)") {
  ModelConfig cfg = tiny_config(48, 24, 2);
  Yformer model(cfg);
  ForwardTrace trace;
  ForecastOutput out = model.forward(random_input(cfg, 1), &trace);

  REQUIRE(trace.pyramid.size() == 3);
  CHECK(trace.pyramid[0].shape()[1] == 72);
  CHECK(trace.pyramid[1].shape()[1] == 36);
  CHECK(trace.pyramid[2].shape()[1] == 18);
  REQUIRE(trace.decoder_lengths.size() == 3);
  CHECK(trace.decoder_lengths[0] == 18);
  CHECK(trace.decoder_lengths[1] == 36);
  CHECK(trace.decoder_lengths[2] == 72);
  CHECK(out.y_hat_past.shape() == Shape{2, 48, 1});
  CHECK(out.y_hat_fut.shape() == Shape{2, 24, 1});
}

TEST_CASE("univariate head keeps one channel; skipless keeps shapes") {
  ModelConfig cfg = tiny_config();
  Yformer model(cfg);
  ForecastOutput out = model.forward(random_input(cfg, 2));
  CHECK(out.y_hat_fut.shape()[2] == 1);

  ModelConfig ab = cfg;
  ab.disable_skips = true;
  Yformer starred(ab);
  ForecastOutput out2 = starred.forward(random_input(ab, 2));
  CHECK(out2.y_hat_past.shape() == out.y_hat_past.shape());
  CHECK(out2.y_hat_fut.shape() == out.y_hat_fut.shape());
}

TEST_CASE("combined loss endpoints and linear combination") {
  // mse_past = 1, mse_fut = 2 by construction
  ForecastOutput out;
  out.y_hat_past = Tensor::zeros({1, 2, 1});
  out.y_hat_fut = Tensor::zeros({1, 2, 1});
  Tensor y_past = Tensor::full({1, 2, 1}, real(1));
  Tensor y_fut = Tensor::full({1, 2, 1}, real(std::sqrt(2.0)));

  CHECK(combined_loss(out, y_past, y_fut, 0.0).item() ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(combined_loss(out, y_past, y_fut, 1.0).item() ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(combined_loss(out, y_past, y_fut, 0.7).item() ==
        doctest::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("loss boundedness for alpha in [0,1]") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    ForecastOutput out;
    out.y_hat_past = random_uniform(rng, {1, 3, 2}, -2, 2);
    out.y_hat_fut = random_uniform(rng, {1, 4, 2}, -2, 2);
    Tensor y_past = random_uniform(rng, {1, 3, 2}, -2, 2);
    Tensor y_fut = random_uniform(rng, {1, 4, 2}, -2, 2);
    const double mp = mse(out.y_hat_past, y_past).item();
    const double mf = mse(out.y_hat_fut, y_fut).item();
    const double alpha = rng.uniform();
    const double l = combined_loss(out, y_past, y_fut, alpha).item();
    CHECK(l >= std::min(mp, mf) - 1e-12);
    CHECK(l <= std::max(mp, mf) + 1e-12);
  }
}

TEST_CASE("metric examples from the loss definition") {
  Tensor same = Tensor::full({1, 3, 2}, real(1.5));
  auto [mse0, mae0] = forecast_metrics(same, same);
  CHECK(mse0 == 0.0);
  CHECK(mae0 == 0.0);

  Tensor truth = Tensor::from_values({1, 1, 1}, {0});
  Tensor pred = Tensor::from_values({1, 1, 1}, {2});
  auto [mse1, mae1] = forecast_metrics(truth, pred);
  CHECK(mse1 == 4.0);
  CHECK(mae1 == 2.0);

  Tensor t2 = Tensor::from_values({1, 2, 2}, {1, 1, 3, 3});
  Tensor p2 = Tensor::from_values({1, 2, 2}, {2, 2, 2, 2});
  auto [mse2, mae2] = forecast_metrics(t2, p2);
  CHECK(mse2 == 1.0);
  CHECK(mae2 == 1.0);
}

TEST_CASE("parameter count properties") {
  ModelConfig cfg = tiny_config();
  const int64_t base = parameter_count(cfg);

  ModelConfig wide = cfg;
  wide.d_model = cfg.d_model * 2;
  CHECK(parameter_count(wide) > 2 * base);

  ModelConfig longer = cfg;
  longer.history_len = cfg.history_len * 2;
  longer.horizon = cfg.horizon * 2;
  CHECK(parameter_count(longer) == base);

  ModelConfig starred = cfg;
  starred.disable_skips = true;
  CHECK(parameter_count(starred) == base);
}

TEST_CASE("future targets never reach the forward pass") {
  ModelConfig cfg = tiny_config();
  Yformer model(cfg);
  ModelInput in = random_input(cfg, 4);
  Tensor first = model.forward(in).y_hat_fut;
  // y' lives outside ModelInput; mutating any copy of it cannot move the
  // output. Re-running on the identical input must be bit-identical.
  Tensor y_fut = Tensor::full({2, cfg.horizon, 1}, real(123.0));
  auto vals = y_fut.values_mut();
  vals[0] = real(-55.5);
  Tensor second = model.forward(in).y_hat_fut;
  CHECK(yftest::max_abs_diff(first.values(), second.values()) == 0.0);
}

TEST_CASE("masked causality holds at every future-encoder level") {
  ModelConfig cfg = tiny_config(32, 16, 2);
  Yformer model(cfg);
  ForwardTrace trace;
  model.forward(random_input(cfg, 5), &trace);
  REQUIRE(trace.future_attention.size() == 2);
  for (const auto& level : trace.future_attention) {
    REQUIRE(level.rows > 0);
    for (int64_t b = 0; b < level.batch * level.heads; ++b)
      for (int64_t i = 0; i < level.rows; ++i)
        for (int64_t j = i + 1; j < level.keys; ++j)
          CHECK(level.weight(b, i, j) == 0.0);
  }
}

TEST_CASE("pyramid slices: past encoder owns the left segment") {
  ModelConfig cfg = tiny_config(16, 8, 2);
  Yformer model(cfg);
  ModelInput in = random_input(cfg, 6);

  ForwardTrace base_trace;
  model.forward(in, &base_trace);

  ModelInput zeroed = in;
  zeroed.past_values = Tensor::zeros(in.past_values.shape());
  ForwardTrace zero_trace;
  model.forward(zeroed, &zero_trace);

  for (size_t level = 0; level < base_trace.pyramid.size(); ++level) {
    const Tensor& a = base_trace.pyramid[level];
    const Tensor& b = zero_trace.pyramid[level];
    const int64_t past_len = cfg.history_len >> level;
    const int64_t total = a.shape()[1];
    bool past_moved = false;
    for (int64_t l = 0; l < past_len && !past_moved; ++l)
      for (int64_t c = 0; c < cfg.d_model; ++c)
        if (a.at(0, l, c) != b.at(0, l, c)) {
          past_moved = true;
          break;
        }
    CHECK(past_moved);
    for (int64_t l = past_len; l < total; ++l)
      for (int64_t c = 0; c < cfg.d_model; ++c)
        CHECK(a.at(0, l, c) == b.at(0, l, c));
  }
}

TEST_CASE("fixed seed, fixed input: identical outputs across fresh models") {
  ModelConfig cfg = tiny_config();
  Yformer a(cfg);
  Yformer b(cfg);
  ModelInput in = random_input(cfg, 7);
  Tensor out_a = a.forward(in).y_hat_fut;
  Tensor out_b = b.forward(in).y_hat_fut;
  CHECK(yftest::max_abs_diff(out_a.values(), out_b.values()) == 0.0);
}

TEST_CASE("gradients reach every parameter") {
  ModelConfig cfg = tiny_config();
  Yformer model(cfg);
  ModelInput in = random_input(cfg, 8);
  Rng rng(9);
  Tensor y_past = random_uniform(rng, {2, cfg.history_len, 1}, -1, 1);
  Tensor y_fut = random_uniform(rng, {2, cfg.horizon, 1}, -1, 1);
  ForecastOutput out = model.forward(in);
  backward(combined_loss(out, y_past, y_fut, 0.5));
  for (const auto& [name, t] : model.named_parameters()) {
    if (t.numel() == 0) continue;
    REQUIRE_MESSAGE(t.grad_ready(), name);
    double norm = 0;
    for (real g : t.grad()) norm += double(g) * double(g);
    CHECK_MESSAGE(norm > 0.0, name);
  }
}

TEST_CASE("checkpoint round trip preserves the forward pass") {
  ModelConfig cfg = tiny_config();
  Yformer model(cfg);
  ModelInput in = random_input(cfg, 10);
  Tensor before = model.forward(in).y_hat_fut;

  const std::string path = "model_ckpt_test.json";
  model.save_checkpoint(path);
  Yformer loaded = Yformer::load_checkpoint(path);
  Tensor after = loaded.forward(in).y_hat_fut;
  CHECK(yftest::max_abs_diff(before.values(), after.values()) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects foreign files") {
  const std::string path = "model_ckpt_bogus.json";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"magic\": \"nope\", \"version\": 1}", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(Yformer::load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("full model gradcheck on a minimal config") {
  ModelConfig cfg = tiny_config(8, 4, 1);
  cfg.d_model = 4;
  cfg.n_heads = 2;
  Yformer model(cfg);
  ModelInput in = random_input(cfg, 12, 1);
  Rng rng(13);
  Tensor y_past = random_uniform(rng, {1, cfg.history_len, 1}, -1, 1);
  Tensor y_fut = random_uniform(rng, {1, cfg.horizon, 1}, -1, 1);

  std::vector<Tensor> leaves;
  for (const auto& [name, t] : model.named_parameters())
    if (t.numel() > 0) leaves.push_back(t);
  auto report = grad_check(
      [&] {
        ForecastOutput out = model.forward(in);
        return combined_loss(out, y_past, y_fut, 0.5);
      },
      leaves);
  CHECK(report.max_rel_err < 1e-4);
}
