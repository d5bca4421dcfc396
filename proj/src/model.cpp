#include "yformer/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "yformer/gradcheck.hpp"

namespace yformer {

namespace {
constexpr const char* kCheckpointMagic = "YFORMER_CKPT";
constexpr int kCheckpointVersion = 1;
}  // namespace

void ModelConfig::validate() const {
  if (history_len <= 0 || horizon <= 0)
    throw std::invalid_argument("yformer: history and horizon must be positive");
  if (target_channels < 1)
    throw std::invalid_argument("yformer: need at least one target channel");
  if (predictor_channels < 0 || future_predictor_channels < 0 ||
      time_features < 0)
    throw std::invalid_argument("yformer: negative channel count");
  if (depth < 1) throw std::invalid_argument("yformer: depth must be >= 1");
  const int64_t div = int64_t{1} << depth;
  if (history_len % div != 0 || horizon % div != 0)
    throw std::invalid_argument(
        "yformer: history " + std::to_string(history_len) + " and horizon " +
        std::to_string(horizon) + " must be divisible by 2^depth = " +
        std::to_string(div) + " (pad the sampler)");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("yformer: alpha must lie in [0, 1]");
  AttentionConfig a;
  a.d_model = d_model;
  a.n_heads = n_heads;
  a.sampling_factor = sampling_factor;
  a.validate();
}

Yformer::Yformer(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();

  Rng init(Rng::fork(cfg_.seed, 0));

  BlockStackConfig bcfg;
  bcfg.d_model = cfg_.d_model;
  bcfg.n_heads = cfg_.n_heads;
  bcfg.sampling_factor = cfg_.sampling_factor;

  EmbeddingConfig past_e;
  past_e.in_channels = cfg_.predictor_channels + cfg_.target_channels;
  past_e.d_model = cfg_.d_model;
  past_e.time_features = cfg_.time_features;
  past_e.max_len = std::max(cfg_.history_len, cfg_.horizon);
  EmbeddingConfig fut_e = past_e;
  fut_e.in_channels = cfg_.future_predictor_channels;

  embeds_.emplace_back(past_e, init);
  embeds_.emplace_back(fut_e, init);
  for (int64_t i = 0; i < cfg_.depth; ++i)
    past_blocks_.emplace_back(bcfg, SelfAttentionKind::probsparse,
                              Rng::fork(cfg_.seed, 100 + uint64_t(i)), init);
  for (int64_t i = 0; i < cfg_.depth; ++i)
    fut_blocks_.emplace_back(bcfg, SelfAttentionKind::masked_canonical,
                             Rng::fork(cfg_.seed, 200 + uint64_t(i)), init);
  AttentionConfig dec_attn_cfg;
  dec_attn_cfg.d_model = cfg_.d_model;
  dec_attn_cfg.n_heads = cfg_.n_heads;
  dec_attn_cfg.sampling_factor = cfg_.sampling_factor;
  dec_attn_cfg.seed = Rng::fork(cfg_.seed, 300);
  decoder_attn_.emplace_back(dec_attn_cfg, init);
  for (int64_t i = 0; i < cfg_.depth; ++i)
    dec_blocks_.emplace_back(bcfg, Rng::fork(cfg_.seed, 400 + uint64_t(i)), init);

  head_w_ = glorot_uniform(init, {cfg_.d_model, cfg_.target_channels},
                           cfg_.d_model, cfg_.target_channels);
  head_b_ = Tensor::zeros({cfg_.target_channels}, true);

  auto collect = [this](const std::string& prefix, const auto& layer) {
    for (auto& [name, t] : layer.named_parameters())
      params_.emplace_back(prefix + "." + name, t);
  };
  collect("embed_past", embeds_[0]);
  collect("embed_future", embeds_[1]);
  for (int64_t i = 0; i < cfg_.depth; ++i)
    collect("past_block" + std::to_string(i), past_blocks_[size_t(i)]);
  for (int64_t i = 0; i < cfg_.depth; ++i)
    collect("future_block" + std::to_string(i), fut_blocks_[size_t(i)]);
  collect("decoder_attn", decoder_attn_[0]);
  for (int64_t i = 0; i < cfg_.depth; ++i)
    collect("decoder_block" + std::to_string(i), dec_blocks_[size_t(i)]);
  params_.emplace_back("head.w", head_w_);
  params_.emplace_back("head.b", head_b_);
}

ForecastOutput Yformer::forward(const ModelInput& in, ForwardTrace* trace) const {
  const Shape& sp = in.past_values.shape();
  const Shape& sf = in.future_values.shape();
  if (sp.rank != 3 ||
      sp[2] != cfg_.predictor_channels + cfg_.target_channels ||
      sp[1] != cfg_.history_len)
    throw std::invalid_argument(
        "yformer: past input shape " + sp.str() + " does not match (N," +
        std::to_string(cfg_.history_len) + "," +
        std::to_string(cfg_.predictor_channels + cfg_.target_channels) + ")");
  if (sf.rank != 3 || sf[2] != cfg_.future_predictor_channels ||
      sf[1] != cfg_.horizon || sf[0] != sp[0])
    throw std::invalid_argument(
        "yformer: future input shape " + sf.str() + " does not match (N," +
        std::to_string(cfg_.horizon) + "," +
        std::to_string(cfg_.future_predictor_channels) + ")");

  Tensor past = embeds_[0].forward(in.past_values, in.past_time);
  Tensor fut = embeds_[1].forward(in.future_values, in.future_time);

  // Eq-style pyramid: level 0 holds the raw concatenated embeddings, each
  // deeper level halves both segments before concatenation.
  std::vector<Tensor> pyramid;
  pyramid.push_back(concat_time(past, fut));
  if (trace) trace->future_attention.resize(size_t(cfg_.depth));
  for (int64_t i = 0; i < cfg_.depth; ++i) {
    past = past_blocks_[size_t(i)].forward(past);
    fut = fut_blocks_[size_t(i)].forward(
        fut, trace ? &trace->future_attention[size_t(i)] : nullptr);
    pyramid.push_back(concat_time(past, fut));
  }

  const Tensor& coarse = pyramid.back();
  Tensor d = add(coarse, decoder_attn_[0].canonical(coarse, coarse, coarse,
                                                    std::nullopt));
  if (trace) trace->decoder_lengths.push_back(d.shape()[1]);
  for (int64_t i = 0; i < cfg_.depth; ++i) {
    const Tensor& skip = cfg_.disable_skips
                             ? pyramid.back()
                             : pyramid[size_t(cfg_.depth - 1 - i)];
    d = dec_blocks_[size_t(i)].forward(d, skip);
    if (trace) trace->decoder_lengths.push_back(d.shape()[1]);
  }

  Tensor out = linear(d, head_w_, head_b_);
  ForecastOutput result;
  result.y_hat_past = slice_time(out, 0, cfg_.history_len);
  result.y_hat_fut = slice_time(out, cfg_.history_len, cfg_.horizon);
  if (trace) trace->pyramid = std::move(pyramid);
  return result;
}

std::vector<Tensor> Yformer::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

int64_t Yformer::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

std::vector<std::vector<real>> Yformer::snapshot() const {
  std::vector<std::vector<real>> snap;
  snap.reserve(params_.size());
  for (const auto& [name, t] : params_)
    snap.emplace_back(t.values().begin(), t.values().end());
  return snap;
}

void Yformer::restore(const std::vector<std::vector<real>>& snap) {
  if (snap.size() != params_.size())
    throw std::invalid_argument("yformer: snapshot does not match parameters");
  for (size_t i = 0; i < snap.size(); ++i) {
    auto dst = params_[i].second.values_mut();
    if (snap[i].size() != dst.size())
      throw std::invalid_argument("yformer: snapshot entry size mismatch");
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
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

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.history_len = j.at("history_len").get<int64_t>();
  c.horizon = j.at("horizon").get<int64_t>();
  c.predictor_channels = j.at("predictor_channels").get<int64_t>();
  c.target_channels = j.at("target_channels").get<int64_t>();
  c.future_predictor_channels = j.at("future_predictor_channels").get<int64_t>();
  c.time_features = j.at("time_features").get<int64_t>();
  c.d_model = j.at("d_model").get<int64_t>();
  c.n_heads = j.at("n_heads").get<int64_t>();
  c.depth = j.at("depth").get<int64_t>();
  c.sampling_factor = j.at("sampling_factor").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.disable_skips = j.at("disable_skips").get<bool>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

void Yformer::save_checkpoint(const std::string& path) const {
  nlohmann::json j;
  j["magic"] = kCheckpointMagic;
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(cfg_);
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : params_) {
    params[name] = std::vector<real>(t.values().begin(), t.values().end());
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("yformer: cannot write checkpoint " + path);
  out << j.dump();
}

Yformer Yformer::load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("yformer: cannot read checkpoint " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("magic", std::string{}) != kCheckpointMagic)
    throw std::runtime_error("yformer: not a yformer checkpoint: " + path);
  if (j.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error("yformer: unsupported checkpoint version");
  Yformer model(config_from_json(j.at("config")));
  const auto& params = j.at("params");
  for (auto& [name, t] : model.params_) {
    if (!params.contains(name))
      throw std::runtime_error("yformer: checkpoint missing parameter " + name);
    const auto vals = params.at(name).get<std::vector<real>>();
    auto dst = t.values_mut();
    if (vals.size() != dst.size())
      throw std::runtime_error("yformer: checkpoint size mismatch for " + name);
    std::copy(vals.begin(), vals.end(), dst.begin());
  }
  return model;
}

Tensor combined_loss(const ForecastOutput& out, const Tensor& y_past,
                     const Tensor& y_fut, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("yformer: alpha must lie in [0, 1]");
  Tensor past_term = mse(out.y_hat_past, y_past);
  Tensor fut_term = mse(out.y_hat_fut, y_fut);
  return add(scale(past_term, static_cast<real>(alpha)),
             scale(fut_term, static_cast<real>(1.0 - alpha)));
}

std::pair<double, double> forecast_metrics(const Tensor& truth,
                                           const Tensor& pred) {
  if (!(truth.shape() == pred.shape()))
    throw std::invalid_argument("yformer: metric shape mismatch: " +
                                truth.shape().str() + " vs " +
                                pred.shape().str());
  const auto tv = truth.values();
  const auto pv = pred.values();
  if (tv.empty()) throw std::invalid_argument("yformer: metrics on empty tensor");
  double se = 0, ae = 0;
  for (size_t i = 0; i < tv.size(); ++i) {
    const double d = double(tv[i]) - double(pv[i]);
    se += d * d;
    ae += std::abs(d);
  }
  return {se / double(tv.size()), ae / double(tv.size())};
}

int64_t parameter_count(const ModelConfig& cfg) {
  return Yformer(cfg).parameter_count();
}

}  // namespace yformer
