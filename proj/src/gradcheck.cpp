#include "yformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "yformer/attention.hpp"
#include "yformer/blocks.hpp"

namespace yformer {

Tensor random_uniform(Rng& rng, const Shape& s, real lo, real hi,
                      bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = static_cast<real>(rng.uniform(lo, hi));
  return Tensor::from_values(s, std::move(v), requires_grad);
}

Tensor random_normal(Rng& rng, const Shape& s, real mean, real sigma,
                     bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = static_cast<real>(rng.normal(mean, sigma));
  return Tensor::from_values(s, std::move(v), requires_grad);
}

Tensor glorot_uniform(Rng& rng, const Shape& s, int64_t fan_in, int64_t fan_out) {
  const real limit =
      static_cast<real>(std::sqrt(6.0 / double(std::max<int64_t>(fan_in + fan_out, 1))));
  return random_uniform(rng, s, -limit, limit, true);
}

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> leaves, double step,
                           double tolerance, double floor) {
  for (auto& leaf : leaves) leaf.zero_grad();
  Tensor y = f();
  backward(y);

  std::vector<std::vector<real>> analytic;
  analytic.reserve(leaves.size());
  for (auto& leaf : leaves) {
    auto g = leaf.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckReport report;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto vals = leaves[li].values_mut();
    for (size_t i = 0; i < vals.size(); ++i) {
      const real keep = vals[i];
      vals[i] = keep + static_cast<real>(step);
      const double plus = f().item();
      vals[i] = keep - static_cast<real>(step);
      const double minus = f().item();
      vals[i] = keep;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[li][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.elements_checked;
    }
  }
  report.ok = report.max_rel_err < tolerance;
  for (auto& leaf : leaves) leaf.zero_grad();
  return report;
}

namespace {

void merge(SuiteResult& suite, const std::string& name, GradCheckReport r) {
  suite.lines.push_back({name, r});
  suite.all_ok = suite.all_ok && r.ok;
}

GradCheckReport worst(GradCheckReport a, const GradCheckReport& b) {
  a.max_rel_err = std::max(a.max_rel_err, b.max_rel_err);
  a.elements_checked += b.elements_checked;
  a.ok = a.ok && b.ok;
  return a;
}

}  // namespace

SuiteResult run_gradient_suite(uint64_t seed) {
  SuiteResult suite;
  Rng rng(seed);
  constexpr int kInstances = 20;

  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t n = 1 + rng.below(2), p = 1 + rng.below(4),
                    q = 1 + rng.below(4), r = 1 + rng.below(4);
      Tensor a = random_uniform(rng, {n, p, q}, -1, 1, true);
      Tensor b = random_uniform(rng, {n, q, r}, -1, 1, true);
      acc = worst(acc, grad_check([&] { return sum(matmul(a, b)); }, {a, b}));
    }
    merge(suite, "matmul", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t n = 1 + rng.below(2), l = 2 + rng.below(5),
                    c = 1 + rng.below(4);
      const int axis = 1 + static_cast<int>(rng.below(2));
      Tensor x = random_uniform(rng, {n, l, c}, -2, 2, true);
      Tensor w = random_uniform(rng, {n, l, c}, -1, 1, false);
      // weighted sum keeps the check sensitive to every softmax output
      acc = worst(acc,
                  grad_check([&] { return sum(mul(softmax(x, axis), w)); }, {x}));
    }
    merge(suite, "softmax", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      ConvSpec spec;
      spec.kernel_size = 1 + rng.below(3);
      spec.stride = 1 + rng.below(2);
      spec.padding = rng.below(2);
      spec.in_channels = 1 + rng.below(3);
      spec.out_channels = 1 + rng.below(3);
      const int64_t n = 1 + rng.below(2);
      const int64_t l = spec.kernel_size + rng.below(6);
      Tensor x = random_uniform(rng, {n, l, spec.in_channels}, -1, 1, true);
      Tensor w = random_uniform(
          rng, {spec.out_channels, spec.in_channels, spec.kernel_size}, -1, 1, true);
      Tensor b = random_uniform(rng, {spec.out_channels}, -1, 1, true);
      acc = worst(acc,
                  grad_check([&] { return sum(conv1d(x, w, b, spec)); }, {x, w, b}));
    }
    merge(suite, "conv1d", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      ConvSpec spec;
      spec.kernel_size = 1 + rng.below(3);
      spec.stride = 1 + rng.below(2);
      spec.padding = rng.below(2);
      spec.in_channels = 1 + rng.below(3);
      spec.out_channels = 1 + rng.below(3);
      int64_t l = 2 + rng.below(6);
      while (spec.transpose_out_length(l) < 1) ++l;
      const int64_t n = 1 + rng.below(2);
      Tensor x = random_uniform(rng, {n, l, spec.in_channels}, -1, 1, true);
      Tensor w = random_uniform(
          rng, {spec.in_channels, spec.out_channels, spec.kernel_size}, -1, 1, true);
      Tensor b = random_uniform(rng, {spec.out_channels}, -1, 1, true);
      acc = worst(acc, grad_check(
                           [&] { return sum(conv_transpose1d(x, w, b, spec)); },
                           {x, w, b}));
    }
    merge(suite, "conv_transpose1d", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t k = 1 + rng.below(3);
      const int64_t s = 1 + rng.below(2);
      const int64_t p = rng.below(k / 2 + 1);
      const int64_t n = 1 + rng.below(2), c = 1 + rng.below(3);
      const int64_t l = std::max<int64_t>(k - 2 * p, 1) + rng.below(6);
      // weights spread apart so FD steps cannot flip an argmax
      Tensor x = random_uniform(rng, {n, l, c}, -5, 5, true);
      Tensor w = random_uniform(rng, {n, (l + 2 * p - k) / s + 1, c}, -1, 1, false);
      acc = worst(acc, grad_check(
                           [&] { return sum(mul(maxpool1d(x, k, s, p), w)); }, {x}));
    }
    merge(suite, "maxpool1d", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t n = 1 + rng.below(2), l = 1 + rng.below(5),
                    c = 2 + rng.below(4);
      Tensor x = random_uniform(rng, {n, l, c}, -2, 2, true);
      LayerNormParams params;
      params.gamma = random_uniform(rng, {c}, real(0.5), real(1.5), true);
      params.beta = random_uniform(rng, {c}, -1, 1, true);
      acc = worst(acc, grad_check([&] { return sum(mul(layer_norm(x, params),
                                                       x)); },
                                  {x, params.gamma, params.beta}));
    }
    merge(suite, "layer_norm", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t n = 1 + rng.below(2), l = 1 + rng.below(6),
                    c = 1 + rng.below(4);
      Tensor x = random_uniform(rng, {n, l, c}, -3, 3, true);
      acc = worst(acc, grad_check([&] { return sum(mul(elu(x), x)); }, {x}));
    }
    merge(suite, "elu", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t n = 1 + rng.below(2), l = 1 + rng.below(6),
                    ci = 1 + rng.below(4), co = 1 + rng.below(4);
      Tensor x = random_uniform(rng, {n, l, ci}, -1, 1, true);
      Tensor w = random_uniform(rng, {ci, co}, -1, 1, true);
      Tensor b = random_uniform(rng, {co}, -1, 1, true);
      acc = worst(acc, grad_check([&] { return sum(linear(x, w, b)); }, {x, w, b}));
    }
    merge(suite, "linear", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t n = 1 + rng.below(2), la = 1 + rng.below(4),
                    lb = rng.below(4), c = 1 + rng.below(3);
      Tensor a = random_uniform(rng, {n, la, c}, -1, 1, true);
      Tensor b = random_uniform(rng, {n, lb, c}, -1, 1, true);
      Tensor w = random_uniform(rng, {n, la + lb, c}, -1, 1, false);
      acc = worst(acc, grad_check(
                           [&] { return sum(mul(concat_time(a, b), w)); }, {a, b}));
    }
    merge(suite, "concat_time", acc);
  }
  {
    GradCheckReport acc;
    for (int it = 0; it < kInstances; ++it) {
      const int64_t n = 1 + rng.below(2), l = 2 + rng.below(6),
                    c = 1 + rng.below(3);
      Tensor x = random_uniform(rng, {n, l, c}, -1, 1, true);
      Tensor w = random_uniform(rng, {n, l, c}, -1, 1, false);
      acc = worst(acc, grad_check(
                           [&] { return sum(mul(cummean_time(x), w)); }, {x}));
      Tensor w2 = random_uniform(rng, {n, 1, c}, -1, 1, false);
      acc = worst(acc,
                  grad_check([&] { return sum(mul(mean_time(x), w2)); }, {x}));
    }
    merge(suite, "mean/cummean_time", acc);
  }

  // attention layers end to end
  {
    GradCheckReport canon, sparse, cross;
    for (int it = 0; it < kInstances; ++it) {
      AttentionConfig cfg;
      cfg.d_model = 4;
      cfg.n_heads = (it % 2) ? 2 : 1;
      cfg.sampling_factor = (it % 3) ? 1.0 : 8.0;
      cfg.seed = seed + static_cast<uint64_t>(it);
      Rng init(Rng::fork(seed, 40 + static_cast<uint64_t>(it)));
      MultiHeadAttention layer(cfg, init);
      const int64_t lq = 2 + rng.below(4), lk = 2 + rng.below(4);
      Tensor q = random_uniform(rng, {1, lq, cfg.d_model}, -1, 1, true);
      Tensor kv = random_uniform(rng, {1, lk, cfg.d_model}, -1, 1, true);
      Tensor self_in = random_uniform(rng, {1, lq, cfg.d_model}, -1, 1, true);
      const bool masked = it % 2 == 0;
      auto leaves = [&](std::vector<Tensor> extra) {
        for (auto& [name, t] : layer.named_parameters()) extra.push_back(t);
        return extra;
      };
      canon = worst(canon, grad_check(
                               [&] {
                                 return sum(layer.canonical(
                                     self_in, self_in, self_in,
                                     masked ? std::optional<CausalMask>{CausalMask{}}
                                            : std::nullopt));
                               },
                               leaves({self_in})));
      sparse = worst(sparse, grad_check(
                                 [&] {
                                   return sum(layer.probsparse(
                                       self_in, self_in, self_in,
                                       masked ? std::optional<CausalMask>{CausalMask{}}
                                              : std::nullopt));
                                 },
                                 leaves({self_in})));
      cross = worst(cross,
                    grad_check([&] { return sum(layer.probsparse(q, kv, kv,
                                                                 std::nullopt)); },
                               leaves({q, kv})));
    }
    merge(suite, "canonical_attention", canon);
    merge(suite, "probsparse_attention", sparse);
    merge(suite, "probsparse_cross_attention", cross);
  }

  // composite blocks on tiny configs
  {
    BlockStackConfig bcfg;
    bcfg.d_model = 4;
    bcfg.n_heads = 2;
    bcfg.sampling_factor = 2.0;
    GradCheckReport contracting, masked, expanding, embed;
    for (int it = 0; it < kInstances; ++it) {
      Rng init(Rng::fork(seed, 90 + static_cast<uint64_t>(it)));
      ContractingBlock pb(bcfg, SelfAttentionKind::probsparse,
                          Rng::fork(seed, 300 + static_cast<uint64_t>(it)), init);
      ContractingBlock mb(bcfg, SelfAttentionKind::masked_canonical,
                          Rng::fork(seed, 400 + static_cast<uint64_t>(it)), init);
      ExpandingBlock xb(bcfg, Rng::fork(seed, 500 + static_cast<uint64_t>(it)), init);
      const int64_t l = 4 + 2 * rng.below(3);
      Tensor h = random_uniform(rng, {1, l, bcfg.d_model}, -1, 1, true);
      Tensor d_prev = random_uniform(rng, {1, l / 2, bcfg.d_model}, -1, 1, true);
      Tensor skip = random_uniform(rng, {1, l, bcfg.d_model}, -1, 1, true);

      auto with_params = [](auto& block, std::vector<Tensor> extra) {
        for (auto& [name, t] : block.named_parameters()) extra.push_back(t);
        return extra;
      };
      contracting = worst(contracting,
                          grad_check([&] { return sum(pb.forward(h)); },
                                     with_params(pb, {h})));
      masked = worst(masked, grad_check([&] { return sum(mb.forward(h)); },
                                        with_params(mb, {h})));
      expanding = worst(expanding,
                        grad_check([&] { return sum(xb.forward(d_prev, skip)); },
                                   with_params(xb, {d_prev, skip})));

      EmbeddingConfig ecfg;
      ecfg.in_channels = 1 + rng.below(2);
      ecfg.d_model = bcfg.d_model;
      ecfg.time_features = 2;
      ecfg.max_len = 16;
      InputEmbedding emb(ecfg, init);
      Tensor vals = random_uniform(rng, {1, l, ecfg.in_channels}, -1, 1, true);
      Tensor feats = random_uniform(rng, {1, l, ecfg.time_features},
                                   real(-0.5), real(0.5), true);
      embed = worst(embed, grad_check([&] { return sum(emb.forward(vals, feats)); },
                                      with_params(emb, {vals, feats})));
    }
    merge(suite, "contracting_probsparse_block", contracting);
    merge(suite, "contracting_masked_block", masked);
    merge(suite, "expanding_cross_block", expanding);
    merge(suite, "input_embedding", embed);
  }

  return suite;
}

}  // namespace yformer
