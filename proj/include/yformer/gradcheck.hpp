#pragma once

#include <functional>
#include <string>
#include <vector>

#include "yformer/rng.hpp"
#include "yformer/tensor.hpp"

namespace yformer {

Tensor random_uniform(Rng& rng, const Shape& s, real lo, real hi,
                      bool requires_grad = false);
Tensor random_normal(Rng& rng, const Shape& s, real mean, real sigma,
                     bool requires_grad = false);
// Glorot/Xavier uniform with explicit fan counts (conv fans include the
// kernel extent).
Tensor glorot_uniform(Rng& rng, const Shape& s, int64_t fan_in, int64_t fan_out);

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t elements_checked = 0;
  bool ok = true;
};

// Central finite differences against the reverse-mode gradients of `f`.
// `f` must rebuild its graph on every call and return a scalar; `leaves`
// are the tensors whose gradients get verified. Relative error uses
// |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           std::vector<Tensor> leaves, double step = 1e-6,
                           double tolerance = 1e-4, double floor = 1e-2);

struct SuiteLine {
  std::string name;
  GradCheckReport report;
};

// Finite-difference suites over every differentiable operation and every
// composite block, >= 20 random instances each. Returns one line per unit;
// all_ok is the conjunction.
struct SuiteResult {
  std::vector<SuiteLine> lines;
  bool all_ok = true;
};
SuiteResult run_gradient_suite(uint64_t seed = 20240901);

}  // namespace yformer
