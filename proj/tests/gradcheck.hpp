#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fap/rng.hpp"
#include "fap/tensor.hpp"

namespace fap::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(requires_grad);
  return t;
}

inline Tensor with_values(const Tensor& like, std::vector<double> values, bool requires_grad = true) {
  Tensor t(like.shape(), std::move(values));
  t.set_requires_grad(requires_grad);
  return t;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries where the function is not smooth within h
  std::string worst;
};

// Central differences on every entry of every input against gradient().
// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor * max(1, |f|)):
// the floor tracks the loss scale, which sets the rounding noise of the
// difference quotient. Entries whose
// one-sided slopes disagree by more than smooth curvature explains (a ReLU or
// max-pool switch inside [x-h, x+h]) are counted as skipped rather than
// compared; a missed kink shows up as a failure, never as a pass.
inline GradCheckResult check_gradient(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                      const std::vector<Tensor>& inputs, double h = 1e-5, double floor = 1e-6) {
  GradCheckResult r;
  const Tensor loss = f(inputs);
  const std::vector<Tensor> analytic = gradient(loss, inputs);
  const double f0 = loss.item();
  const double noise_floor = floor * std::max(1.0, std::fabs(f0));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto base = inputs[i].values();
    for (std::size_t j = 0; j < base.size(); ++j) {
      auto eval_at = [&](double delta) {
        std::vector<Tensor> moved = inputs;
        std::vector<double> v(base.begin(), base.end());
        v[j] += delta;
        moved[i] = with_values(inputs[i], std::move(v), false);
        NoGradGuard guard;
        return f(moved).item();
      };
      const double fp = eval_at(h), fm = eval_at(-h);
      const double numeric = (fp - fm) / (2.0 * h);
      const double forward = (fp - f0) / h, backward = (f0 - fm) / h;
      const double scale = std::max({std::fabs(forward), std::fabs(backward), floor});
      if (std::fabs(forward - backward) > 1e-3 * scale + 100.0 * h) {
        ++r.skipped;
        continue;
      }
      const double a = analytic[i][j];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), noise_floor});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = "input " + std::to_string(i) + " entry " + std::to_string(j) + ": analytic " + std::to_string(a) +
                  " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace fap::testing
