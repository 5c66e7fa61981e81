#include "fap/attention.hpp"

#include <cmath>
#include <vector>

#include "fap/error.hpp"
#include "fap/ops.hpp"

namespace fap {

namespace {

Tensor project(const Tensor& x, const Tensor& w) {
  const std::size_t c = w.dim(0);
  return ops::conv2d(x, ops::reshape(w, {c, c, 1, 1}), 1, 0);
}

Tensor xavier_square(std::size_t c, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(c + c));
  std::vector<double> v(c * c);
  for (double& x : v) x = stddev * rng.normal();
  Tensor t({c, c}, std::move(v));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

MutualAttentionParams init_mutual_attention(std::size_t channels, Rng& rng) {
  if (channels == 0) throw ShapeError("mutual attention: zero channels");
  Tensor q = xavier_square(channels, rng);
  Tensor k = xavier_square(channels, rng);
  Tensor v = xavier_square(channels, rng);
  return {q, k, v};
}

Tensor mutual_attention(const Tensor& anchor, const Tensor& variant, const MutualAttentionParams& params) {
  if (anchor.rank() != 4 || anchor.shape() != variant.shape()) {
    throw ShapeError("mutual_attention: anchor " + shape_str(anchor.shape()) + " and variant " +
                     shape_str(variant.shape()) + " must be equal [B,C,H,W]");
  }
  const std::size_t c = anchor.dim(1);
  for (const Tensor* w : {&params.w_q, &params.w_k, &params.w_v}) {
    if (w->shape() != Shape{c, c}) {
      throw ShapeError("mutual_attention: projection " + shape_str(w->shape()) + " does not match " +
                       std::to_string(c) + " channels");
    }
  }
  const Tensor q_anchor = project(anchor, params.w_q);
  const Tensor k_anchor = project(anchor, params.w_k);
  const Tensor v_anchor = project(anchor, params.w_v);
  const Tensor q_variant = project(variant, params.w_q);
  const Tensor k_variant = project(variant, params.w_k);
  const Tensor v_variant = project(variant, params.w_v);

  const Tensor to_variant = ops::attention(q_anchor, k_variant, v_variant);
  const Tensor to_anchor = ops::attention(q_variant, k_anchor, v_anchor);
  const Tensor merged = ops::scale(ops::add(to_variant, to_anchor), 0.5);
  return ops::add(merged, variant);
}

}  // namespace fap
