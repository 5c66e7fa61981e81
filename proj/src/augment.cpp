#include "fap/augment.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fap/error.hpp"
#include "fap/ops.hpp"
#include "fap/wavelet.hpp"

namespace fap::augment {

namespace {

Tensor normal_like(const Tensor& like, Rng& rng) {
  std::vector<double> values(like.numel());
  for (double& v : values) v = rng.normal();
  return Tensor(like.shape(), std::move(values));
}

}  // namespace

Tensor make_zeros_variant(const Tensor& images) {
  auto bands = wavelet::dwt2_batch(images);
  const Tensor zero = Tensor::zeros(bands.ll.shape());
  return wavelet::idwt2_batch({bands.ll, zero, zero, zero});
}

Tensor make_randn_variant(const Tensor& images, Rng& rng) {
  auto bands = wavelet::dwt2_batch(images);
  // Draw order: all LH, then all HL, then all HH.
  Tensor lh = normal_like(bands.ll, rng);
  Tensor hl = normal_like(bands.ll, rng);
  Tensor hh = normal_like(bands.ll, rng);
  return wavelet::idwt2_batch({bands.ll, lh, hl, hh});
}

Tensor make_noise_variant(const Tensor& images, double sigma, Rng& rng) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("make_noise_variant: sigma must be a finite value >= 0, got " + std::to_string(sigma));
  }
  auto src = images.values();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] + sigma * rng.normal();
  return Tensor(images.shape(), std::move(out));
}

Tensor make_high_only(const Tensor& images) {
  auto bands = wavelet::dwt2_batch(images);
  return wavelet::idwt2_batch({Tensor::zeros(bands.ll.shape()), bands.lh, bands.hl, bands.hh});
}

Tensor make_low_only(const Tensor& images) { return make_zeros_variant(images); }

RandomConvResult random_conv(const Tensor& images, Rng& rng, std::span<const std::size_t> pool) {
  if (images.rank() != 4) throw ShapeError("random_conv: expected [B,C,H,W], got " + shape_str(images.shape()));
  if (pool.empty()) throw ConfigError("random_conv: empty filter pool");
  const std::size_t k = pool[rng.index(pool.size())];
  if (k % 2 == 0) throw ConfigError("random_conv: filter sizes must be odd, got " + std::to_string(k));
  const std::size_t c = images.dim(1);
  const double fan = static_cast<double>(c * k * k);
  const double stddev = std::sqrt(2.0 / (fan + fan));
  std::vector<double> weights(c * c * k * k);
  for (double& w : weights) w = stddev * rng.normal();
  NoGradGuard no_grad;
  Tensor out = ops::conv2d(images.detach(), Tensor({c, c, k, k}, std::move(weights)), 1, (k - 1) / 2);
  return {out.detach(), k};
}

AugmentedEpisode build_augmented_episode(const Episode& episode, Rng& rng) {
  Tensor x0 = episode.images();
  Tensor zeros = make_zeros_variant(x0);
  Tensor randn = make_randn_variant(x0, rng);
  return {std::move(x0), std::move(zeros), std::move(randn), episode.labels};
}

}  // namespace fap::augment
