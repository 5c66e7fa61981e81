#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "fap/episodes.hpp"
#include "fap/rng.hpp"
#include "fap/tensor.hpp"

namespace fap::augment {

inline constexpr std::array<std::size_t, 6> kDefaultFilterPool{1, 3, 5, 7, 11, 15};

// Detail bands replaced by zeros; LL kept. Equals the 2x2 block-mean image.
Tensor make_zeros_variant(const Tensor& images);
// Detail bands replaced by i.i.d. N(0,1) draws; LL kept.
Tensor make_randn_variant(const Tensor& images, Rng& rng);
// images + sigma * N(0,1), no clipping.
Tensor make_noise_variant(const Tensor& images, double sigma, Rng& rng);
// Reconstruction from the detail bands only (LL zeroed).
Tensor make_high_only(const Tensor& images);
Tensor make_low_only(const Tensor& images);

struct RandomConvResult {
  Tensor images;
  std::size_t kernel_size = 0;
};

// Size-preserving convolution with a freshly drawn C->C kernel: size uniform
// over `pool`, weights Xavier-normal (std = sqrt(2 / (fan_in + fan_out)),
// fan = C*k*k), stride 1, padding (k-1)/2, no bias. The kernel is discarded
// and the output carries no history.
RandomConvResult random_conv(const Tensor& images, Rng& rng,
                             std::span<const std::size_t> pool = kDefaultFilterPool);

// An episode with its two frequency variants; all three share labels.
struct AugmentedEpisode {
  Tensor x0;       // support then query, [N*(K+Q), C, H, W]
  Tensor x_zeros;
  Tensor x_randn;
  EpisodeLabels labels;
};

AugmentedEpisode build_augmented_episode(const Episode& episode, Rng& rng);

}  // namespace fap::augment
