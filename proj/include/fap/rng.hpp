#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fap {

// Seeded random stream. Same seed and same call sequence give the same draws;
// fork() derives an independent child stream from (seed, key) without
// consuming anything from the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  Rng fork(std::uint64_t key) const;
  Rng fork(std::string_view key) const;

  double normal();
  double uniform();
  std::size_t index(std::size_t n);
  bool bernoulli(double p);
  // k distinct values from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

}  // namespace fap
