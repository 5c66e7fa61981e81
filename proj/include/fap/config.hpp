#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fap/eval.hpp"
#include "fap/trainer.hpp"
#include "json.hpp"

namespace fap {

enum class DatasetKind { synthetic, image_dir };

ClassLayout default_class_layout();
DomainSpec default_train_domain();
DomainSpec default_test_domain();

struct SyntheticDataset {
  ClassLayout classes = default_class_layout();
  DomainSpec train_domain = default_train_domain();  // training, validation and probe pools
  DomainSpec test_domain = default_test_domain();    // cross-domain evaluation pool
  std::size_t train_per_class = 100;
  std::size_t val_per_class = 40;
  std::size_t test_per_class = 60;
  std::size_t probe_per_class = 60;
  std::uint64_t seed = 7;
};

struct ImageDirDataset {
  std::filesystem::path train, val, test;
  std::optional<std::filesystem::path> probe;  // defaults to val
};

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::size_t image_size = 32;
  std::size_t channels = 1;
  // Fit (mean, std) on the training pool and apply it to every pool.
  bool standardize = true;
  SyntheticDataset synthetic;
  ImageDirDataset image_dir;
};

// Everything a run needs. TrainConfig::model.encoder.{channels,image_size}
// always mirror the dataset section.
struct RunConfig {
  std::string name = "run";
  std::filesystem::path output_dir = "runs";
  TrainConfig train;
  DatasetConfig dataset;
  EvalConfig eval;
  double noise_sigma = 0.1;  // pixel units of the raw [0,1] images
  std::vector<Variant> variants = kAllVariants;

  // Run directory: output_dir / name.
  std::filesystem::path run_dir() const { return output_dir / name; }
  void validate() const;
};

// Strict parse: unknown keys and wrong types raise ConfigError naming the
// offending key; missing keys take the defaults above.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// Effective config with every default spelled out; parse_run_config of the
// result reproduces the same run.
nlohmann::json to_json(const RunConfig& cfg);

struct Pools {
  ImagePool train, val, test, probe;
  InputNorm norm;
};

// Builds (or loads) the pools and standardizes them. The norm is fitted on the
// training pool unless one is supplied, as when evaluating a checkpoint.
Pools build_pools(const DatasetConfig& cfg, const std::optional<InputNorm>& norm = std::nullopt);

// Evaluation settings for a model whose inputs went through norm: the
// pixel-unit noise sigma becomes sigma / norm.std.
RobustnessConfig robustness_config(const RunConfig& cfg, const InputNorm& norm);

}  // namespace fap
