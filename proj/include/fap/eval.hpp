#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "fap/trainer.hpp"
#include "json.hpp"

namespace fap {

enum class Variant { original, zeros, randn, noise, high_only, low_only };

const char* variant_name(Variant v);
Variant parse_variant(std::string_view name);

inline const std::vector<Variant> kAllVariants{Variant::original, Variant::zeros,     Variant::randn,
                                               Variant::noise,    Variant::high_only, Variant::low_only};

// Image rewrite for one meta-testing variant. high_only and low_only audit
// that the two parts sum back to the input.
ImageTransform variant_transform(Variant v, double noise_sigma);

struct RobustnessConfig {
  EvalConfig eval;
  double noise_sigma = 0.1;
  std::vector<Variant> variants = kAllVariants;
};

struct VariantResult {
  Variant variant;
  EvalReport report;
};

struct RobustnessReport {
  std::string model_id;
  RobustnessConfig config;
  std::vector<VariantResult> rows;

  const EvalReport& at(Variant v) const;
};

// Every variant sees the same episodes (same sampling and transform seeds).
RobustnessReport robustness_eval(const Model& model, const ImagePool& pool, const RobustnessConfig& cfg,
                                 std::string model_id = "model");

struct ProbeRow {
  std::string model;  // "baseline" or "fap"
  Variant variant;
  EvalReport report;
};

struct ProbeReport {
  RobustnessConfig config;
  std::vector<ProbeRow> rows;
  double high_only_gap = 0;  // baseline minus fap, points

  const EvalReport& at(std::string_view model, Variant v) const;
};

// Both models on original, high-only and low-only inputs of identical episodes.
ProbeReport frequency_perception_probe(const Model& baseline, const Model& fap, const ImagePool& pool,
                                       const EvalConfig& cfg);

void write_report_csv(std::ostream& out, const RobustnessReport& report);
void write_report_csv(std::ostream& out, const ProbeReport& report);
nlohmann::json report_json(const RobustnessReport& report);
nlohmann::json report_json(const ProbeReport& report);
nlohmann::json eval_config_json(const EvalConfig& cfg);

// "%.17g" rendering shared by every CSV writer.
std::string format_double(double v);

}  // namespace fap
