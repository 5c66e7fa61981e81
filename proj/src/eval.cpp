#include "fap/eval.hpp"

#include <cmath>
#include <cstdio>

#include "fap/augment.hpp"
#include "fap/error.hpp"

namespace fap {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::original: return "original";
    case Variant::zeros: return "zeros";
    case Variant::randn: return "randn";
    case Variant::noise: return "noise";
    case Variant::high_only: return "high_only";
    case Variant::low_only: return "low_only";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (name == variant_name(v)) return v;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected original, zeros, randn, noise, high_only or low_only)");
}

namespace {

constexpr double kSplitTolerance = 1e-10;

void audit_split(const Tensor& images, const Tensor& high, const Tensor& low) {
  const auto x = images.values(), h = high.values(), l = low.values();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(h[i] + l[i] - x[i]));
  if (worst > kSplitTolerance) {
    throw NumericError("high_only + low_only differs from the input by " + std::to_string(worst));
  }
}

}  // namespace

ImageTransform variant_transform(Variant v, double noise_sigma) {
  switch (v) {
    case Variant::original:
      return {};
    case Variant::zeros:
      return [](const Tensor& x, Rng&) { return augment::make_zeros_variant(x); };
    case Variant::randn:
      return [](const Tensor& x, Rng& rng) { return augment::make_randn_variant(x, rng); };
    case Variant::noise:
      return [noise_sigma](const Tensor& x, Rng& rng) { return augment::make_noise_variant(x, noise_sigma, rng); };
    case Variant::high_only:
      return [](const Tensor& x, Rng&) {
        Tensor high = augment::make_high_only(x);
        audit_split(x, high, augment::make_low_only(x));
        return high;
      };
    case Variant::low_only:
      return [](const Tensor& x, Rng&) {
        Tensor low = augment::make_low_only(x);
        audit_split(x, augment::make_high_only(x), low);
        return low;
      };
  }
  throw Error("unhandled variant");
}

const EvalReport& RobustnessReport::at(Variant v) const {
  for (const auto& r : rows)
    if (r.variant == v) return r.report;
  throw Error(std::string("robustness report has no row for ") + variant_name(v));
}

RobustnessReport robustness_eval(const Model& model, const ImagePool& pool, const RobustnessConfig& cfg,
                                 std::string model_id) {
  if (cfg.noise_sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
  RobustnessReport report{std::move(model_id), cfg, {}};
  for (Variant v : cfg.variants) {
    report.rows.push_back({v, evaluate(model, pool, cfg.eval, variant_transform(v, cfg.noise_sigma))});
  }
  return report;
}

const EvalReport& ProbeReport::at(std::string_view model, Variant v) const {
  for (const auto& r : rows)
    if (r.model == model && r.variant == v) return r.report;
  throw Error("probe report has no row for " + std::string(model) + "/" + variant_name(v));
}

ProbeReport frequency_perception_probe(const Model& baseline, const Model& fap, const ImagePool& pool,
                                       const EvalConfig& cfg) {
  ProbeReport report;
  report.config.eval = cfg;
  report.config.variants = {Variant::original, Variant::high_only, Variant::low_only};
  const std::pair<const char*, const Model*> models[] = {{"baseline", &baseline}, {"fap", &fap}};
  for (const auto& [name, model] : models) {
    for (Variant v : report.config.variants) {
      report.rows.push_back({name, v, evaluate(*model, pool, cfg, variant_transform(v, 0.0))});
    }
  }
  report.high_only_gap = report.at("baseline", Variant::high_only).accuracy - report.at("fap", Variant::high_only).accuracy;
  return report;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_report_csv(std::ostream& out, const RobustnessReport& report) {
  out << "variant,accuracy,ci95,episodes\n";
  for (const auto& r : report.rows) {
    out << variant_name(r.variant) << ',' << format_double(r.report.accuracy) << ',' << format_double(r.report.ci95)
        << ',' << r.report.episodes << '\n';
  }
}

void write_report_csv(std::ostream& out, const ProbeReport& report) {
  out << "model,variant,accuracy,ci95,episodes\n";
  for (const auto& r : report.rows) {
    out << r.model << ',' << variant_name(r.variant) << ',' << format_double(r.report.accuracy) << ','
        << format_double(r.report.ci95) << ',' << r.report.episodes << '\n';
  }
}

nlohmann::json eval_config_json(const EvalConfig& cfg) {
  return {{"episodes", cfg.episodes}, {"way", cfg.way}, {"shot", cfg.shot}, {"query", cfg.query}, {"seed", cfg.seed}};
}

namespace {

nlohmann::json report_entry(const EvalReport& r) {
  return {{"accuracy", r.accuracy}, {"ci95", r.ci95}, {"episodes", r.episodes}};
}

}  // namespace

nlohmann::json report_json(const RobustnessReport& report) {
  nlohmann::json j;
  j["model"] = report.model_id;
  j["config"] = eval_config_json(report.config.eval);
  j["config"]["noise_sigma"] = report.config.noise_sigma;
  j["variants"] = nlohmann::json::object();
  for (const auto& r : report.rows) j["variants"][variant_name(r.variant)] = report_entry(r.report);
  return j;
}

nlohmann::json report_json(const ProbeReport& report) {
  nlohmann::json j;
  j["config"] = eval_config_json(report.config.eval);
  j["models"] = nlohmann::json::object();
  for (const auto& r : report.rows) j["models"][r.model][variant_name(r.variant)] = report_entry(r.report);
  j["high_only_gap"] = report.high_only_gap;
  return j;
}

}  // namespace fap
