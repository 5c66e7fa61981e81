// Command-line front end: train, eval, robust, probe, dwt.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
// On failure one JSON line {"error":{"kind":..,"message":..}} goes to stdout
// and a human-readable message to stderr.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fap/augment.hpp"
#include "fap/checkpoint.hpp"
#include "fap/config.hpp"
#include "fap/error.hpp"
#include "fap/eval.hpp"
#include "fap/image_io.hpp"
#include "fap/ops.hpp"
#include "fap/trainer.hpp"
#include "fap/wavelet.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct Options {
  std::string config;
  std::vector<std::string> checkpoints;
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::string image;
};

// Collects written files so the manifest can list them.
class RunDir {
 public:
  explicit RunDir(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw fap::IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const fs::path& path() const { return dir_; }

  fs::path file(const std::string& name) {
    files_.push_back(name);
    return dir_ / name;
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(file(name), std::ios::binary);
    out << text;
    if (!out) throw fap::IoError("cannot write " + (dir_ / name).string());
  }

  void write_manifest(const std::string& command, json extra) {
    json files = json::array();
    for (const auto& name : files_) {
      std::error_code ec;
      const auto bytes = fs::file_size(dir_ / name, ec);
      files.push_back({{"name", name}, {"bytes", ec ? 0 : bytes}});
    }
    extra["command"] = command;
    extra["tool_version"] = kToolVersion;
    extra["checkpoint_version"] = fap::kCheckpointVersion;
    extra["files"] = files;
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << extra.dump(2) << '\n';
    if (!out) throw fap::IoError("cannot write " + (dir_ / "manifest.json").string());
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

fap::RunConfig load_config(const Options& o) {
  fap::RunConfig cfg = fap::load_run_config(o.config);
  if (o.out) {
    const fs::path out(*o.out);
    cfg.output_dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
    cfg.name = out.filename().string();
    if (cfg.name.empty() || cfg.name == "." || cfg.name == "..") {
      cfg.output_dir = out;
      cfg.name = "run";
    }
  }
  if (o.workers) cfg.eval.workers = *o.workers;
  cfg.validate();
  return cfg;
}

void check_compatible(const fap::Model& model, const fap::RunConfig& cfg, const std::string& path) {
  const auto& enc = model.config().encoder;
  if (enc.image_size != cfg.dataset.image_size || enc.channels != cfg.dataset.channels) {
    throw fap::ConfigError("checkpoint " + path + " expects " + std::to_string(enc.channels) + "x" +
                           std::to_string(enc.image_size) + " inputs, config gives " +
                           std::to_string(cfg.dataset.channels) + "x" + std::to_string(cfg.dataset.image_size));
  }
}

std::string history_text(const std::vector<fap::HistoryRow>& rows) {
  std::ostringstream s;
  fap::write_history_header(s);
  for (const auto& r : rows) fap::write_history_row(s, r);
  return s.str();
}

int cmd_train(const Options& o) {
  fap::RunConfig cfg = load_config(o);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.episodes) {
    cfg.train.episodes_per_epoch = *o.episodes;
    cfg.train.epochs = 1;
  }
  cfg.validate();
  RunDir dir(cfg.run_dir());
  dir.write_text("config.json", fap::to_json(cfg).dump(2) + "\n");

  fap::Pools pools = fap::build_pools(cfg.dataset);
  cfg.train.model.input_norm = pools.norm;
  const std::size_t total = cfg.train.total_episodes();
  const std::size_t step = std::max<std::size_t>(1, total / 20);
  auto result = fap::train(cfg.train, pools.train, pools.val, [&](const fap::HistoryRow& row) {
    if ((row.episode + 1) % step == 0 || row.val_accuracy) {
      std::fprintf(stderr, "episode %zu/%zu %s loss %.4f%s\n", row.episode + 1, total, fap::branch_name(row.branch),
                   row.loss.total,
                   row.val_accuracy ? (" val " + std::to_string(*row.val_accuracy)).c_str() : "");
    }
  });

  dir.write_text("history.csv", history_text(result.history));
  fap::save_checkpoint(dir.file("checkpoint.bin"), result.model);
  dir.write_manifest("train", {{"method", fap::method_name(cfg.train.method)},
                               {"seed", cfg.train.seed},
                               {"episodes", total},
                               {"best_val_accuracy", result.best_val_accuracy},
                               {"best_episode", result.best_episode},
                               {"pretrain_loss", result.pretrain_loss},
                               {"input_norm", {{"mean", pools.norm.mean}, {"std", pools.norm.std}}}});
  std::printf("%s\n", json({{"run_dir", dir.path().string()},
                            {"best_val_accuracy", result.best_val_accuracy},
                            {"best_episode", result.best_episode}})
                          .dump()
                          .c_str());
  return 0;
}

// Shared by eval and robust: config, checkpoint and standardized pools.
struct EvalSetup {
  fap::RunConfig cfg;
  fap::Model model;
  fap::Pools pools;
};

EvalSetup eval_setup(const Options& o, std::size_t checkpoint_count) {
  if (o.checkpoints.size() != checkpoint_count) {
    throw fap::ConfigError("expected " + std::to_string(checkpoint_count) + " --checkpoint flag(s), got " +
                           std::to_string(o.checkpoints.size()));
  }
  fap::RunConfig cfg = load_config(o);
  if (o.episodes) cfg.eval.episodes = *o.episodes;
  if (o.seed) cfg.eval.seed = *o.seed;
  cfg.validate();
  fap::Model model = fap::load_checkpoint(o.checkpoints.front());
  check_compatible(model, cfg, o.checkpoints.front());
  fap::Pools pools = fap::build_pools(cfg.dataset, model.config().input_norm);
  return {std::move(cfg), std::move(model), std::move(pools)};
}

void write_reports(RunDir& dir, const std::string& csv, const json& report) {
  dir.write_text("report.csv", csv);
  dir.write_text("report.json", report.dump(2) + "\n");
}

int cmd_eval(const Options& o) {
  EvalSetup s = eval_setup(o, 1);
  fap::RobustnessConfig rc = fap::robustness_config(s.cfg, s.model.config().input_norm);
  rc.variants = {fap::Variant::original};
  const auto report = fap::robustness_eval(s.model, s.pools.test, rc, o.checkpoints.front());
  RunDir dir(s.cfg.run_dir());
  std::ostringstream csv;
  fap::write_report_csv(csv, report);
  write_reports(dir, csv.str(), fap::report_json(report));
  dir.write_manifest("eval", {{"checkpoint", o.checkpoints.front()}, {"config", fap::to_json(s.cfg)}});
  const auto& r = report.at(fap::Variant::original);
  std::printf("accuracy %.2f +- %.2f (%zu episodes)\n", r.accuracy, r.ci95, r.episodes);
  return 0;
}

int cmd_robust(const Options& o) {
  EvalSetup s = eval_setup(o, 1);
  const auto rc = fap::robustness_config(s.cfg, s.model.config().input_norm);
  const auto report = fap::robustness_eval(s.model, s.pools.test, rc, o.checkpoints.front());
  RunDir dir(s.cfg.run_dir());
  std::ostringstream csv;
  fap::write_report_csv(csv, report);
  json j = fap::report_json(report);
  j["noise_sigma_pixels"] = s.cfg.noise_sigma;
  write_reports(dir, csv.str(), j);
  dir.write_manifest("robust", {{"checkpoint", o.checkpoints.front()}, {"config", fap::to_json(s.cfg)}});
  std::printf("# noise sigma %.4g (pixel units)\n", s.cfg.noise_sigma);
  for (const auto& row : report.rows) {
    std::printf("%-10s %6.2f +- %.2f\n", fap::variant_name(row.variant), row.report.accuracy, row.report.ci95);
  }
  return 0;
}

int cmd_probe(const Options& o) {
  EvalSetup s = eval_setup(o, 2);
  const fap::Model fap_model = fap::load_checkpoint(o.checkpoints[1]);
  check_compatible(fap_model, s.cfg, o.checkpoints[1]);
  const auto& nb = s.model.config().input_norm;
  const auto& nf = fap_model.config().input_norm;
  if (nb.mean != nf.mean || nb.std != nf.std) {
    throw fap::ConfigError("probe: the two checkpoints were trained under different input standardization");
  }
  const auto report = fap::frequency_perception_probe(s.model, fap_model, s.pools.probe, s.cfg.eval);
  RunDir dir(s.cfg.run_dir());
  std::ostringstream csv;
  fap::write_report_csv(csv, report);
  write_reports(dir, csv.str(), fap::report_json(report));
  dir.write_manifest("probe", {{"checkpoint_baseline", o.checkpoints[0]},
                               {"checkpoint_fap", o.checkpoints[1]},
                               {"config", fap::to_json(s.cfg)}});
  for (const auto& row : report.rows) {
    std::printf("%-8s %-10s %6.2f +- %.2f\n", row.model.c_str(), fap::variant_name(row.variant), row.report.accuracy,
                row.report.ci95);
  }
  std::printf("high_only gap %.2f\n", report.high_only_gap);
  return 0;
}

json plane_stats(const fap::Tensor& t) {
  const auto v = t.values();
  double lo = v[0], hi = v[0], energy = 0.0;
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    energy += x * x;
  }
  return {{"min", lo}, {"max", hi}, {"energy", energy}};
}

void write_plane(RunDir& dir, const std::string& name, const fap::Tensor& plane, bool signed_range) {
  double lo = 0.0, hi = 1.0;
  if (signed_range) {
    double m = 0.0;
    for (double x : plane.values()) m = std::max(m, std::fabs(x));
    lo = m > 0.0 ? -m : -1.0;
    hi = m > 0.0 ? m : 1.0;
  } else {
    lo = std::min(0.0, plane_stats(plane)["min"].get<double>());
    hi = std::max(1.0, plane_stats(plane)["max"].get<double>());
  }
  fap::image_io::write_png(dir.file(name + ".png"),
                           fap::image_io::plane_to_gray(plane.values().data(), plane.dim(0), plane.dim(1), lo, hi));
}

int cmd_dwt(const Options& o) {
  if (o.image.empty()) throw fap::ConfigError("dwt: an image path is required");
  const auto img = fap::image_io::read_png(o.image);
  if (img.width % 2 != 0 || img.height % 2 != 0) {
    throw fap::ConfigError("dwt: image sides must be even, got " + std::to_string(img.width) + "x" +
                           std::to_string(img.height));
  }
  const fap::Tensor plane({img.height, img.width}, fap::image_io::to_planes(img, 1));
  const auto bands = fap::wavelet::dwt2(plane);
  RunDir dir(o.out ? fs::path(*o.out) : fs::path("dwt_out"));

  // Bands: LL spans [0, 2] for [0,1] input; details are shown on a symmetric
  // range around mid-gray.
  fap::image_io::write_png(dir.file("ll.png"), fap::image_io::plane_to_gray(bands.ll.values().data(), bands.ll.dim(0),
                                                                             bands.ll.dim(1), 0.0, 2.0));
  write_plane(dir, "lh", bands.lh, true);
  write_plane(dir, "hl", bands.hl, true);
  write_plane(dir, "hh", bands.hh, true);

  const fap::Tensor batch = fap::ops::reshape(plane, {1, 1, img.height, img.width});
  fap::Rng rng(o.seed.value_or(1));
  const fap::Tensor zeros = fap::augment::make_zeros_variant(batch);
  const fap::Tensor randn = fap::augment::make_randn_variant(batch, rng);
  const fap::Tensor high = fap::augment::make_high_only(batch);
  const fap::Shape hw{img.height, img.width};
  write_plane(dir, "zeros", fap::ops::reshape(zeros, hw), false);
  write_plane(dir, "randn", fap::ops::reshape(randn, hw), false);
  write_plane(dir, "high_only", fap::ops::reshape(high, hw), true);

  const json stats = {{"image", o.image},
                      {"height", img.height},
                      {"width", img.width},
                      {"bands",
                       {{"ll", plane_stats(bands.ll)},
                        {"lh", plane_stats(bands.lh)},
                        {"hl", plane_stats(bands.hl)},
                        {"hh", plane_stats(bands.hh)}}}};
  dir.write_text("dwt.json", stats.dump(2) + "\n");
  dir.write_manifest("dwt", {{"image", o.image}, {"seed", o.seed.value_or(1)}});
  std::printf("%s\n", stats.dump().c_str());
  return 0;
}

int fail(int code, const char* kind, const std::string& message) {
  std::printf("%s\n", json({{"error", {{"kind", kind}, {"message", message}}}}).dump().c_str());
  std::fflush(stdout);
  std::fprintf(stderr, "fap: %s error: %s\n", kind, message.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-aware few-shot training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "run configuration (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", o.out, "output directory (overrides output_dir/name)");
    sub->add_option("--seed", o.seed, "seed override");
  };

  auto* train = app.add_subcommand("train", "train a model and write history.csv and checkpoint.bin");
  add_common(train, true);
  train->add_option("--episodes", o.episodes, "training episodes (overrides episodes_per_epoch, epochs = 1)");

  for (auto [name, help] : {std::pair{"eval", "accuracy and 95% CI on the test pool"},
                            std::pair{"robust", "accuracy on every input variant of the test pool"}}) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, true);
    sub->add_option("--checkpoint", o.checkpoints, "model checkpoint")->required()->expected(1);
    sub->add_option("--episodes", o.episodes, "evaluation episodes");
    sub->add_option("--workers", o.workers, "evaluation worker threads");
  }

  auto* probe = app.add_subcommand("probe", "high-only and low-only accuracy of a baseline and a FAP model");
  add_common(probe, true);
  probe->add_option("--checkpoint", o.checkpoints, "baseline checkpoint, then FAP checkpoint")
      ->required()
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  probe->add_option("--episodes", o.episodes, "evaluation episodes");
  probe->add_option("--workers", o.workers, "evaluation worker threads");

  auto* dwt = app.add_subcommand("dwt", "write the Haar subbands and reconstructions of one PNG");
  dwt->add_option("image", o.image, "input PNG")->required();
  dwt->add_option("--out", o.out, "output directory");
  dwt->add_option("--seed", o.seed, "seed of the randn reconstruction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(1, "usage", e.what());
  }

  try {
    if (*train) return cmd_train(o);
    if (app.got_subcommand("eval")) return cmd_eval(o);
    if (app.got_subcommand("robust")) return cmd_robust(o);
    if (*probe) return cmd_probe(o);
    if (*dwt) return cmd_dwt(o);
  } catch (const fap::ConfigError& e) {
    return fail(1, "config", e.what());
  } catch (const fap::IoError& e) {
    return fail(1, "io", e.what());
  } catch (const fap::NumericError& e) {
    return fail(2, "numeric", e.what());
  } catch (const std::exception& e) {
    return fail(2, "runtime", e.what());
  }
  return fail(1, "usage", "no command given");
}
