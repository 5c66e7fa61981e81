// Python bindings: array-level transforms, checkpoints, training and
// evaluation driven by run configs. Arrays are float64 NumPy arrays; JSON
// results cross as strings and are decoded by the fap package.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "fap/attention.hpp"
#include "fap/augment.hpp"
#include "fap/checkpoint.hpp"
#include "fap/config.hpp"
#include "fap/error.hpp"
#include "fap/eval.hpp"
#include "fap/trainer.hpp"
#include "fap/wavelet.hpp"

namespace py = pybind11;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

fap::Tensor to_tensor(const Array& a) {
  fap::Shape shape(a.shape(), a.shape() + a.ndim());
  return fap::Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const fap::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::tuple dwt2(const Array& plane) {
  const auto b = fap::wavelet::dwt2(to_tensor(plane));
  return py::make_tuple(to_array(b.ll), to_array(b.lh), to_array(b.hl), to_array(b.hh));
}

Array idwt2(const Array& ll, const Array& lh, const Array& hl, const Array& hh) {
  fap::wavelet::SubbandSet b{to_tensor(ll), to_tensor(lh), to_tensor(hl), to_tensor(hh),
                             static_cast<std::size_t>(ll.ndim() == 2 ? 2 * ll.shape(0) : 0),
                             static_cast<std::size_t>(ll.ndim() == 2 ? 2 * ll.shape(1) : 0)};
  return to_array(fap::wavelet::idwt2(b));
}

// Loads a run config, applying the same overrides the CLI offers.
fap::RunConfig run_config(const std::string& path, std::optional<std::uint64_t> seed,
                          std::optional<std::size_t> episodes) {
  fap::RunConfig cfg = fap::load_run_config(path);
  if (seed) cfg.train.seed = *seed;
  if (episodes) {
    cfg.train.episodes_per_epoch = *episodes;
    cfg.train.epochs = 1;
  }
  cfg.validate();
  return cfg;
}

std::string train(const std::string& config, const std::string& checkpoint, std::optional<std::uint64_t> seed,
                  std::optional<std::size_t> episodes) {
  fap::RunConfig cfg = run_config(config, seed, episodes);
  fap::TrainResult result = [&] {
    py::gil_scoped_release release;
    const fap::Pools pools = fap::build_pools(cfg.dataset);
    cfg.train.model.input_norm = pools.norm;
    return fap::train(cfg.train, pools.train, pools.val);
  }();
  fap::save_checkpoint(checkpoint, result.model);
  nlohmann::json history = nlohmann::json::array();
  for (const auto& row : result.history) {
    nlohmann::json r = {{"episode", row.episode}, {"branch", fap::branch_name(row.branch)}, {"total", row.loss.total}};
    if (row.val_accuracy) r["val_accuracy"] = *row.val_accuracy;
    history.push_back(r);
  }
  return nlohmann::json({{"best_val_accuracy", result.best_val_accuracy},
                         {"best_episode", result.best_episode},
                         {"pretrain_loss", result.pretrain_loss},
                         {"history", history}})
      .dump();
}

std::string robustness(const std::string& config, const std::string& checkpoint, std::optional<std::size_t> episodes,
                       const std::string& pool_name) {
  fap::RunConfig cfg = run_config(config, std::nullopt, std::nullopt);
  if (episodes) cfg.eval.episodes = *episodes;
  cfg.validate();
  const fap::Model model = fap::load_checkpoint(checkpoint);
  py::gil_scoped_release release;
  const fap::Pools pools = fap::build_pools(cfg.dataset, model.config().input_norm);
  const fap::ImagePool* pool = pool_name == "test" ? &pools.test : pool_name == "probe" ? &pools.probe : nullptr;
  if (!pool) throw fap::ConfigError("pool must be 'test' or 'probe', got '" + pool_name + "'");
  const auto rc = fap::robustness_config(cfg, model.config().input_norm);
  return fap::report_json(fap::robustness_eval(model, *pool, rc, checkpoint)).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Frequency-aware few-shot learning core";

  auto base = py::register_exception<fap::Error>(m, "FapError", PyExc_RuntimeError);
  py::register_exception<fap::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<fap::IoError>(m, "IoError", base.ptr());
  py::register_exception<fap::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<fap::NumericError>(m, "NumericError", base.ptr());

  m.def("dwt2", &dwt2, py::arg("plane"), "Single-level orthonormal Haar transform of an [H,W] plane: (ll, lh, hl, hh).");
  m.def("idwt2", &idwt2, py::arg("ll"), py::arg("lh"), py::arg("hl"), py::arg("hh"), "Inverse of dwt2.");

  m.def("zeros_variant", [](const Array& x) { return to_array(fap::augment::make_zeros_variant(to_tensor(x))); },
        py::arg("images"), "[B,C,H,W] images with every detail band zeroed.");
  m.def(
      "randn_variant",
      [](const Array& x, std::uint64_t seed) {
        fap::Rng rng(seed);
        return to_array(fap::augment::make_randn_variant(to_tensor(x), rng));
      },
      py::arg("images"), py::arg("seed"), "[B,C,H,W] images with detail bands redrawn from N(0,1).");
  m.def(
      "noise_variant",
      [](const Array& x, double sigma, std::uint64_t seed) {
        fap::Rng rng(seed);
        return to_array(fap::augment::make_noise_variant(to_tensor(x), sigma, rng));
      },
      py::arg("images"), py::arg("sigma"), py::arg("seed"));
  m.def("high_only", [](const Array& x) { return to_array(fap::augment::make_high_only(to_tensor(x))); },
        py::arg("images"));
  m.def("low_only", [](const Array& x) { return to_array(fap::augment::make_low_only(to_tensor(x))); },
        py::arg("images"));
  m.def(
      "random_conv",
      [](const Array& x, std::uint64_t seed, std::vector<std::size_t> pool) {
        fap::Rng rng(seed);
        const auto r = fap::augment::random_conv(to_tensor(x), rng, pool);
        return py::make_tuple(to_array(r.images), r.kernel_size);
      },
      py::arg("images"), py::arg("seed"),
      py::arg("pool") = std::vector<std::size_t>(fap::augment::kDefaultFilterPool.begin(),
                                                 fap::augment::kDefaultFilterPool.end()),
      "Returns (images, kernel_size).");
  m.def(
      "mutual_attention",
      [](const Array& anchor, const Array& variant, const Array& w_q, const Array& w_k, const Array& w_v) {
        return to_array(
            fap::mutual_attention(to_tensor(anchor), to_tensor(variant), {to_tensor(w_q), to_tensor(w_k), to_tensor(w_v)}));
      },
      py::arg("anchor"), py::arg("variant"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"));

  py::class_<fap::Model>(m, "Model")
      .def_static("load", &fap::load_checkpoint, py::arg("path"))
      .def("save", [](const fap::Model& model, const std::string& path) { fap::save_checkpoint(path, model); })
      .def("encode", [](const fap::Model& model, const Array& x) { return to_array(model.encode(to_tensor(x))); })
      .def(
          "logits",
          [](const fap::Model& model, const Array& images, const std::vector<int>& support_labels, std::size_t way) {
            const fap::Tensor x = to_tensor(images);
            if (x.rank() != 4 || x.dim(0) <= support_labels.size()) {
              throw fap::ShapeError("logits: images must be [S+Q,C,H,W] with at least one query");
            }
            // Query labels only size the query block; their values are unused.
            fap::EpisodeLabels labels{way, support_labels, std::vector<int>(x.dim(0) - support_labels.size(), 0)};
            return to_array(model.logits(x, labels));
          },
          py::arg("images"), py::arg("support_labels"), py::arg("way"),
          "Support images first, then queries; returns [Q, way] logits.")
      .def_property_readonly("parameter_names", [](const fap::Model& model) {
        std::vector<std::string> names;
        for (const auto& [name, p] : model.params()) names.push_back(name);
        return names;
      });

  m.def("_effective_config", [](const std::string& path) { return fap::to_json(fap::load_run_config(path)).dump(); },
        py::arg("path"));
  m.def("_train", &train, py::arg("config"), py::arg("checkpoint"), py::arg("seed") = py::none(),
        py::arg("episodes") = py::none());
  m.def("_robustness", &robustness, py::arg("config"), py::arg("checkpoint"), py::arg("episodes") = py::none(),
        py::arg("pool") = "test");
}
