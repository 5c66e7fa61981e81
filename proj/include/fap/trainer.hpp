#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fap/augment.hpp"
#include "fap/episodes.hpp"
#include "fap/model.hpp"
#include "fap/rng.hpp"

namespace fap {

enum class Method { fap, baseline };

std::string method_name(Method m);
Method parse_method(std::string_view name);

struct TrainConfig {
  double alpha = 0.001;  // Adam learning rate
  double beta = 0.03;    // ascent rate, for inputs standardized to unit variance
  std::size_t t_max = 5;
  double p = 0.5;        // probability of the all-inputs ascent branch
  std::vector<std::size_t> filter_pool{augment::kDefaultFilterPool.begin(), augment::kDefaultFilterPool.end()};
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t query = 16;
  std::size_t episodes_per_epoch = 4000;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  Method method = Method::fap;
  ModelConfig model;
  std::size_t val_every = 200;
  std::size_t val_episodes = 200;
  std::size_t val_query = 16;
  // Plain classification over all pool classes before meta-training; both
  // methods start from the same pretrained parameters.
  std::size_t pretrain_steps = 1000;
  std::size_t pretrain_batch = 64;

  // Throws ConfigError on out-of-range values. p may be exactly 0 or 1 for
  // diagnostics; configuration files require 0 < p < 1.
  void validate() const;
  std::size_t total_episodes() const { return episodes_per_epoch * epochs; }
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One Adam step on every parameter; grads are in ParamSet order.
void adam_step(ParamSet& params, std::span<const Tensor> grads, double lr, AdamState& state);

enum class InputRole { original, zeros, randn };
const char* role_name(InputRole role);

// Observer for the inner loop: called once per ascent iteration with the
// input before and after the step and the gradient that produced it.
struct AscentEvent {
  InputRole role;
  std::size_t iteration;  // 1-based
  Tensor before;
  Tensor after;
  Tensor grad;
};
using AscentObserver = std::function<void(const AscentEvent&)>;

// Episode cross-entropy (query rows) the ascent climbs.
Tensor ascent_loss(const Model& model, const Tensor& x, const EpisodeLabels& labels);

// x + beta * d CE / d x, detached. Parameters receive no gradient.
Tensor ascend_step(const Tensor& x, const EpisodeLabels& labels, const Model& model, double beta,
                   Tensor* grad_out = nullptr);

// t_max ascent steps starting from x.
Tensor ascend(const Tensor& x, const EpisodeLabels& labels, const Model& model, double beta, std::size_t t_max,
              InputRole role, const AscentObserver& observer = {});

// Result of an inner branch: the three inputs of the outer step. x is a
// constant; the variants carry the graph of the final mutual attention call so
// the outer step trains the attention projections.
struct InnerResult {
  Tensor x;
  Tensor x_zeros;
  Tensor x_randn;
  std::vector<std::size_t> kernel_sizes;  // random-conv sizes, branch A only
};

// Random convolution on each input, attention of the anchor with each variant,
// ascent of the anchor only, then attention of the ascended anchor with the
// pre-ascent variants.
InnerResult inner_branch_randconv(const augment::AugmentedEpisode& ep, const Model& model, const TrainConfig& cfg,
                                  Rng& rng, const AscentObserver& observer = {});

// Independent ascent of all three inputs, then attention of the ascended
// anchor with each ascended variant.
InnerResult inner_branch_ascend_all(const augment::AugmentedEpisode& ep, const Model& model, const TrainConfig& cfg,
                                    const AscentObserver& observer = {});

// One Adam step on the five-term loss. Returns the loss terms (values only).
struct LossValues {
  double ce_original = 0, ce_zeros = 0, ce_randn = 0, kl_zeros = 0, kl_randn = 0, total = 0;
};
LossValues outer_update(const InnerResult& triple, const EpisodeLabels& labels, Model& model, AdamState& adam,
                        const TrainConfig& cfg);

// Plain cross-entropy step on the original inputs only.
double baseline_update(const Tensor& x, const EpisodeLabels& labels, Model& model, AdamState& adam,
                       const TrainConfig& cfg);

enum class Branch { none, randconv, ascend_all };
const char* branch_name(Branch b);

struct HistoryRow {
  std::size_t episode = 0;
  Branch branch = Branch::none;
  std::vector<std::size_t> kernel_sizes;
  LossValues loss;
  std::uint64_t seed = 0;  // seed of the episode's sampling stream
  std::optional<double> val_accuracy;
};

void write_history_header(std::ostream& out);
void write_history_row(std::ostream& out, const HistoryRow& row);

struct EvalConfig {
  std::size_t episodes = 2000;
  std::size_t way = 5;
  std::size_t shot = 5;
  std::size_t query = 16;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct EvalReport {
  double accuracy = 0;  // percent
  double ci95 = 0;      // percent
  std::size_t episodes = 0;
  std::vector<double> per_episode;  // fractions in [0,1]
};

// Per-episode accuracies -> mean and 1.96 * std / sqrt(n), in percent.
EvalReport summarize_accuracies(std::vector<double> per_episode);

// Rewrites the stacked episode images before the forward pass; the stream is
// private to the episode.
using ImageTransform = std::function<Tensor(const Tensor& images, Rng& rng)>;

// Plain forward on original (or transformed) images. Episode e is sampled from
// fork("episode", e) of cfg.seed and transformed with fork("transform", e), so
// results depend only on the model, the pool and the seed.
EvalReport evaluate(const Model& model, const ImagePool& pool, const EvalConfig& cfg,
                    const ImageTransform& transform = {});

// Minibatch cross-entropy over every class of the pool through a temporary
// linear classifier on the embedding; the classifier is discarded afterwards.
// Returns the mean loss of the final 100 steps.
double pretrain(Model& model, const ImagePool& pool, const TrainConfig& cfg);

struct TrainResult {
  Model model;  // best-validation parameters
  std::vector<HistoryRow> history;
  double best_val_accuracy = 0;
  std::size_t best_episode = 0;
  double pretrain_loss = 0;
};

// Called after every episode; the row is final when passed.
using HistorySink = std::function<void(const HistoryRow&)>;

TrainResult train(const TrainConfig& cfg, const ImagePool& train_pool, const ImagePool& val_pool,
                  const HistorySink& sink = {});

}  // namespace fap
