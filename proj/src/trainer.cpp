#include "fap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "fap/attention.hpp"
#include "fap/error.hpp"
#include "fap/ops.hpp"

namespace fap {

std::string method_name(Method m) { return m == Method::fap ? "fap" : "baseline"; }

Method parse_method(std::string_view name) {
  if (name == "fap") return Method::fap;
  if (name == "baseline") return Method::baseline;
  throw ConfigError("unknown method '" + std::string(name) + "' (expected fap or baseline)");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite value > 0");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
  if (filter_pool.empty()) throw ConfigError("filter_pool must not be empty");
  for (auto k : filter_pool) {
    if (k % 2 == 0) throw ConfigError("filter_pool sizes must be odd, got " + std::to_string(k));
  }
  if (way < 2) throw ConfigError("way must be at least 2");
  if (shot == 0 || query == 0 || val_query == 0) throw ConfigError("shot and query must be positive");
  if (episodes_per_epoch == 0 || epochs == 0) throw ConfigError("episodes_per_epoch and epochs must be positive");
  model.encoder.validate();
}

void adam_step(ParamSet& params, std::span<const Tensor> grads, double lr, AdamState& state) {
  if (grads.size() != params.size()) throw Error("adam: gradient count does not match parameter count");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second.numel(), 0.0);
      state.v[i].assign(params[i].second.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error("adam: state does not match parameter set");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& w = params[i].second;
    const auto g = grads[i].values();
    if (g.size() != w.numel()) throw ShapeError("adam: gradient shape mismatch for '" + params[i].first + "'");
    auto& m = state.m[i];
    auto& v = state.v[i];
    std::vector<double> next(w.values().begin(), w.values().end());
    for (std::size_t j = 0; j < next.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      next[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    params.replace(i, Tensor(w.shape(), std::move(next)));
  }
}

const char* role_name(InputRole role) {
  switch (role) {
    case InputRole::original: return "original";
    case InputRole::zeros: return "zeros";
    case InputRole::randn: return "randn";
  }
  return "?";
}

Tensor ascent_loss(const Model& model, const Tensor& x, const EpisodeLabels& labels) {
  return ce_loss(model.logits(x, labels), labels.query);
}

Tensor ascend_step(const Tensor& x, const EpisodeLabels& labels, const Model& model, double beta, Tensor* grad_out) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  const Tensor loss = ascent_loss(model, leaf, labels);
  const std::array<Tensor, 1> wrt{leaf};
  Tensor grad;
  try {
    grad = gradient(loss, wrt)[0];
  } catch (const NumericError& e) {
    throw NumericError(std::string("ascent: ") + e.what() + " (loss " + std::to_string(loss.item()) + ")");
  }
  if (grad_out) *grad_out = grad;
  if (beta == 0.0) return x.detach();
  const auto xv = x.values();
  const auto gv = grad.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + beta * gv[i];
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("ascent: step produced a non-finite input (beta " + std::to_string(beta) + ")");
  }
  return Tensor(x.shape(), std::move(out));
}

Tensor ascend(const Tensor& x, const EpisodeLabels& labels, const Model& model, double beta, std::size_t t_max,
              InputRole role, const AscentObserver& observer) {
  Tensor cur = x.detach();
  for (std::size_t i = 1; i <= t_max; ++i) {
    Tensor grad;
    Tensor next = ascend_step(cur, labels, model, beta, observer ? &grad : nullptr);
    if (observer) observer({role, i, cur, next, grad});
    cur = std::move(next);
  }
  return cur;
}

InnerResult inner_branch_randconv(const augment::AugmentedEpisode& ep, const Model& model, const TrainConfig& cfg,
                                  Rng& rng, const AscentObserver& observer) {
  InnerResult r;
  const auto a = augment::random_conv(ep.x0, rng, cfg.filter_pool);
  const auto b = augment::random_conv(ep.x_zeros, rng, cfg.filter_pool);
  const auto c = augment::random_conv(ep.x_randn, rng, cfg.filter_pool);
  r.kernel_sizes = {a.kernel_size, b.kernel_size, c.kernel_size};
  const Tensor& x0 = a.images;
  const Tensor& z0 = b.images;
  const Tensor& n0 = c.images;
  const MutualAttentionParams att = model.attention();
  Tensor z_att, n_att;
  {
    NoGradGuard no_grad;
    z_att = mutual_attention(x0, z0, att);
    n_att = mutual_attention(x0, n0, att);
  }
  r.x = ascend(x0, ep.labels, model, cfg.beta, cfg.t_max, InputRole::original, observer);
  r.x_zeros = mutual_attention(r.x, z_att, att);
  r.x_randn = mutual_attention(r.x, n_att, att);
  return r;
}

InnerResult inner_branch_ascend_all(const augment::AugmentedEpisode& ep, const Model& model, const TrainConfig& cfg,
                                    const AscentObserver& observer) {
  InnerResult r;
  r.x = ascend(ep.x0, ep.labels, model, cfg.beta, cfg.t_max, InputRole::original, observer);
  const Tensor z = ascend(ep.x_zeros, ep.labels, model, cfg.beta, cfg.t_max, InputRole::zeros, observer);
  const Tensor n = ascend(ep.x_randn, ep.labels, model, cfg.beta, cfg.t_max, InputRole::randn, observer);
  const MutualAttentionParams att = model.attention();
  r.x_zeros = mutual_attention(r.x, z, att);
  r.x_randn = mutual_attention(r.x, n, att);
  return r;
}

namespace {

std::vector<Tensor> param_list(const ParamSet& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& e : params) out.push_back(e.second);
  return out;
}

}  // namespace

LossValues outer_update(const InnerResult& triple, const EpisodeLabels& labels, Model& model, AdamState& adam,
                        const TrainConfig& cfg) {
  const LossTerms terms = total_loss(model, triple.x.detach(), triple.x_zeros, triple.x_randn, labels);
  LossValues lv{terms.ce_original.item(), terms.ce_zeros.item(), terms.ce_randn.item(),
                terms.kl_zeros.item(),    terms.kl_randn.item(), terms.total.item()};
  const auto params = param_list(model.params());
  const auto grads = gradient(terms.total, params);
  adam_step(model.params(), grads, cfg.alpha, adam);
  return lv;
}

double baseline_update(const Tensor& x, const EpisodeLabels& labels, Model& model, AdamState& adam,
                       const TrainConfig& cfg) {
  const Tensor loss = ce_loss(model.logits(x.detach(), labels), labels.query);
  const auto params = param_list(model.params());
  const auto grads = gradient(loss, params);
  adam_step(model.params(), grads, cfg.alpha, adam);
  return loss.item();
}

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::none: return "none";
    case Branch::randconv: return "randconv";
    case Branch::ascend_all: return "ascend_all";
  }
  return "?";
}

void write_history_header(std::ostream& out) {
  out << "episode,branch,kernels,ce_original,ce_zeros,ce_randn,kl_zeros,kl_randn,total,seed,val_accuracy\n";
}

void write_history_row(std::ostream& out, const HistoryRow& row) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string kernels;
  for (std::size_t i = 0; i < row.kernel_sizes.size(); ++i) {
    if (i) kernels += '/';
    kernels += std::to_string(row.kernel_sizes[i]);
  }
  out << row.episode << ',' << branch_name(row.branch) << ',' << kernels << ',' << num(row.loss.ce_original) << ','
      << num(row.loss.ce_zeros) << ',' << num(row.loss.ce_randn) << ',' << num(row.loss.kl_zeros) << ','
      << num(row.loss.kl_randn) << ',' << num(row.loss.total) << ',' << row.seed << ','
      << (row.val_accuracy ? num(*row.val_accuracy) : std::string()) << '\n';
}

EvalReport summarize_accuracies(std::vector<double> per_episode) {
  EvalReport r;
  r.episodes = per_episode.size();
  if (r.episodes == 0) return r;
  double sum = 0.0;
  for (double a : per_episode) sum += a;
  const double n = static_cast<double>(r.episodes);
  const double mean = sum / n;
  double ss = 0.0;
  for (double a : per_episode) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / n);
  r.accuracy = 100.0 * mean;
  r.ci95 = 100.0 * 1.96 * sd / std::sqrt(n);
  r.per_episode = std::move(per_episode);
  return r;
}

namespace {

double episode_accuracy(const Model& model, const Episode& ep, const Tensor& images) {
  const Tensor logits = model.logits(images, ep.labels);
  const std::size_t q = logits.dim(0);
  const std::size_t n = logits.dim(1);
  const auto v = logits.values();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < q; ++i) {
    const auto row = v.subspan(i * n, n);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == ep.labels.query[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(q);
}

}  // namespace

EvalReport evaluate(const Model& model, const ImagePool& pool, const EvalConfig& cfg, const ImageTransform& transform) {
  const Rng root(cfg.seed);
  const Rng episode_root = root.fork("episode");
  const Rng transform_root = root.fork("transform");
  std::vector<double> acc(cfg.episodes, 0.0);
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, cfg.episodes));

  auto run = [&](std::size_t worker) {
    NoGradGuard no_grad;
    for (std::size_t e = worker; e < cfg.episodes; e += workers) {
      Rng erng = episode_root.fork(e);
      const Episode ep = sample_episode(pool, cfg.way, cfg.shot, cfg.query, erng);
      Tensor images = ep.images();
      if (transform) {
        Rng trng = transform_root.fork(e);
        images = transform(images, trng);
      }
      acc[e] = episode_accuracy(model, ep, images);
    }
  };

  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          run(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }
  return summarize_accuracies(std::move(acc));
}

double pretrain(Model& model, const ImagePool& pool, const TrainConfig& cfg) {
  if (cfg.pretrain_steps == 0) return 0.0;
  if (cfg.pretrain_batch == 0) throw ConfigError("pretrain_batch must be positive");
  const std::size_t d = cfg.model.encoder.embedding_dim();
  const std::size_t classes = pool.num_classes();
  const Rng root = Rng(cfg.seed).fork("pretrain");
  Rng init = root.fork("classifier");
  ParamSet head;
  {
    const double stddev = std::sqrt(2.0 / static_cast<double>(d + classes));
    std::vector<double> w(d * classes);
    for (double& v : w) v = stddev * init.normal();
    head.add("weight", Tensor({d, classes}, std::move(w)));
    head.add("bias", Tensor::zeros({classes}));
  }
  AdamState enc_state, head_state;
  const auto labels = pool.labels();
  double tail = 0.0;
  std::size_t tail_n = 0;
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    Rng r = root.fork(step);
    std::vector<std::size_t> idx(cfg.pretrain_batch);
    std::vector<int> y(cfg.pretrain_batch);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = r.index(pool.size());
      y[i] = labels[idx[i]];
    }
    const Tensor logits = ops::dense(model.encode(pool.gather(idx)), head.at("weight"), head.at("bias"));
    const Tensor loss = ce_loss(logits, y);
    auto params = param_list(model.params());
    params.push_back(head[0].second);
    params.push_back(head[1].second);
    auto grads = gradient(loss, params);
    std::vector<Tensor> head_grads(grads.end() - 2, grads.end());
    grads.resize(grads.size() - 2);
    adam_step(model.params(), grads, cfg.alpha, enc_state);
    adam_step(head, head_grads, cfg.alpha, head_state);
    if (step + 100 >= cfg.pretrain_steps) {
      tail += loss.item();
      ++tail_n;
    }
  }
  return tail / static_cast<double>(tail_n);
}

TrainResult train(const TrainConfig& cfg, const ImagePool& train_pool, const ImagePool& val_pool,
                  const HistorySink& sink) {
  cfg.validate();
  if (train_pool.image_shape() != Shape{cfg.model.encoder.channels, cfg.model.encoder.image_size,
                                        cfg.model.encoder.image_size}) {
    throw ConfigError("train: pool images " + shape_str(train_pool.image_shape()) + " do not match the encoder");
  }
  const Rng root(cfg.seed);
  Rng init_rng = root.fork("init");
  Model model(cfg.model, init_rng);
  const double pretrain_loss = pretrain(model, train_pool, cfg);
  AdamState adam;

  const Rng sample_root = root.fork("sample");
  const Rng aug_root = root.fork("aug");
  EvalConfig val_cfg;
  val_cfg.episodes = cfg.val_episodes;
  val_cfg.way = cfg.way;
  val_cfg.shot = cfg.shot;
  val_cfg.query = cfg.val_query;
  val_cfg.seed = root.fork("validation").seed();

  TrainResult result{model, {}, -1.0, 0, pretrain_loss};
  const std::size_t total = cfg.total_episodes();
  result.history.reserve(total);

  for (std::size_t e = 0; e < total; ++e) {
    Rng sample_rng = sample_root.fork(e);
    const Episode ep = sample_episode(train_pool, cfg.way, cfg.shot, cfg.query, sample_rng);
    HistoryRow row;
    row.episode = e;
    row.seed = sample_rng.seed();
    try {
      if (cfg.method == Method::baseline) {
        const double loss = baseline_update(ep.images(), ep.labels, model, adam, cfg);
        row.loss.ce_original = loss;
        row.loss.total = loss;
      } else {
        const Rng aug_rng = aug_root.fork(e);
        Rng randn_rng = aug_rng.fork("randn");
        Rng branch_rng = aug_rng.fork("branch");
        Rng conv_rng = aug_rng.fork("randconv");
        const auto aug = augment::build_augmented_episode(ep, randn_rng);
        InnerResult inner;
        if (branch_rng.bernoulli(cfg.p)) {
          row.branch = Branch::ascend_all;
          inner = inner_branch_ascend_all(aug, model, cfg);
        } else {
          row.branch = Branch::randconv;
          inner = inner_branch_randconv(aug, model, cfg, conv_rng);
        }
        row.kernel_sizes = inner.kernel_sizes;
        row.loss = outer_update(inner, aug.labels, model, adam, cfg);
      }
    } catch (const NumericError& err) {
      throw NumericError("episode " + std::to_string(e) + " (seed " + std::to_string(row.seed) + "): " + err.what());
    }

    const bool last = e + 1 == total;
    if (cfg.val_episodes > 0 && cfg.val_every > 0 && ((e + 1) % cfg.val_every == 0 || last)) {
      const double acc = evaluate(model, val_pool, val_cfg).accuracy;
      row.val_accuracy = acc;
      if (acc > result.best_val_accuracy) {
        result.best_val_accuracy = acc;
        result.best_episode = e;
        result.model = Model(cfg.model, model.params().clone());
      }
    }
    if (sink) sink(row);
    result.history.push_back(std::move(row));
  }
  if (result.best_val_accuracy < 0.0) {
    result.model = Model(cfg.model, model.params().clone());
    result.best_episode = total - 1;
  }
  return result;
}

}  // namespace fap
