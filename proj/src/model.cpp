#include "fap/model.hpp"

#include <cmath>
#include <string>

#include "fap/error.hpp"
#include "fap/ops.hpp"

namespace fap {

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw Error("param set: duplicate name '" + name + "'");
  if (!value.is_leaf()) value = value.detach();
  value.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(value));
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw Error("param set: no parameter named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

void ParamSet::replace(std::size_t index, Tensor value) {
  auto& slot = entries_.at(index).second;
  if (value.shape() != slot.shape()) {
    throw ShapeError("param set: replacing '" + entries_[index].first + "' " + shape_str(slot.shape()) + " with " +
                     shape_str(value.shape()));
  }
  if (!value.is_leaf()) value = value.detach();
  value.set_requires_grad(true);
  slot = std::move(value);
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) {
    auto v = t.values();
    out.add(name, Tensor(t.shape(), std::vector<double>(v.begin(), v.end())));
  }
  return out;
}

std::string head_name(HeadKind kind) { return kind == HeadKind::prototypical ? "proto" : "relation"; }

HeadKind parse_head(std::string_view name) {
  if (name == "proto") return HeadKind::prototypical;
  if (name == "relation") return HeadKind::relation;
  throw ConfigError("unknown head '" + std::string(name) + "' (expected proto or relation)");
}

void EncoderConfig::validate() const {
  if (widths.empty()) throw ConfigError("encoder: at least one block is required");
  if (channels == 0) throw ConfigError("encoder: channels must be positive");
  if (image_size < 2 || image_size % 2 != 0) {
    throw ConfigError("encoder: image_size must be even and >= 2, got " + std::to_string(image_size));
  }
  for (auto w : widths)
    if (w == 0) throw ConfigError("encoder: block widths must be positive");
  std::size_t s = image_size;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (s < 2) {
      throw ConfigError("encoder: " + std::to_string(widths.size()) + " blocks shrink a " +
                        std::to_string(image_size) + " px input below 1 px");
    }
    s /= 2;
  }
}

std::size_t EncoderConfig::final_size() const {
  std::size_t s = image_size;
  for (std::size_t i = 0; i < widths.size(); ++i) s /= 2;
  return s;
}

std::size_t EncoderConfig::embedding_dim() const { return widths.back() * final_size() * final_size(); }

std::vector<std::pair<std::string, Shape>> Model::layout(const ModelConfig& config) {
  config.encoder.validate();
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t in = config.encoder.channels;
  for (std::size_t i = 0; i < config.encoder.widths.size(); ++i) {
    const std::size_t f = config.encoder.widths[i];
    out.emplace_back("encoder." + std::to_string(i) + ".weight", Shape{f, in, 3, 3});
    out.emplace_back("encoder." + std::to_string(i) + ".bias", Shape{f});
    in = f;
  }
  if (config.head == HeadKind::relation) {
    if (config.relation_hidden == 0) throw ConfigError("relation head: hidden width must be positive");
    const std::size_t d = config.encoder.embedding_dim();
    out.emplace_back("head.fc1.weight", Shape{2 * d, config.relation_hidden});
    out.emplace_back("head.fc1.bias", Shape{config.relation_hidden});
    out.emplace_back("head.fc2.weight", Shape{config.relation_hidden, 1});
    out.emplace_back("head.fc2.bias", Shape{1});
  }
  const std::size_t c = config.encoder.channels;
  out.emplace_back("attention.w_q", Shape{c, c});
  out.emplace_back("attention.w_k", Shape{c, c});
  out.emplace_back("attention.w_v", Shape{c, c});
  return out;
}

namespace {

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor(shape, std::move(v));
}

}  // namespace

Model::Model(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  Rng enc_rng = rng.fork("encoder");
  Rng head_rng = rng.fork("head");
  Rng attn_rng = rng.fork("attention");
  for (const auto& [name, shape] : layout(config_)) {
    if (name.starts_with("encoder.")) {
      // He-normal weights, zero bias.
      if (shape.size() == 4) {
        params_.add(name, normal_tensor(shape, std::sqrt(2.0 / static_cast<double>(shape[1] * 9)), enc_rng));
      } else {
        params_.add(name, Tensor::zeros(shape));
      }
    } else if (name.starts_with("head.")) {
      if (shape.size() == 2) {
        params_.add(name, normal_tensor(shape, std::sqrt(2.0 / static_cast<double>(shape[0] + shape[1])), head_rng));
      } else {
        params_.add(name, Tensor::zeros(shape));
      }
    }
  }
  const auto attn = init_mutual_attention(config_.encoder.channels, attn_rng);
  params_.add("attention.w_q", attn.w_q);
  params_.add("attention.w_k", attn.w_k);
  params_.add("attention.w_v", attn.w_v);
}

Model::Model(ModelConfig config, ParamSet params) : config_(std::move(config)), params_(std::move(params)) {
  const auto expected = layout(config_);
  if (expected.size() != params_.size()) {
    throw ConfigError("model: expected " + std::to_string(expected.size()) + " parameters, got " +
                      std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (params_[i].first != expected[i].first || params_[i].second.shape() != expected[i].second) {
      throw ConfigError("model: parameter " + std::to_string(i) + " is '" + params_[i].first + "' " +
                        shape_str(params_[i].second.shape()) + ", expected '" + expected[i].first + "' " +
                        shape_str(expected[i].second));
    }
  }
}

Tensor Model::encode(const Tensor& images) const {
  const auto& enc = config_.encoder;
  if (images.rank() != 4 || images.dim(1) != enc.channels || images.dim(2) != enc.image_size ||
      images.dim(3) != enc.image_size) {
    throw ShapeError("encode: input " + shape_str(images.shape()) + " does not match encoder [B," +
                     std::to_string(enc.channels) + "," + std::to_string(enc.image_size) + "," +
                     std::to_string(enc.image_size) + "]");
  }
  Tensor x = images;
  for (std::size_t i = 0; i < enc.widths.size(); ++i) {
    const auto prefix = "encoder." + std::to_string(i);
    x = ops::conv2d(x, params_.at(prefix + ".weight"), 1, 1);
    x = ops::add_channel_bias(x, params_.at(prefix + ".bias"));
    x = ops::max_pool2d(ops::relu(x));
  }
  return ops::flatten(x);
}

Tensor Model::logits(const Tensor& images, const EpisodeLabels& labels) const {
  const std::size_t n_support = labels.support.size();
  const std::size_t n_query = labels.query.size();
  if (images.rank() != 4 || images.dim(0) != n_support + n_query) {
    throw ShapeError("logits: " + shape_str(images.shape()) + " does not hold " + std::to_string(n_support) +
                     " support + " + std::to_string(n_query) + " query images");
  }
  const Tensor emb = encode(images);
  const Tensor support = ops::slice(emb, 0, n_support);
  const Tensor query = ops::slice(emb, n_support, n_support + n_query);
  if (config_.head == HeadKind::prototypical) return proto_head(support, labels.support, labels.way, query);
  const RelationParams rp{params_.at("head.fc1.weight"), params_.at("head.fc1.bias"), params_.at("head.fc2.weight"),
                          params_.at("head.fc2.bias")};
  return relation_head(support, labels.support, labels.way, query, rp);
}

MutualAttentionParams Model::attention() const {
  return {params_.at("attention.w_q"), params_.at("attention.w_k"), params_.at("attention.w_v")};
}

namespace {

// [way, n_support] averaging matrix; each row holds 1/count on its class's samples.
Tensor class_mean_matrix(std::span<const int> support_labels, std::size_t way) {
  std::vector<std::size_t> counts(way, 0);
  for (int y : support_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= way) {
      throw ShapeError("head: support label " + std::to_string(y) + " outside [0," + std::to_string(way) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < way; ++c)
    if (counts[c] == 0) throw Error("head: class " + std::to_string(c) + " has no support samples");
  const std::size_t n = support_labels.size();
  std::vector<double> m(way * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(support_labels[i]);
    m[c * n + i] = 1.0 / static_cast<double>(counts[c]);
  }
  return Tensor({way, n}, std::move(m));
}

Tensor prototypes(const Tensor& support_emb, std::span<const int> support_labels, std::size_t way) {
  if (support_emb.rank() != 2 || support_emb.dim(0) != support_labels.size()) {
    throw ShapeError("head: support embeddings " + shape_str(support_emb.shape()) + " vs " +
                     std::to_string(support_labels.size()) + " labels");
  }
  return ops::matmul(class_mean_matrix(support_labels, way), support_emb);
}

}  // namespace

Tensor proto_head(const Tensor& support_emb, std::span<const int> support_labels, std::size_t way,
                  const Tensor& query_emb) {
  const Tensor protos = prototypes(support_emb, support_labels, way);
  return ops::scale(ops::pairwise_sq_dist(query_emb, protos), -1.0);
}

Tensor relation_head(const Tensor& support_emb, std::span<const int> support_labels, std::size_t way,
                     const Tensor& query_emb, const RelationParams& params) {
  const Tensor protos = prototypes(support_emb, support_labels, way);
  if (query_emb.rank() != 2 || query_emb.dim(1) != protos.dim(1)) {
    throw ShapeError("relation_head: query embeddings " + shape_str(query_emb.shape()) + " vs prototypes " +
                     shape_str(protos.shape()));
  }
  const std::size_t q = query_emb.dim(0);
  std::vector<std::size_t> qi, pi;
  qi.reserve(q * way);
  pi.reserve(q * way);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t c = 0; c < way; ++c) {
      qi.push_back(i);
      pi.push_back(c);
    }
  const Tensor pairs[] = {ops::index_rows(query_emb, qi), ops::index_rows(protos, pi)};
  Tensor h = ops::relu(ops::dense(ops::concat(pairs, 1), params.w1, params.b1));
  Tensor score = ops::dense(h, params.w2, params.b2);
  return ops::reshape(score, {q, way});
}

Tensor ce_loss(const Tensor& logits, std::span<const int> labels) {
  return ops::nll_loss(ops::log_softmax(logits), labels);
}

Tensor kl_loss(const Tensor& p_aug, const Tensor& p_orig) {
  if (p_aug.rank() != 2 || p_aug.shape() != p_orig.shape() || p_aug.dim(0) == 0) {
    throw ShapeError("kl_loss: distributions " + shape_str(p_aug.shape()) + " and " + shape_str(p_orig.shape()) +
                     " must be equal non-empty [Q,N]");
  }
  const std::size_t rows = p_aug.dim(0), n = p_aug.dim(1);
  for (const Tensor* p : {&p_aug, &p_orig}) {
    auto v = p->values();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        if (v[r * n + c] < 0.0) throw NumericError("kl_loss: negative probability");
        total += v[r * n + c];
      }
      if (std::abs(total - 1.0) > 1e-6) {
        throw NumericError("kl_loss: row " + std::to_string(r) + " sums to " + std::to_string(total));
      }
    }
  }
  const Tensor log_aug = ops::log(ops::clamp_min(p_aug, kProbabilityFloor));
  const Tensor log_orig = ops::log(ops::clamp_min(p_orig, kProbabilityFloor));
  return ops::scale(ops::sum(ops::mul(p_aug, ops::sub(log_aug, log_orig))), 1.0 / static_cast<double>(rows));
}

LossTerms total_loss(const Model& model, const Tensor& x, const Tensor& x_zeros, const Tensor& x_randn,
                     const EpisodeLabels& labels) {
  const Tensor logits0 = model.logits(x, labels);
  const Tensor logits_z = model.logits(x_zeros, labels);
  const Tensor logits_r = model.logits(x_randn, labels);
  LossTerms t;
  t.ce_original = ce_loss(logits0, labels.query);
  t.ce_zeros = ce_loss(logits_z, labels.query);
  t.ce_randn = ce_loss(logits_r, labels.query);
  const Tensor p0 = ops::softmax(logits0);
  t.kl_zeros = kl_loss(ops::softmax(logits_z), p0);
  t.kl_randn = kl_loss(ops::softmax(logits_r), p0);
  t.total = ops::add(ops::add(ops::add(ops::add(t.ce_original, t.ce_zeros), t.ce_randn), t.kl_zeros), t.kl_randn);
  return t;
}

}  // namespace fap
