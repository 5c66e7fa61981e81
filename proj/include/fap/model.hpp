#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fap/attention.hpp"
#include "fap/episodes.hpp"
#include "fap/rng.hpp"
#include "fap/tensor.hpp"

namespace fap {

// Named trainable tensors in insertion order. Every member tracks gradients.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  // Swaps in new values for an existing entry; the shape must not change.
  void replace(std::size_t index, Tensor value);

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  // Independent copy: new leaves with the same values and no gradients.
  ParamSet clone() const;

 private:
  std::vector<Entry> entries_;
};

enum class HeadKind { prototypical, relation };

std::string head_name(HeadKind kind);
HeadKind parse_head(std::string_view name);

// conv3x3(pad 1) + bias -> relu -> maxpool 2x2 per block, then flatten.
struct EncoderConfig {
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t channels = 1;
  std::size_t image_size = 32;

  void validate() const;
  std::size_t final_size() const;
  std::size_t embedding_dim() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  HeadKind head = HeadKind::prototypical;
  std::size_t relation_hidden = 16;
  // Standardization the model's inputs went through; callers apply it to
  // their pools before evaluation.
  InputNorm input_norm;
};

struct RelationParams {
  Tensor w1, b1, w2, b2;
};

class Model {
 public:
  Model(ModelConfig config, Rng& rng);
  // Restores from stored parameters; names and shapes must match the config.
  Model(ModelConfig config, ParamSet params);

  const ModelConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

  Tensor encode(const Tensor& images) const;
  // images hold the support set followed by the query set; returns [Q,N] logits.
  Tensor logits(const Tensor& images, const EpisodeLabels& labels) const;
  MutualAttentionParams attention() const;

  // Parameter names and shapes a config implies, in ParamSet order.
  static std::vector<std::pair<std::string, Shape>> layout(const ModelConfig& config);

 private:
  ModelConfig config_;
  ParamSet params_;
};

// Negative squared Euclidean distance to per-class mean support embeddings.
Tensor proto_head(const Tensor& support_emb, std::span<const int> support_labels, std::size_t way,
                  const Tensor& query_emb);
// Two dense layers scoring every [query || prototype] pair.
Tensor relation_head(const Tensor& support_emb, std::span<const int> support_labels, std::size_t way,
                     const Tensor& query_emb, const RelationParams& params);

// Mean over rows of -log softmax(logits)[label].
Tensor ce_loss(const Tensor& logits, std::span<const int> labels);

inline constexpr double kProbabilityFloor = 1e-12;

// Mean over rows of sum_c p_aug (log p_aug - log p_orig), probabilities floored
// at kProbabilityFloor. Both arguments keep their gradients.
Tensor kl_loss(const Tensor& p_aug, const Tensor& p_orig);

struct LossTerms {
  Tensor ce_original, ce_zeros, ce_randn, kl_zeros, kl_randn, total;
};

// CE on each of the three inputs plus KL(P(variant) || P(original)) for both
// variants, summed with unit weights.
LossTerms total_loss(const Model& model, const Tensor& x, const Tensor& x_zeros, const Tensor& x_randn,
                     const EpisodeLabels& labels);

}  // namespace fap
