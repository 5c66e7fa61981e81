#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fap/rng.hpp"
#include "fap/tensor.hpp"

namespace fap {

// Episode-local labels in [0, way).
struct EpisodeLabels {
  std::size_t way = 0;
  std::vector<int> support;
  std::vector<int> query;
};

// One N-way K-shot task. Support is class-major: K images of class 0, then
// K of class 1, and so on; the query set follows the same layout.
struct Episode {
  Tensor support_x;  // [N*K, C, H, W]
  Tensor query_x;    // [N*Q, C, H, W]
  EpisodeLabels labels;
  std::size_t shot = 0;
  std::size_t query_per_class = 0;
  std::vector<int> classes;                 // pool class id for each episode label
  std::vector<std::size_t> support_index;   // pool sample indices
  std::vector<std::size_t> query_index;

  // Support and query stacked along the batch axis.
  Tensor images() const;
};

// Labeled images held contiguously; immutable once built.
class ImagePool {
 public:
  ImagePool() = default;
  ImagePool(Shape image_shape, std::vector<double> pixels, std::vector<int> labels,
            std::vector<std::string> class_names);

  const Shape& image_shape() const { return image_shape_; }  // [C,H,W]
  std::size_t size() const { return labels_.size(); }
  std::size_t num_classes() const { return class_names_.size(); }
  std::span<const int> labels() const { return labels_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::span<const double> image(std::size_t index) const;
  // Members of one class, in pool order.
  const std::vector<std::size_t>& members(std::size_t cls) const { return members_.at(cls); }
  Tensor gather(std::span<const std::size_t> indices) const;

 private:
  Shape image_shape_;
  std::vector<double> pixels_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
  std::vector<std::vector<std::size_t>> members_;
};

// Uniform over classes without replacement, then over each class's samples
// without replacement. Throws Error naming a class that has too few samples.
Episode sample_episode(const ImagePool& pool, std::size_t way, std::size_t shot, std::size_t query_per_class,
                       Rng& rng);

// Procedural domains. Class identity lives entirely in the low-frequency
// (block-constant) part of the image; the domain texture lives entirely in the
// three Haar detail bands.
struct ClassLayout {
  std::size_t num_classes = 10;
  std::uint64_t seed = 1;
  std::size_t blobs_per_class = 3;
  double blob_sigma = 0.12;       // fraction of the image side
  double contrast = 0.25;         // peak blob amplitude
  double position_jitter = 0.03;  // per-sample, fraction of the side
  double amplitude_jitter = 0.2;  // per-sample relative
  double background = 0.5;
  double background_jitter = 0.05;
};

struct DomainSpec {
  std::string name = "A";
  std::uint64_t seed = 11;
  // Cycles of the texture envelope across the image.
  double texture_frequency = 2.0;
  // One texture shared by every image of the domain.
  double signature_amplitude = 0.05;
  // A texture tied to each class: a domain-specific shortcut cue. The bank of
  // per-class textures comes from class_texture_seed; with shuffling on, every
  // image carries the texture of a uniformly drawn class instead of its own.
  double class_amplitude = 0.0;
  std::uint64_t class_texture_seed = 11;
  bool shuffle_class_textures = false;
  // A fresh texture for every image.
  double random_amplitude = 0.05;
};

struct SyntheticConfig {
  std::size_t image_size = 32;
  std::size_t channels = 1;
  ClassLayout classes;
};

// Throws ConfigError on odd sizes, unsupported channel counts or negative
// amplitudes.
void validate_synthetic(const SyntheticConfig& config, const DomainSpec& domain);

ImagePool generate_synthetic_domain(const SyntheticConfig& config, const DomainSpec& domain,
                                    std::size_t per_class, Rng& rng);

// Per-pixel affine map x -> (x - mean) / std applied to every image a model
// sees; fitted on the training pool and stored with the model.
struct InputNorm {
  double mean = 0.0;
  double std = 1.0;

  void validate() const;
};

// Mean and population standard deviation over every pixel of the pool.
InputNorm fit_input_norm(const ImagePool& pool);
ImagePool standardize(const ImagePool& pool, const InputNorm& norm);

// Class-subdirectory layout: root/<class>/<image>.png. Images are decoded,
// resized (nearest neighbour) to image_size x image_size, scaled to [0,1] and
// stored channel-first with `channels` planes (1 = luma, 3 = RGB).
ImagePool load_image_dir(const std::filesystem::path& root, std::size_t image_size, std::size_t channels);

}  // namespace fap
