#include "fap/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fap/error.hpp"
#include "fap/image_io.hpp"
#include "fap/ops.hpp"
#include "fap/wavelet.hpp"

namespace fap {

Tensor Episode::images() const {
  const Tensor parts[] = {support_x, query_x};
  NoGradGuard no_grad;
  return ops::concat(parts, 0).detach();
}

ImagePool::ImagePool(Shape image_shape, std::vector<double> pixels, std::vector<int> labels,
                     std::vector<std::string> class_names)
    : image_shape_(std::move(image_shape)),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      class_names_(std::move(class_names)),
      members_(class_names_.size()) {
  if (image_shape_.size() != 3) throw ShapeError("image pool: image shape must be [C,H,W]");
  if (pixels_.size() != labels_.size() * shape_numel(image_shape_)) {
    throw ShapeError("image pool: pixel count does not match " + std::to_string(labels_.size()) + " images of " +
                     shape_str(image_shape_));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const int label = labels_[i];
    if (label < 0 || static_cast<std::size_t>(label) >= class_names_.size()) {
      throw Error("image pool: label " + std::to_string(label) + " has no class name");
    }
    members_[static_cast<std::size_t>(label)].push_back(i);
  }
}

std::span<const double> ImagePool::image(std::size_t index) const {
  const std::size_t n = shape_numel(image_shape_);
  return std::span<const double>(pixels_).subspan(index * n, n);
}

Tensor ImagePool::gather(std::span<const std::size_t> indices) const {
  const std::size_t n = shape_numel(image_shape_);
  std::vector<double> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = image(indices[i]);
    std::copy(src.begin(), src.end(), out.begin() + i * n);
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), image_shape_.begin(), image_shape_.end());
  return Tensor(std::move(shape), std::move(out));
}

Episode sample_episode(const ImagePool& pool, std::size_t way, std::size_t shot, std::size_t query_per_class,
                       Rng& rng) {
  if (way == 0 || shot == 0) throw ConfigError("sample_episode: way and shot must be positive");
  if (pool.num_classes() < way) {
    throw Error("sample_episode: pool has " + std::to_string(pool.num_classes()) + " classes, need " +
                std::to_string(way));
  }
  const std::size_t needed = shot + query_per_class;
  for (std::size_t c = 0; c < pool.num_classes(); ++c) {
    if (pool.members(c).size() < needed) {
      throw Error("sample_episode: class '" + pool.class_names()[c] + "' has " +
                  std::to_string(pool.members(c).size()) + " samples, need " + std::to_string(needed));
    }
  }

  Episode ep;
  ep.shot = shot;
  ep.query_per_class = query_per_class;
  ep.labels.way = way;
  const auto classes = rng.sample_without_replacement(pool.num_classes(), way);
  for (std::size_t label = 0; label < way; ++label) {
    const auto& members = pool.members(classes[label]);
    const auto picks = rng.sample_without_replacement(members.size(), needed);
    ep.classes.push_back(static_cast<int>(classes[label]));
    for (std::size_t i = 0; i < needed; ++i) {
      if (i < shot) {
        ep.support_index.push_back(members[picks[i]]);
        ep.labels.support.push_back(static_cast<int>(label));
      } else {
        ep.query_index.push_back(members[picks[i]]);
        ep.labels.query.push_back(static_cast<int>(label));
      }
    }
  }
  ep.support_x = pool.gather(ep.support_index);
  ep.query_x = pool.gather(ep.query_index);
  return ep;
}

namespace {

struct Blob {
  double cy, cx, amplitude;
};

// Band weights, envelope orientation and per-band phases of one detail texture.
struct TextureParams {
  double weight[3];
  double theta;
  double phase[3];
};

TextureParams draw_texture(Rng& rng) {
  TextureParams t{};
  double norm = 0.0;
  for (double& w : t.weight) {
    w = std::abs(rng.normal()) + 0.1;
    norm += w * w;
  }
  for (double& w : t.weight) w /= std::sqrt(norm);
  t.theta = rng.uniform() * std::numbers::pi;
  for (double& p : t.phase) p = rng.uniform() * 2.0 * std::numbers::pi;
  return t;
}

// Adds amplitude * texture to three detail-band planes of side m.
void add_texture(const TextureParams& t, double amplitude, double frequency, std::size_t m, double* lh, double* hl,
                 double* hh) {
  if (amplitude == 0.0) return;
  double* bands[3] = {lh, hl, hh};
  const double ct = std::cos(t.theta), st = std::sin(t.theta);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
      const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(m);
      const double arg = 2.0 * std::numbers::pi * frequency * (y * ct + x * st);
      for (int b = 0; b < 3; ++b) bands[b][i * m + j] += amplitude * t.weight[b] * std::cos(arg + t.phase[b]);
    }
}

}  // namespace

void validate_synthetic(const SyntheticConfig& config, const DomainSpec& domain) {
  if (config.image_size < 2 || config.image_size % 2 != 0) {
    throw ConfigError("synthetic: image_size must be even and >= 2, got " + std::to_string(config.image_size));
  }
  if (config.channels != 1 && config.channels != 3) throw ConfigError("synthetic: channels must be 1 or 3");
  const auto& c = config.classes;
  if (c.num_classes == 0 || c.blobs_per_class == 0) throw ConfigError("synthetic: need classes and blobs");
  if (!(c.blob_sigma > 0.0)) throw ConfigError("synthetic: blob_sigma must be positive");
  for (double v : {c.contrast, c.position_jitter, c.amplitude_jitter, c.background_jitter, domain.signature_amplitude,
                   domain.class_amplitude, domain.random_amplitude, domain.texture_frequency}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("synthetic: amplitudes, jitters and frequency must be >= 0");
  }
}

ImagePool generate_synthetic_domain(const SyntheticConfig& config, const DomainSpec& domain, std::size_t per_class,
                                    Rng& rng) {
  validate_synthetic(config, domain);
  const auto& layout = config.classes;
  const std::size_t side = config.image_size;
  const std::size_t m = side / 2;
  const std::size_t plane = side * side;

  const Rng class_root(layout.seed);
  std::vector<std::vector<Blob>> class_blobs(layout.num_classes);
  for (std::size_t c = 0; c < layout.num_classes; ++c) {
    Rng r = class_root.fork(c);
    for (std::size_t b = 0; b < layout.blobs_per_class; ++b) {
      const double cy = 0.2 + 0.6 * r.uniform();
      const double cx = 0.2 + 0.6 * r.uniform();
      const double sign = r.bernoulli(0.5) ? 1.0 : -1.0;
      class_blobs[c].push_back({cy, cx, sign * (0.6 + 0.4 * r.uniform())});
    }
  }
  const Rng domain_root(domain.seed);
  Rng signature_rng = domain_root.fork("signature");
  const TextureParams signature = draw_texture(signature_rng);
  const Rng bank_root(domain.class_texture_seed);
  std::vector<TextureParams> class_textures;
  for (std::size_t c = 0; c < layout.num_classes; ++c) {
    Rng r = bank_root.fork("class").fork(c);
    class_textures.push_back(draw_texture(r));
  }

  const std::size_t total = layout.num_classes * per_class;
  std::vector<double> pixels(total * config.channels * plane);
  std::vector<int> labels(total);
  std::vector<double> low(m * m), lh(m * m), hl(m * m), hh(m * m), full(plane);
  const double inv_two_var = 1.0 / (2.0 * layout.blob_sigma * layout.blob_sigma);

  for (std::size_t c = 0; c < layout.num_classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t s = c * per_class + k;
      labels[s] = static_cast<int>(c);
      // The low-frequency draws depend only on the pool stream, never on the
      // domain, so two domains built from the same stream share class content.
      Rng lf = rng.fork(2 * s);
      Rng tex(mix_seed(rng.fork(2 * s + 1).seed(), domain.seed));

      const double background = layout.background + layout.background_jitter * lf.normal();
      std::vector<Blob> blobs = class_blobs[c];
      for (auto& b : blobs) {
        b.cy += layout.position_jitter * lf.normal();
        b.cx += layout.position_jitter * lf.normal();
        b.amplitude *= 1.0 + layout.amplitude_jitter * lf.normal();
      }
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
          const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(m);
          double v = background;
          for (const auto& b : blobs) {
            const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
            v += layout.contrast * b.amplitude * std::exp(-d2 * inv_two_var);
          }
          // Block-constant at full resolution: LL coefficient is twice the block value.
          low[i * m + j] = 2.0 * v;
        }

      std::fill(lh.begin(), lh.end(), 0.0);
      std::fill(hl.begin(), hl.end(), 0.0);
      std::fill(hh.begin(), hh.end(), 0.0);
      add_texture(signature, domain.signature_amplitude, domain.texture_frequency, m, lh.data(), hl.data(), hh.data());
      const std::size_t bank = domain.shuffle_class_textures ? tex.index(layout.num_classes) : c;
      add_texture(class_textures[bank], domain.class_amplitude, domain.texture_frequency, m, lh.data(), hl.data(),
                  hh.data());
      const TextureParams own = draw_texture(tex);
      add_texture(own, domain.random_amplitude, domain.texture_frequency, m, lh.data(), hl.data(), hh.data());

      wavelet::SubbandSet bands{Tensor({m, m}, low), Tensor({m, m}, lh), Tensor({m, m}, hl), Tensor({m, m}, hh),
                                side, side};
      const Tensor img = wavelet::idwt2(bands);
      auto iv = img.values();
      for (std::size_t ch = 0; ch < config.channels; ++ch) {
        double* dst = pixels.data() + (s * config.channels + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = std::clamp(iv[p], 0.0, 1.0);
      }
    }
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < layout.num_classes; ++c) names.push_back("class_" + std::to_string(c));
  return ImagePool({config.channels, side, side}, std::move(pixels), std::move(labels), std::move(names));
}

ImagePool load_image_dir(const std::filesystem::path& root, std::size_t image_size, std::size_t channels) {
  namespace fs = std::filesystem;
  if (image_size < 2 || image_size % 2 != 0) {
    throw ConfigError("load_image_dir: image_size must be even and >= 2, got " + std::to_string(image_size));
  }
  if (channels != 1 && channels != 3) throw ConfigError("load_image_dir: channels must be 1 or 3");
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("load_image_dir: not a directory: " + root.string());

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  std::vector<double> pixels;
  std::vector<int> labels;
  std::vector<std::string> names;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
    }
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    const int label = static_cast<int>(names.size());
    names.push_back(dir.filename().string());
    for (const auto& file : files) {
      const auto image = image_io::resize_nearest(image_io::read_png(file), image_size, image_size);
      const auto planes = image_io::to_planes(image, channels);
      pixels.insert(pixels.end(), planes.begin(), planes.end());
      labels.push_back(label);
    }
  }
  if (names.empty()) throw IoError("load_image_dir: no class directories with PNG files under " + root.string());
  return ImagePool({channels, image_size, image_size}, std::move(pixels), std::move(labels), std::move(names));
}

void InputNorm::validate() const {
  if (!std::isfinite(mean)) throw ConfigError("input norm: mean must be finite");
  if (!(std > 0.0) || !std::isfinite(std)) throw ConfigError("input norm: std must be finite and > 0");
}

InputNorm fit_input_norm(const ImagePool& pool) {
  if (pool.size() == 0) throw Error("fit_input_norm: empty pool");
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (double x : pool.image(i)) sum += x, count += 1.0;
  const double mean = sum / count;
  double var = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (double x : pool.image(i)) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / count);
  if (!(sd > 0.0)) throw NumericError("fit_input_norm: pool has zero variance");
  return {mean, sd};
}

ImagePool standardize(const ImagePool& pool, const InputNorm& norm) {
  norm.validate();
  std::vector<double> pixels;
  pixels.reserve(pool.size() * shape_numel(pool.image_shape()));
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (double x : pool.image(i)) pixels.push_back((x - norm.mean) / norm.std);
  return ImagePool(pool.image_shape(), std::move(pixels), std::vector<int>(pool.labels().begin(), pool.labels().end()),
                   pool.class_names());
}

}  // namespace fap
