#include "fap/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "fap/error.hpp"

namespace fap {

using nlohmann::json;

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "config reader assumes a 64-bit size_t");

ClassLayout default_class_layout() {
  ClassLayout c;
  c.position_jitter = 0.05;
  return c;
}

DomainSpec default_train_domain() {
  DomainSpec d;
  d.name = "A";
  d.seed = 11;
  d.class_amplitude = 0.05;
  d.class_texture_seed = 11;
  return d;
}

DomainSpec default_test_domain() {
  DomainSpec d;
  d.name = "B";
  d.seed = 23;
  d.class_amplitude = 0.25;
  d.class_texture_seed = 11;
  d.shuffle_class_textures = true;
  return d;
}

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be rejected.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  bool has(const char* key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }

  void get(const char* key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw type_error(key, "a number");
    out = v.get<double>();
  }

  void get(const char* key, std::uint64_t& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      out = static_cast<std::uint64_t>(v.get<std::int64_t>());
    } else {
      throw type_error(key, "a non-negative integer");
    }
  }

  void get(const char* key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw type_error(key, "true or false");
    out = v.get<bool>();
  }

  void get(const char* key, std::string& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw type_error(key, "a string");
    out = v.get<std::string>();
  }

  void get(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  void get(const char* key, std::vector<std::size_t>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw type_error(key, "an array of non-negative integers");
    std::vector<std::size_t> r;
    for (const json& e : v) {
      if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0)) {
        throw type_error(key, "an array of non-negative integers");
      }
      r.push_back(e.get<std::size_t>());
    }
    out = std::move(r);
  }

  void get(const char* key, std::vector<std::string>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw type_error(key, "an array of strings");
    std::vector<std::string> r;
    for (const json& e : v) {
      if (!e.is_string()) throw type_error(key, "an array of strings");
      r.push_back(e.get<std::string>());
    }
    out = std::move(r);
  }

  // Child object; absent children read as empty objects.
  Section child(const char* key) {
    static const json empty = json::object();
    return has(key) ? Section(j_.at(key), join(key)) : Section(empty, join(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + join(key) + "'");
    }
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }
  ConfigError type_error(const char* key, const char* expected) const {
    return ConfigError("config key '" + join(key) + "' must be " + expected);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_classes(Section s, ClassLayout& c) {
  s.get("num_classes", c.num_classes);
  s.get("seed", c.seed);
  s.get("blobs_per_class", c.blobs_per_class);
  s.get("blob_sigma", c.blob_sigma);
  s.get("contrast", c.contrast);
  s.get("position_jitter", c.position_jitter);
  s.get("amplitude_jitter", c.amplitude_jitter);
  s.get("background", c.background);
  s.get("background_jitter", c.background_jitter);
  s.finish();
}

json write_classes(const ClassLayout& c) {
  return {{"num_classes", c.num_classes},         {"seed", c.seed},
          {"blobs_per_class", c.blobs_per_class}, {"blob_sigma", c.blob_sigma},
          {"contrast", c.contrast},               {"position_jitter", c.position_jitter},
          {"amplitude_jitter", c.amplitude_jitter}, {"background", c.background},
          {"background_jitter", c.background_jitter}};
}

void read_domain(Section s, DomainSpec& d) {
  s.get("name", d.name);
  s.get("seed", d.seed);
  s.get("texture_frequency", d.texture_frequency);
  s.get("signature_amplitude", d.signature_amplitude);
  s.get("class_amplitude", d.class_amplitude);
  s.get("class_texture_seed", d.class_texture_seed);
  s.get("shuffle_class_textures", d.shuffle_class_textures);
  s.get("random_amplitude", d.random_amplitude);
  s.finish();
}

json write_domain(const DomainSpec& d) {
  return {{"name", d.name},
          {"seed", d.seed},
          {"texture_frequency", d.texture_frequency},
          {"signature_amplitude", d.signature_amplitude},
          {"class_amplitude", d.class_amplitude},
          {"class_texture_seed", d.class_texture_seed},
          {"shuffle_class_textures", d.shuffle_class_textures},
          {"random_amplitude", d.random_amplitude}};
}

DatasetKind parse_kind(const std::string& s) {
  if (s == "synthetic") return DatasetKind::synthetic;
  if (s == "image_dir") return DatasetKind::image_dir;
  throw ConfigError("dataset.kind must be 'synthetic' or 'image_dir', got '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  Section top(j, "");
  top.get("name", cfg.name);
  top.get("output_dir", cfg.output_dir);

  TrainConfig& t = cfg.train;
  std::string method = method_name(t.method);
  top.get("method", method);
  t.method = parse_method(method);
  top.get("alpha", t.alpha);
  top.get("beta", t.beta);
  top.get("t_max", t.t_max);
  top.get("p", t.p);
  top.get("filter_pool", t.filter_pool);
  top.get("way", t.way);
  top.get("shot", t.shot);
  top.get("query", t.query);
  top.get("episodes_per_epoch", t.episodes_per_epoch);
  top.get("epochs", t.epochs);
  top.get("seed", t.seed);
  top.get("val_every", t.val_every);
  top.get("val_episodes", t.val_episodes);
  top.get("val_query", t.val_query);
  top.get("pretrain_steps", t.pretrain_steps);
  top.get("pretrain_batch", t.pretrain_batch);

  {
    Section m = top.child("model");
    m.get("widths", t.model.encoder.widths);
    std::string head = head_name(t.model.head);
    m.get("head", head);
    t.model.head = parse_head(head);
    m.get("relation_hidden", t.model.relation_hidden);
    m.finish();
  }

  {
    DatasetConfig& d = cfg.dataset;
    Section ds = top.child("dataset");
    std::string kind = d.kind == DatasetKind::synthetic ? "synthetic" : "image_dir";
    ds.get("kind", kind);
    d.kind = parse_kind(kind);
    ds.get("image_size", d.image_size);
    ds.get("channels", d.channels);
    ds.get("standardize", d.standardize);
    {
      Section sy = ds.child("synthetic");
      sy.get("seed", d.synthetic.seed);
      sy.get("train_per_class", d.synthetic.train_per_class);
      sy.get("val_per_class", d.synthetic.val_per_class);
      sy.get("test_per_class", d.synthetic.test_per_class);
      sy.get("probe_per_class", d.synthetic.probe_per_class);
      read_classes(sy.child("classes"), d.synthetic.classes);
      read_domain(sy.child("train_domain"), d.synthetic.train_domain);
      read_domain(sy.child("test_domain"), d.synthetic.test_domain);
      sy.finish();
    }
    {
      Section im = ds.child("image_dir");
      im.get("train", d.image_dir.train);
      im.get("val", d.image_dir.val);
      im.get("test", d.image_dir.test);
      if (im.has("probe")) {
        std::filesystem::path probe;
        im.get("probe", probe);
        d.image_dir.probe = probe;
      }
      im.finish();
    }
    ds.finish();
  }

  {
    Section e = top.child("eval");
    e.get("episodes", cfg.eval.episodes);
    e.get("way", cfg.eval.way);
    e.get("shot", cfg.eval.shot);
    e.get("query", cfg.eval.query);
    e.get("seed", cfg.eval.seed);
    e.get("workers", cfg.eval.workers);
    e.finish();
  }

  {
    Section pr = top.child("probe");
    pr.get("noise_sigma", cfg.noise_sigma);
    std::vector<std::string> names;
    for (Variant v : cfg.variants) names.emplace_back(variant_name(v));
    pr.get("variants", names);
    cfg.variants.clear();
    for (const auto& n : names) cfg.variants.push_back(parse_variant(n));
    pr.finish();
  }
  top.finish();

  t.model.encoder.channels = cfg.dataset.channels;
  t.model.encoder.image_size = cfg.dataset.image_size;
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  if (name.empty() || name.find_first_of("/\\") != std::string::npos || name == "." || name == "..") {
    throw ConfigError("name must be a plain directory name");
  }
  if (!(train.p > 0.0 && train.p < 1.0)) throw ConfigError("p must lie strictly between 0 and 1");
  train.validate();
  if (dataset.image_size < 2 || dataset.image_size % 2 != 0) {
    throw ConfigError("dataset.image_size must be even and >= 2, got " + std::to_string(dataset.image_size));
  }
  if (dataset.kind == DatasetKind::synthetic) {
    const SyntheticConfig sc{dataset.image_size, dataset.channels, dataset.synthetic.classes};
    validate_synthetic(sc, dataset.synthetic.train_domain);
    validate_synthetic(sc, dataset.synthetic.test_domain);
    const auto& s = dataset.synthetic;
    if (s.classes.num_classes < std::max(train.way, eval.way)) {
      throw ConfigError("dataset.synthetic.classes.num_classes is smaller than way");
    }
    if (s.train_per_class < train.shot + train.query) {
      throw ConfigError("dataset.synthetic.train_per_class must be >= shot + query");
    }
    if (train.val_episodes > 0 && s.val_per_class < train.shot + train.val_query) {
      throw ConfigError("dataset.synthetic.val_per_class must be >= shot + val_query");
    }
    if (s.test_per_class < eval.shot + eval.query || s.probe_per_class < eval.shot + eval.query) {
      throw ConfigError("dataset.synthetic test/probe_per_class must be >= eval.shot + eval.query");
    }
  } else if (dataset.image_dir.train.empty() || dataset.image_dir.val.empty() || dataset.image_dir.test.empty()) {
    throw ConfigError("dataset.image_dir needs train, val and test directories");
  }
  if (eval.episodes == 0) throw ConfigError("eval.episodes must be positive");
  if (eval.way < 2 || eval.shot == 0 || eval.query == 0) throw ConfigError("eval way/shot/query out of range");
  if (eval.workers == 0) throw ConfigError("eval.workers must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("probe.noise_sigma must be >= 0");
  if (variants.empty()) throw ConfigError("probe.variants must not be empty");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  json j;
  try {
    j = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  json j;
  j["name"] = cfg.name;
  j["output_dir"] = cfg.output_dir.string();
  j["method"] = method_name(t.method);
  j["alpha"] = t.alpha;
  j["beta"] = t.beta;
  j["t_max"] = t.t_max;
  j["p"] = t.p;
  j["filter_pool"] = t.filter_pool;
  j["way"] = t.way;
  j["shot"] = t.shot;
  j["query"] = t.query;
  j["episodes_per_epoch"] = t.episodes_per_epoch;
  j["epochs"] = t.epochs;
  j["seed"] = t.seed;
  j["val_every"] = t.val_every;
  j["val_episodes"] = t.val_episodes;
  j["val_query"] = t.val_query;
  j["pretrain_steps"] = t.pretrain_steps;
  j["pretrain_batch"] = t.pretrain_batch;
  j["model"] = {{"widths", t.model.encoder.widths},
                {"head", head_name(t.model.head)},
                {"relation_hidden", t.model.relation_hidden}};
  const DatasetConfig& d = cfg.dataset;
  json image_dir = {{"train", d.image_dir.train.string()},
                    {"val", d.image_dir.val.string()},
                    {"test", d.image_dir.test.string()}};
  if (d.image_dir.probe) image_dir["probe"] = d.image_dir.probe->string();
  j["dataset"] = {{"kind", d.kind == DatasetKind::synthetic ? "synthetic" : "image_dir"},
                  {"image_size", d.image_size},
                  {"channels", d.channels},
                  {"standardize", d.standardize},
                  {"synthetic",
                   {{"seed", d.synthetic.seed},
                    {"train_per_class", d.synthetic.train_per_class},
                    {"val_per_class", d.synthetic.val_per_class},
                    {"test_per_class", d.synthetic.test_per_class},
                    {"probe_per_class", d.synthetic.probe_per_class},
                    {"classes", write_classes(d.synthetic.classes)},
                    {"train_domain", write_domain(d.synthetic.train_domain)},
                    {"test_domain", write_domain(d.synthetic.test_domain)}}},
                  {"image_dir", image_dir}};
  j["eval"] = eval_config_json(cfg.eval);
  j["eval"]["workers"] = cfg.eval.workers;
  std::vector<std::string> names;
  for (Variant v : cfg.variants) names.emplace_back(variant_name(v));
  j["probe"] = {{"noise_sigma", cfg.noise_sigma}, {"variants", names}};
  return j;
}

Pools build_pools(const DatasetConfig& cfg, const std::optional<InputNorm>& norm) {
  Pools p;
  if (cfg.kind == DatasetKind::synthetic) {
    const auto& s = cfg.synthetic;
    const SyntheticConfig sc{cfg.image_size, cfg.channels, s.classes};
    const Rng root(s.seed);
    Rng r_train = root.fork("train"), r_val = root.fork("val"), r_test = root.fork("test"),
        r_probe = root.fork("probe");
    p.train = generate_synthetic_domain(sc, s.train_domain, s.train_per_class, r_train);
    p.val = generate_synthetic_domain(sc, s.train_domain, s.val_per_class, r_val);
    p.test = generate_synthetic_domain(sc, s.test_domain, s.test_per_class, r_test);
    p.probe = generate_synthetic_domain(sc, s.train_domain, s.probe_per_class, r_probe);
  } else {
    const auto& d = cfg.image_dir;
    p.train = load_image_dir(d.train, cfg.image_size, cfg.channels);
    p.val = load_image_dir(d.val, cfg.image_size, cfg.channels);
    p.test = load_image_dir(d.test, cfg.image_size, cfg.channels);
    p.probe = d.probe ? load_image_dir(*d.probe, cfg.image_size, cfg.channels) : p.val;
  }
  if (norm) {
    p.norm = *norm;
  } else if (cfg.standardize) {
    p.norm = fit_input_norm(p.train);
  }
  p.train = standardize(p.train, p.norm);
  p.val = standardize(p.val, p.norm);
  p.test = standardize(p.test, p.norm);
  p.probe = standardize(p.probe, p.norm);
  return p;
}

RobustnessConfig robustness_config(const RunConfig& cfg, const InputNorm& norm) {
  norm.validate();
  RobustnessConfig r;
  r.eval = cfg.eval;
  r.noise_sigma = cfg.noise_sigma / norm.std;
  r.variants = cfg.variants;
  return r;
}

}  // namespace fap
