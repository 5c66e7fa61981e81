#include "fap/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "fap/error.hpp"
#include "json.hpp"

namespace fap {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'A', 'P', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw IoError("cannot write checkpoint " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename U>
  void uint(U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof(U));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("failed writing checkpoint " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot read checkpoint " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated checkpoint " + path_.string());
  }
  template <typename U>
  U uint() {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

nlohmann::json describe(const ModelConfig& c) {
  return {{"encoder", {{"widths", c.encoder.widths}, {"channels", c.encoder.channels}, {"image_size", c.encoder.image_size}}},
          {"head", head_name(c.head)},
          {"relation_hidden", c.relation_hidden},
          {"input_norm", {{"mean", c.input_norm.mean}, {"std", c.input_norm.std}}}};
}

ModelConfig parse_description(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.encoder.widths = j.at("encoder").at("widths").get<std::vector<std::size_t>>();
    c.encoder.channels = j.at("encoder").at("channels").get<std::size_t>();
    c.encoder.image_size = j.at("encoder").at("image_size").get<std::size_t>();
    c.head = parse_head(j.at("head").get<std::string>());
    c.relation_hidden = j.at("relation_hidden").get<std::size_t>();
    c.input_norm.mean = j.at("input_norm").at("mean").get<double>();
    c.input_norm.std = j.at("input_norm").at("std").get<double>();
    c.input_norm.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed model description: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.uint<std::uint32_t>(kCheckpointVersion);
  const std::string meta = describe(model.config()).dump();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, t] : model.params()) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.uint<std::uint64_t>(d);
    for (double v : t.values()) w.f64(v);
  }
  w.finish();
}

Model load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw IoError("not a checkpoint file: " + path.string());
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + " has version " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));
  }
  const ModelConfig config = parse_description(r.str(r.uint<std::uint32_t>()));
  const auto count = r.uint<std::uint32_t>();
  ParamSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.uint<std::uint32_t>());
    const auto rank = r.uint<std::uint32_t>();
    if (rank > 8) throw IoError("checkpoint: implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = r.uint<std::uint64_t>();
    const std::size_t n = shape_numel(shape);
    if (n > (std::size_t{1} << 32)) throw IoError("checkpoint: implausible size for '" + name + "'");
    std::vector<double> values(n);
    for (double& v : values) v = r.f64();
    try {
      params.add(std::move(name), Tensor(std::move(shape), std::move(values)));
    } catch (const NumericError&) {
      throw IoError("checkpoint: non-finite values in " + path.string());
    }
  }
  if (!r.at_end()) throw IoError("checkpoint: trailing bytes in " + path.string());
  return Model(config, std::move(params));
}

}  // namespace fap
