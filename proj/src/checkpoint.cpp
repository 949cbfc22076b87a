#include "tripletlens/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "tripletlens/error.hpp"

namespace tl {

namespace {

constexpr char kMagic[4] = {'L', 'V', '2', 'V'};

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void f64(double v) { raw(to_little(std::bit_cast<std::uint64_t>(v))); }
  void bytes(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void entry(std::string_view path, const std::vector<std::uint32_t>& dims,
             std::span<const double> payload) {
    bytes(path);
    u32(static_cast<std::uint32_t>(dims.size()));
    for (std::uint32_t d : dims) u32(d);
    for (double v : payload) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  template <class T>
  void raw(T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out_.insert(out_.end(), b, b + sizeof(T));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(to_little(raw<std::uint64_t>())); }
  std::string bytes() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void magic() {
    need(4);
    if (std::memcmp(in_.data(), kMagic, 4) != 0) {
      throw CheckpointError("checkpoint: bad magic header");
    }
    pos_ += 4;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  template <class T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::vector<std::uint32_t> dims;
  std::vector<double> payload;
};

std::vector<std::uint32_t> dims_of(const Shape& shape) {
  std::vector<std::uint32_t> dims;
  for (std::size_t d : shape) dims.push_back(static_cast<std::uint32_t>(d));
  return dims;
}

double meta_scalar(const std::map<std::string, Entry>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end() || it->second.payload.size() != 1) {
    throw CheckpointError("checkpoint: missing or malformed " + key);
  }
  return it->second.payload[0];
}

}  // namespace

std::string to_string(TrainMode mode) {
  return mode == TrainMode::Triplet ? "triplet" : "classifier";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "triplet") return TrainMode::Triplet;
  if (text == "classifier") return TrainMode::Classifier;
  throw ConfigError("unknown training mode '" + std::string(text) +
                    "' (expected triplet or classifier)");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const EmbeddingNet& net = ckpt.net;
  Writer w;
  w.buffer().insert(w.buffer().end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  w.bytes(net.preset().name);
  w.u32(static_cast<std::uint32_t>(net.output_dim()));

  const auto& params = net.parameters();
  constexpr std::uint32_t kMetaEntries = 7;
  w.u32(static_cast<std::uint32_t>(params.size()) + kMetaEntries);
  for (const NamedTensor& p : params) {
    w.entry(p.path, dims_of(p.tensor.shape()), p.tensor.data());
  }

  const CheckpointMeta& m = ckpt.meta;
  auto scalar = [&w](std::string_view key, double v) { w.entry(key, {1}, std::span(&v, 1)); };
  scalar("meta/input_size", static_cast<double>(net.input_size()));
  scalar("meta/mode", m.mode == TrainMode::Triplet ? 0.0 : 1.0);
  scalar("meta/epochs", static_cast<double>(m.epochs));
  scalar("meta/final_loss", m.final_loss);
  scalar("meta/normalize", net.normalize_output() ? 1.0 : 0.0);
  const double seed_words[2] = {static_cast<double>(m.seed >> 32),
                                static_cast<double>(m.seed & 0xffffffffULL)};
  w.entry("meta/seed", {2}, seed_words);
  std::vector<double> classes(m.trained_classes.begin(), m.trained_classes.end());
  w.entry("meta/trained_classes", {static_cast<std::uint32_t>(classes.size())}, classes);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::string preset_name = r.bytes();
  const std::uint32_t embedding_dim = r.u32();
  const std::uint32_t count = r.u32();

  std::map<std::string, Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string path = r.bytes();
    Entry e;
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("checkpoint: implausible rank for " + path);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.dims.push_back(r.u32());
      n *= e.dims.back();
    }
    if (n * sizeof(double) > r.remaining()) throw CheckpointError("checkpoint: truncated file");
    e.payload.resize(n);
    for (double& v : e.payload) v = r.f64();
    if (!entries.emplace(path, std::move(e)).second) {
      throw CheckpointError("checkpoint: duplicate entry " + path);
    }
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes after last entry");

  const auto input_size = static_cast<std::size_t>(meta_scalar(entries, "meta/input_size"));
  ArchPreset preset;
  try {
    preset = make_preset(preset_name, input_size, embedding_dim);
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  EmbeddingNet net = EmbeddingNet::build(preset, 0);
  for (NamedTensor& p : net.parameters()) {
    auto it = entries.find(p.path);
    if (it == entries.end()) throw CheckpointError("checkpoint: missing parameter " + p.path);
    if (it->second.dims != dims_of(p.tensor.shape())) {
      throw CheckpointError("checkpoint: parameter " + p.path + " does not match preset " +
                            preset_name + " with embedding_dim " +
                            std::to_string(embedding_dim));
    }
    std::copy(it->second.payload.begin(), it->second.payload.end(), p.tensor.data().begin());
  }
  for (const auto& [path, e] : entries) {
    if (path.rfind("meta/", 0) != 0 && !net.find(path)) {
      throw CheckpointError("checkpoint: unexpected entry " + path);
    }
  }

  CheckpointMeta meta;
  meta.mode = meta_scalar(entries, "meta/mode") == 0.0 ? TrainMode::Triplet
                                                       : TrainMode::Classifier;
  meta.epochs = static_cast<std::size_t>(meta_scalar(entries, "meta/epochs"));
  meta.final_loss = meta_scalar(entries, "meta/final_loss");
  net.set_normalize_output(meta_scalar(entries, "meta/normalize") != 0.0);
  auto seed = entries.find("meta/seed");
  if (seed == entries.end() || seed->second.payload.size() != 2) {
    throw CheckpointError("checkpoint: missing or malformed meta/seed");
  }
  meta.seed = (static_cast<std::uint64_t>(seed->second.payload[0]) << 32) |
              static_cast<std::uint64_t>(seed->second.payload[1]);
  if (auto it = entries.find("meta/trained_classes"); it != entries.end()) {
    for (double c : it->second.payload) meta.trained_classes.push_back(static_cast<int>(c));
  }
  return Checkpoint{std::move(net), std::move(meta)};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace tl
