#include "tripletlens/net.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "tripletlens/error.hpp"
#include "tripletlens/ops.hpp"
#include "tripletlens/rng.hpp"

namespace tl {

namespace {

class PresetBuilder {
 public:
  PresetBuilder(std::string name, std::size_t input_size, std::size_t embedding_dim)
      : size_(input_size), channels_(3) {
    preset_.name = std::move(name);
    preset_.input_size = input_size;
    preset_.embedding_dim = embedding_dim;
  }

  PresetBuilder& conv(std::string name, std::size_t out, std::size_t k, std::size_t stride,
                      std::size_t pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.name = std::move(name);
    l.in_channels = channels_;
    l.out_channels = out;
    l.kernel = k;
    l.stride = stride;
    l.padding = pad;
    require(k <= size_ + 2 * pad, l.name);
    size_ = (size_ + 2 * pad - k) / stride + 1;
    channels_ = out;
    preset_.layers.push_back(std::move(l));
    return *this;
  }

  PresetBuilder& relu() {
    preset_.layers.push_back(LayerSpec{});
    return *this;
  }

  PresetBuilder& pool(std::size_t window, std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.name = "pool";
    l.window = window;
    l.stride = stride;
    require(window <= size_, "pool");
    size_ = (size_ - window) / stride + 1;
    preset_.layers.push_back(std::move(l));
    return *this;
  }

  PresetBuilder& residual(std::string name) {
    LayerSpec l;
    l.kind = LayerKind::Residual;
    l.name = std::move(name);
    l.in_channels = channels_;
    l.out_channels = channels_;
    l.kernel = 3;
    l.padding = 1;
    preset_.layers.push_back(std::move(l));
    return *this;
  }

  ArchPreset head(std::string name) {
    LayerSpec l;
    l.kind = LayerKind::Linear;
    l.name = std::move(name);
    l.in_features = channels_ * size_ * size_;
    l.out_features = preset_.embedding_dim;
    preset_.layers.push_back(std::move(l));
    return std::move(preset_);
  }

 private:
  void require(bool ok, const std::string& where) const {
    if (!ok) {
      throw DimensionError(preset_.name + ": input size " +
                           std::to_string(preset_.input_size) + " too small at " + where);
    }
  }

  ArchPreset preset_;
  std::size_t size_;
  std::size_t channels_;
};

}  // namespace

std::vector<std::string> preset_names() { return {"alex-lite", "vgg-lite", "res-lite"}; }

ArchPreset make_preset(std::string_view name, std::size_t input_size,
                       std::size_t embedding_dim) {
  if (input_size < kMinInputSize) {
    throw DimensionError("input size " + std::to_string(input_size) +
                         " below minimum " + std::to_string(kMinInputSize));
  }
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  PresetBuilder b(std::string(name), input_size, embedding_dim);
  if (name == "alex-lite") {
    return b.conv("conv1", 16, 5, 2, 2).relu().pool(3, 2)
        .conv("conv2", 32, 3, 1, 1).relu().pool(3, 2)
        .conv("conv3", 32, 3, 1, 1).relu().pool(3, 2)
        .head("fc");
  }
  if (name == "vgg-lite") {
    return b.conv("conv1_1", 8, 3, 1, 1).relu().conv("conv1_2", 8, 3, 1, 1).relu().pool(2, 2)
        .conv("conv2_1", 16, 3, 1, 1).relu().conv("conv2_2", 16, 3, 1, 1).relu().pool(2, 2)
        .conv("conv3_1", 32, 3, 1, 1).relu().conv("conv3_2", 32, 3, 1, 1).relu().pool(2, 2)
        .head("fc");
  }
  if (name == "res-lite") {
    return b.conv("stem", 16, 3, 2, 1).relu().pool(2, 2)
        .residual("res1")
        .conv("down", 32, 3, 2, 1).relu()
        .residual("res2")
        .pool(2, 2)
        .head("fc");
  }
  throw ConfigError("unknown preset '" + std::string(name) +
                    "' (expected alex-lite, vgg-lite or res-lite)");
}

EmbeddingNet EmbeddingNet::build(const ArchPreset& preset, std::uint64_t seed) {
  if (preset.layers.empty() || preset.layers.back().kind != LayerKind::Linear ||
      preset.layers.back().out_features != preset.embedding_dim) {
    throw ConfigError("preset '" + preset.name + "' must end in a linear layer of width " +
                      std::to_string(preset.embedding_dim));
  }
  EmbeddingNet net(preset);
  Rng rng(derive_seed(seed, "init"));
  auto he_uniform = [&rng](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
  };
  auto conv_weight = [&](const std::string& path, std::size_t out, std::size_t in,
                         std::size_t k) {
    net.params_.push_back({path, he_uniform(Shape{out, in, k, k}, in * k * k)});
  };
  for (const LayerSpec& l : preset.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        conv_weight(l.name + ".weight", l.out_channels, l.in_channels, l.kernel);
        break;
      case LayerKind::Residual:
        conv_weight(l.name + ".conv_a.weight", l.out_channels, l.in_channels, l.kernel);
        conv_weight(l.name + ".conv_b.weight", l.out_channels, l.out_channels, l.kernel);
        break;
      case LayerKind::Linear:
        net.params_.push_back(
            {l.name + ".weight", he_uniform(Shape{l.out_features, l.in_features}, l.in_features)});
        net.params_.push_back({l.name + ".bias", Tensor(Shape{l.out_features})});
        break;
      case LayerKind::MaxPool:
      case LayerKind::Relu:
        break;
    }
  }
  return net;
}

std::vector<Tensor*> EmbeddingNet::parameter_ptrs() {
  std::vector<Tensor*> out;
  out.reserve(params_.size());
  for (NamedTensor& p : params_) out.push_back(&p.tensor);
  return out;
}

Tensor* EmbeddingNet::find(std::string_view path) {
  for (NamedTensor& p : params_) {
    if (p.path == path) return &p.tensor;
  }
  return nullptr;
}

const Tensor* EmbeddingNet::find(std::string_view path) const {
  for (const NamedTensor& p : params_) {
    if (p.path == path) return &p.tensor;
  }
  return nullptr;
}

std::size_t EmbeddingNet::parameter_count() const {
  std::size_t n = 0;
  for (const NamedTensor& p : params_) n += p.tensor.numel();
  return n;
}

void EmbeddingNet::check_input(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != 3) {
    throw DimensionError("embed: expected [N,3,H,W] batch, got " +
                         shape_to_string(batch.shape()));
  }
  if (batch.dim(2) != batch.dim(3)) {
    throw DimensionError("embed: images must be square, got " +
                         shape_to_string(batch.shape()));
  }
  if (batch.dim(2) < kMinInputSize) {
    throw DimensionError("embed: images must be at least " + std::to_string(kMinInputSize) +
                         " px, got " + std::to_string(batch.dim(2)));
  }
  if (batch.dim(2) != preset_.input_size) {
    throw DimensionError("embed: network built for " + std::to_string(preset_.input_size) +
                         " px input, got " + std::to_string(batch.dim(2)));
  }
}

template <class Self>
nd::Var EmbeddingNet::run(Self& self, nd::Graph& graph, nd::Var x) {
  self.check_input(x.value());
  std::size_t next = 0;
  auto leaf = [&]() -> nd::Var {
    auto& t = self.params_.at(next++).tensor;
    if constexpr (std::is_const_v<Self>) {
      return graph.constant(t);
    } else {
      return graph.param(t);
    }
  };
  for (const LayerSpec& l : self.preset_.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        x = nd::conv2d(x, leaf(), l.stride, l.padding);
        break;
      case LayerKind::Relu:
        x = nd::relu(x);
        break;
      case LayerKind::MaxPool:
        x = nd::maxpool2d(x, l.window, l.stride);
        break;
      case LayerKind::Residual: {
        nd::Var wa = leaf();
        nd::Var wb = leaf();
        nd::Var branch = nd::conv2d(nd::relu(nd::conv2d(x, wa, 1, l.padding)), wb, 1, l.padding);
        x = nd::relu(nd::add(x, branch));
        break;
      }
      case LayerKind::Linear: {
        if (x.value().rank() != 2) x = nd::flatten(x);
        nd::Var w = leaf();
        nd::Var b = leaf();
        x = nd::linear(x, w, b);
        break;
      }
    }
  }
  if (self.normalize_output_) x = nd::normalize_rows(x);
  return x;
}

nd::Var EmbeddingNet::forward(nd::Graph& graph, nd::Var batch) {
  return run(*this, graph, batch);
}

nd::Var EmbeddingNet::forward(nd::Graph& graph, nd::Var batch) const {
  return run(*this, graph, batch);
}

Tensor EmbeddingNet::embed(const Tensor& batch) const {
  check_input(batch);
  constexpr std::size_t kChunk = 32;
  const std::size_t n = batch.dim(0);
  const std::size_t image = batch.numel() / n;
  const std::size_t d = output_dim();
  Tensor out(Shape{n, d});
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    auto src = batch.data().subspan(start * image, count * image);
    nd::Graph graph;
    nd::Var x = graph.input(
        Tensor(Shape{count, 3, batch.dim(2), batch.dim(3)}, {src.begin(), src.end()}));
    const Tensor& y = forward(graph, x).value();
    std::copy(y.data().begin(), y.data().end(), out.data().begin() + start * d);
  }
  return out;
}

}  // namespace tl
