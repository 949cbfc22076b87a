#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tripletlens/graph.hpp"
#include "tripletlens/tensor.hpp"

namespace tl {

enum class LayerKind { Conv, MaxPool, Relu, Linear, Residual };

/// One entry of a preset's layer list. Fields unused by a kind stay zero.
/// A Residual layer is a skip-add block: y = relu(x + conv_b(relu(conv_a(x))))
/// with two same-width 3x3 convolutions.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

/// Miniature backbones:
///   alex-lite  large 5x5 stride-2 stem and overlapping 3/2 pooling
///   vgg-lite   three stages of stacked 3x3 convolutions
///   res-lite   strided stems with two residual skip-add blocks
/// The final layer is always Linear with out_features == embedding_dim.
struct ArchPreset {
  std::string name;
  std::vector<LayerSpec> layers;
  std::size_t embedding_dim = 128;
  std::size_t input_size = 64;
};

inline constexpr std::size_t kDefaultEmbeddingDim = 128;
inline constexpr std::size_t kMinInputSize = 32;

std::vector<std::string> preset_names();

/// Throws ConfigError for an unknown name and DimensionError for an input
/// size below 32.
ArchPreset make_preset(std::string_view name, std::size_t input_size = 64,
                       std::size_t embedding_dim = kDefaultEmbeddingDim);

struct NamedTensor {
  std::string path;
  Tensor tensor;
};

/// Convolutional embedding function f(x): [N,3,S,S] images -> [N,D] vectors.
class EmbeddingNet {
 public:
  /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  static EmbeddingNet build(const ArchPreset& preset, std::uint64_t seed);

  const ArchPreset& preset() const { return preset_; }
  std::size_t output_dim() const { return preset_.embedding_dim; }
  std::size_t input_size() const { return preset_.input_size; }

  /// Projects embeddings onto the unit sphere. Off by default.
  bool normalize_output() const { return normalize_output_; }
  void set_normalize_output(bool on) { normalize_output_ = on; }

  /// Forward pass recording parameter leaves; gradients reach parameters
  /// that have requires_grad set.
  nd::Var forward(nd::Graph& graph, nd::Var batch);
  /// Forward pass with parameters as constants.
  nd::Var forward(nd::Graph& graph, nd::Var batch) const;

  /// Inference. Output row i depends only on input image i.
  Tensor embed(const Tensor& batch) const;

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<Tensor*> parameter_ptrs();
  Tensor* find(std::string_view path);
  const Tensor* find(std::string_view path) const;
  std::size_t parameter_count() const;

  /// Throws DimensionError unless batch is [N,3,S,S] with S == input_size().
  void check_input(const Tensor& batch) const;

 private:
  explicit EmbeddingNet(ArchPreset preset) : preset_(std::move(preset)) {}

  template <class Self>
  static nd::Var run(Self& self, nd::Graph& graph, nd::Var batch);

  ArchPreset preset_;
  std::vector<NamedTensor> params_;
  bool normalize_output_ = false;
};

}  // namespace tl
