#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tripletlens/augment.hpp"
#include "tripletlens/checkpoint.hpp"
#include "tripletlens/dataset.hpp"
#include "tripletlens/triplet.hpp"

namespace tl {

enum class Mining { Random, SemiHard };

struct TrainConfig {
  TrainMode mode = TrainMode::Triplet;
  std::string preset = "alex-lite";
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  Margin margin{};
  bool augment = true;
  AugmentOptions augment_options{};
  Mining mining = Mining::Random;
  std::uint64_t seed = 0;
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  bool normalize_embeddings = false;

  /// Throws ConfigError on any invariant violation.
  void validate() const;
};

inline constexpr std::size_t kLongScheduleEpochs = 150;

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  std::filesystem::path checkpoint;

  /// `epoch,mean_loss,seconds` with a header row.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Triplet-mode training on the Train split of `dataset`. Each epoch draws
/// ceil(N / batch_size) batches of batch_size random triplets; every member
/// image is augmented independently. Deterministic for a given seed.
TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Baseline: the same backbone with a C-way linear head trained with softmax
/// cross-entropy on the Train split. Labels must be 0..C-1.
TrainResult train_classifier(const Dataset& dataset, const TrainConfig& config,
                             const EpochCallback& on_epoch = {});

/// Backbone initialised like EmbeddingNet::build, with a zero head so the
/// untrained classifier predicts the uniform distribution.
EmbeddingNet build_classifier(const ArchPreset& preset, std::uint64_t seed);

/// Argmax of the classifier head for each image of a [N,3,S,S] batch.
std::vector<int> predict_classes(const EmbeddingNet& classifier, const Tensor& images);

}  // namespace tl
