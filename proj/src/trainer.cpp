#include "tripletlens/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "tripletlens/error.hpp"
#include "tripletlens/ops.hpp"
#include "tripletlens/optim.hpp"

namespace tl {

namespace {

using Clock = std::chrono::steady_clock;

Dataset training_split(const Dataset& dataset) {
  Dataset train = dataset.subset(Split::Train);
  if (train.size() == 0) throw ConfigError("dataset has no training records");
  if (train.image_size < kMinInputSize) {
    throw ConfigError("training images must be at least 32 px");
  }
  return train;
}

std::map<int, std::size_t> class_counts(const std::vector<int>& labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  return counts;
}

class Augmenter {
 public:
  Augmenter(const TrainConfig& config)
      : enabled_(config.augment), options_(config.augment_options),
        rng_(derive_seed(config.seed, "augment")) {}

  Tensor stack(const Dataset& data, std::span<const std::size_t> indices) {
    if (!enabled_) return data.batch(indices);
    const std::size_t s = data.image_size;
    const std::size_t per = 3 * s * s;
    Tensor out(Shape{indices.size(), 3, s, s});
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const Tensor img = augment(data.images[indices[k]], rng_, options_);
      std::copy(img.data().begin(), img.data().end(), out.data().begin() + k * per);
    }
    return out;
  }

 private:
  bool enabled_;
  AugmentOptions options_;
  Rng rng_;
};

void finish_epoch(TrainLog& log, std::size_t epoch, double loss_sum, std::size_t batches,
                  Clock::time_point start, const EpochCallback& on_epoch) {
  EpochStats stats;
  stats.epoch = epoch;
  stats.mean_loss = loss_sum / static_cast<double>(batches);
  stats.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  log.epochs.push_back(stats);
  if (on_epoch) on_epoch(stats);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
  make_preset(preset, kMinInputSize, embedding_dim);
}

std::string TrainLog::to_csv() const {
  std::string out = "epoch,mean_loss,seconds\n";
  char line[128];
  for (const EpochStats& e : epochs) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.6f\n", e.epoch, e.mean_loss, e.seconds);
    out += line;
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_csv();
}

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (config.mode != TrainMode::Triplet) {
    throw ConfigError("train() runs triplet mode; use train_classifier() for the baseline");
  }
  const Dataset data = training_split(dataset);
  const auto counts = class_counts(data.labels);
  if (counts.size() < 2) throw ConfigError("triplet training needs at least two classes");
  for (const auto& [cls, n] : counts) {
    if (n < 2) {
      throw ConfigError("class " + std::to_string(cls) + " has fewer than two training samples");
    }
  }

  ArchPreset preset = make_preset(config.preset, data.image_size, config.embedding_dim);
  EmbeddingNet net = EmbeddingNet::build(preset, config.seed);
  net.set_normalize_output(config.normalize_embeddings);
  for (Tensor* p : net.parameter_ptrs()) p->set_requires_grad(true);
  SgdMomentum optimizer(net.parameter_ptrs(), config.learning_rate, config.momentum);
  Rng sampler(derive_seed(config.seed, "sampling"));
  Augmenter augmenter(config);

  const std::size_t batches = (data.size() + config.batch_size - 1) / config.batch_size;
  TrainLog log;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = Clock::now();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::vector<Triplet> triplets =
          sample_triplets(data.labels, config.batch_size, sampler);
      std::vector<std::size_t> members;
      std::vector<int> member_labels;
      std::vector<Triplet> local;
      members.reserve(3 * triplets.size());
      for (const Triplet& t : triplets) {
        const std::size_t base = members.size();
        for (std::size_t idx : {t.anchor, t.positive, t.negative}) {
          members.push_back(idx);
          member_labels.push_back(data.labels[idx]);
        }
        local.push_back({base, base + 1, base + 2});
      }

      nd::Graph graph;
      nd::Var embeddings = net.forward(graph, graph.input(augmenter.stack(data, members)));
      if (config.mining == Mining::SemiHard) {
        local = select_semi_hard(embeddings.value(), member_labels, local, config.margin);
      }
      nd::Var loss = batch_triplet_loss(embeddings, local, config.margin);
      optimizer.zero_grad();
      graph.backward(loss);
      optimizer.step();
      loss_sum += loss.item();
    }
    finish_epoch(log, epoch, loss_sum, batches, start, on_epoch);
  }

  for (Tensor* p : net.parameter_ptrs()) {
    p->set_requires_grad(false);
    p->clear_grad();
  }
  CheckpointMeta meta;
  meta.mode = TrainMode::Triplet;
  meta.epochs = config.epochs;
  meta.final_loss = log.epochs.back().mean_loss;
  meta.seed = config.seed;
  for (const auto& [cls, n] : counts) meta.trained_classes.push_back(cls);
  return TrainResult{Checkpoint{std::move(net), std::move(meta)}, std::move(log)};
}

TrainResult train_classifier(const Dataset& dataset, const TrainConfig& config,
                             const EpochCallback& on_epoch) {
  config.validate();
  const Dataset data = training_split(dataset);
  const auto counts = class_counts(data.labels);
  const std::size_t num_classes = counts.size();
  if (num_classes < 2) throw ConfigError("classifier training needs at least two classes");
  if (counts.begin()->first != 0 ||
      counts.rbegin()->first != static_cast<int>(num_classes) - 1) {
    throw ConfigError("classifier labels must be contiguous 0..C-1");
  }

  EmbeddingNet net =
      build_classifier(make_preset(config.preset, data.image_size, num_classes), config.seed);
  for (Tensor* p : net.parameter_ptrs()) p->set_requires_grad(true);
  SgdMomentum optimizer(net.parameter_ptrs(), config.learning_rate, config.momentum);
  Rng shuffler(derive_seed(config.seed, "sampling"));
  Augmenter augmenter(config);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batches = (data.size() + config.batch_size - 1) / config.batch_size;
  TrainLog log;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = Clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffler.below(i)]);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(lo + config.batch_size, order.size());
      std::span<const std::size_t> members(order.data() + lo, hi - lo);
      std::vector<int> labels;
      for (std::size_t idx : members) labels.push_back(data.labels[idx]);

      nd::Graph graph;
      nd::Var logits = net.forward(graph, graph.input(augmenter.stack(data, members)));
      nd::Var loss = nd::softmax_cross_entropy(logits, labels);
      optimizer.zero_grad();
      graph.backward(loss);
      optimizer.step();
      loss_sum += loss.item();
    }
    finish_epoch(log, epoch, loss_sum, batches, start, on_epoch);
  }

  for (Tensor* p : net.parameter_ptrs()) {
    p->set_requires_grad(false);
    p->clear_grad();
  }
  CheckpointMeta meta;
  meta.mode = TrainMode::Classifier;
  meta.epochs = config.epochs;
  meta.final_loss = log.epochs.back().mean_loss;
  meta.seed = config.seed;
  for (const auto& [cls, n] : counts) meta.trained_classes.push_back(cls);
  return TrainResult{Checkpoint{std::move(net), std::move(meta)}, std::move(log)};
}

EmbeddingNet build_classifier(const ArchPreset& preset, std::uint64_t seed) {
  EmbeddingNet net = EmbeddingNet::build(preset, seed);
  const std::string head = preset.layers.back().name;
  for (const char* part : {".weight", ".bias"}) {
    Tensor* t = net.find(head + part);
    std::fill(t->data().begin(), t->data().end(), 0.0);
  }
  return net;
}

std::vector<int> predict_classes(const EmbeddingNet& classifier, const Tensor& images) {
  const Tensor logits = classifier.embed(images);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = logits.data().data() + r * c;
    out[r] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

}  // namespace tl
