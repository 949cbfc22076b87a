#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tripletlens/rng.hpp"
#include "tripletlens/tensor.hpp"

namespace tl {

/// k labelled exemplars per class. Immutable once built.
class SupportSet {
 public:
  /// exemplars[c] is [k, D] for classes[c]. Throws SupportError if class ids
  /// repeat, counts differ from k, or dims disagree.
  SupportSet(std::vector<int> classes, std::vector<Tensor> exemplars);

  const std::vector<int>& classes() const { return classes_; }
  const Tensor& exemplars(std::size_t class_index) const { return exemplars_.at(class_index); }
  std::size_t k() const { return k_; }
  std::size_t dim() const { return dim_; }

 private:
  std::vector<int> classes_;
  std::vector<Tensor> exemplars_;
  std::size_t k_ = 0;
  std::size_t dim_ = 0;
};

/// How the k distances of a class collapse to one score.
enum class Aggregation { Min, Mean };

struct Prediction {
  int label = 0;
  /// Aggregated squared distance per support class, in SupportSet::classes() order.
  std::vector<double> scores;
};

struct SupportSplit {
  SupportSet support;
  std::vector<std::size_t> support_indices;  // per class, in draw order
  std::vector<std::size_t> query_indices;    // ascending
};

/// Draws k exemplars per class uniformly without replacement; the remaining
/// samples form the query pool. Throws SupportError naming a class with <= k
/// samples.
SupportSplit build_support(const Tensor& embeddings, std::span<const int> labels,
                           std::size_t k, Rng& rng);

/// Nearest-class rule: score(c) = min over exemplars of squared L2 distance
/// (or the mean, for ablation); the lowest score wins, ties to the lowest
/// class id.
Prediction classify(std::span<const double> query, const SupportSet& support,
                    Aggregation aggregation = Aggregation::Min);

std::vector<Prediction> classify_batch(const Tensor& queries, const SupportSet& support,
                                       Aggregation aggregation = Aggregation::Min);

}  // namespace tl
