#include "tripletlens/fewshot.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <string>

#include "tripletlens/error.hpp"

namespace tl {

SupportSet::SupportSet(std::vector<int> classes, std::vector<Tensor> exemplars)
    : classes_(std::move(classes)), exemplars_(std::move(exemplars)) {
  if (classes_.empty() || classes_.size() != exemplars_.size()) {
    throw SupportError("support set needs one exemplar block per class");
  }
  if (std::set<int>(classes_.begin(), classes_.end()).size() != classes_.size()) {
    throw SupportError("support set class ids must be unique");
  }
  for (std::size_t c = 0; c < exemplars_.size(); ++c) {
    const Tensor& e = exemplars_[c];
    if (e.rank() != 2) throw SupportError("support exemplars must be [k, D]");
    if (c == 0) {
      k_ = e.dim(0);
      dim_ = e.dim(1);
    } else if (e.dim(0) != k_ || e.dim(1) != dim_) {
      throw SupportError("class " + std::to_string(classes_[c]) + " has exemplar block " +
                         shape_to_string(e.shape()) + ", expected [" + std::to_string(k_) +
                         "," + std::to_string(dim_) + "]");
    }
  }
}

SupportSplit build_support(const Tensor& embeddings, std::span<const int> labels,
                           std::size_t k, Rng& rng) {
  expect_rank(embeddings, 2, "build_support embeddings");
  if (k == 0) throw SupportError("k must be positive");
  if (labels.size() != embeddings.dim(0)) {
    throw DimensionError("build_support: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(embeddings.dim(0)) + " embeddings");
  }
  const std::size_t d = embeddings.dim(1);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [cls, members] : by_class) {
    if (members.size() <= k) {
      throw SupportError("class " + std::to_string(cls) + " has " +
                         std::to_string(members.size()) + " samples; k=" + std::to_string(k) +
                         " needs at least " + std::to_string(k + 1));
    }
  }

  std::vector<int> classes;
  std::vector<Tensor> blocks;
  std::vector<std::size_t> support_indices;
  std::vector<bool> in_support(labels.size(), false);
  for (auto& [cls, members] : by_class) {
    // Partial Fisher-Yates: the first k positions become the exemplars.
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(members[i], members[i + rng.below(members.size() - i)]);
    }
    Tensor block(Shape{k, d});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t idx = members[i];
      std::copy_n(embeddings.data().begin() + static_cast<std::ptrdiff_t>(idx * d), d,
                  block.data().begin() + static_cast<std::ptrdiff_t>(i * d));
      support_indices.push_back(idx);
      in_support[idx] = true;
    }
    classes.push_back(cls);
    blocks.push_back(std::move(block));
  }
  std::vector<std::size_t> queries;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!in_support[i]) queries.push_back(i);
  }
  return SupportSplit{SupportSet(std::move(classes), std::move(blocks)),
                      std::move(support_indices), std::move(queries)};
}

Prediction classify(std::span<const double> query, const SupportSet& support,
                    Aggregation aggregation) {
  if (query.size() != support.dim()) {
    throw DimensionError("classify: query dim " + std::to_string(query.size()) +
                         " vs support dim " + std::to_string(support.dim()));
  }
  const std::size_t d = support.dim();
  Prediction p;
  p.scores.resize(support.classes().size());
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  for (std::size_t c = 0; c < support.classes().size(); ++c) {
    const Tensor& block = support.exemplars(c);
    double score = aggregation == Aggregation::Min ? std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t e = 0; e < support.k(); ++e) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = query[j] - block[e * d + j];
        s += diff * diff;
      }
      score = aggregation == Aggregation::Min ? std::min(score, s) : score + s;
    }
    if (aggregation == Aggregation::Mean) score /= static_cast<double>(support.k());
    p.scores[c] = score;
    const bool better = score < best ||
                        (score == best && support.classes()[c] < support.classes()[best_index]);
    if (c == 0 || better) {
      best = score;
      best_index = c;
    }
  }
  p.label = support.classes()[best_index];
  return p;
}

std::vector<Prediction> classify_batch(const Tensor& queries, const SupportSet& support,
                                       Aggregation aggregation) {
  expect_rank(queries, 2, "classify_batch queries");
  const std::size_t m = queries.dim(0), d = queries.dim(1);
  std::vector<Prediction> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.push_back(classify(queries.data().subspan(i * d, d), support, aggregation));
  }
  return out;
}

}  // namespace tl
