#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tripletlens/graph.hpp"
#include "tripletlens/rng.hpp"
#include "tripletlens/tensor.hpp"

namespace tl {

/// Dataset indices of an (anchor, positive, negative) triple. A valid triplet
/// has label(anchor) == label(positive) != label(negative) and
/// anchor != positive.
struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  bool operator==(const Triplet&) const = default;
};

/// Margin alpha enforced between positive and negative squared distances.
class Margin {
 public:
  static constexpr double kDefault = 0.2;

  explicit Margin(double alpha = kDefault);
  double alpha() const { return alpha_; }

 private:
  double alpha_;
};

bool is_valid_triplet(const Triplet& t, std::span<const int> labels);

/// Draws `count` triplets: an anchor class uniformly among the classes
/// present, then anchor, positive and negative uniformly among the valid
/// samples. Throws SamplingError for fewer than two classes or when a chosen
/// anchor class has fewer than two samples.
std::vector<Triplet> sample_triplets(std::span<const int> labels, std::size_t count, Rng& rng);

/// max(0, |ea - ep|^2 - |ea - en|^2 + alpha) as a graph node.
nd::Var triplet_loss(nd::Var ea, nd::Var ep, nd::Var en, Margin margin);

/// Mean of triplet_loss over triplets indexing rows of embeddings [N,D].
nd::Var batch_triplet_loss(nd::Var embeddings, std::span<const Triplet> triplets,
                           Margin margin);

/// Semi-hard negative selection over a batch: for each triplet, replaces the
/// negative by the closest other-class row with d(a,p) < d(a,n) < d(a,p) + alpha
/// when one exists. Off by default in training.
std::vector<Triplet> select_semi_hard(const Tensor& embeddings, std::span<const int> labels,
                                      std::span<const Triplet> triplets, Margin margin);

}  // namespace tl
