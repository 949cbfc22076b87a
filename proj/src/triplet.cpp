#include "tripletlens/triplet.hpp"

#include <limits>
#include <map>
#include <string>

#include "tripletlens/error.hpp"
#include "tripletlens/ops.hpp"

namespace tl {

Margin::Margin(double alpha) : alpha_(alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("margin must be non-negative");
}

bool is_valid_triplet(const Triplet& t, std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (t.anchor >= n || t.positive >= n || t.negative >= n) return false;
  return t.anchor != t.positive && labels[t.anchor] == labels[t.positive] &&
         labels[t.anchor] != labels[t.negative];
}

std::vector<Triplet> sample_triplets(std::span<const int> labels, std::size_t count, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) {
    throw SamplingError("triplet sampling needs at least two classes, found " +
                        std::to_string(by_class.size()));
  }
  std::vector<int> classes;
  for (const auto& [c, members] : by_class) classes.push_back(c);

  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    const int cls = classes[rng.below(classes.size())];
    const auto& members = by_class[cls];
    if (members.size() < 2) {
      throw SamplingError("class " + std::to_string(cls) +
                          " has fewer than two samples and cannot anchor a triplet");
    }
    Triplet tr;
    const std::size_t a = rng.below(members.size());
    std::size_t p = rng.below(members.size() - 1);
    if (p >= a) ++p;
    tr.anchor = members[a];
    tr.positive = members[p];
    std::size_t neg = rng.below(labels.size() - members.size());
    for (int other : classes) {
      if (other == cls) continue;
      const auto& pool = by_class[other];
      if (neg < pool.size()) {
        tr.negative = pool[neg];
        break;
      }
      neg -= pool.size();
    }
    out.push_back(tr);
  }
  return out;
}

nd::Var triplet_loss(nd::Var ea, nd::Var ep, nd::Var en, Margin margin) {
  if (ea.shape() != ep.shape() || ea.shape() != en.shape()) {
    throw DimensionError("triplet_loss: embedding shapes differ " + shape_to_string(ea.shape()) +
                         ", " + shape_to_string(ep.shape()) + ", " +
                         shape_to_string(en.shape()));
  }
  nd::Var gap = nd::sub(nd::squared_l2_distance(ea, ep), nd::squared_l2_distance(ea, en));
  return nd::relu(nd::add_scalar(gap, margin.alpha()));
}

nd::Var batch_triplet_loss(nd::Var embeddings, std::span<const Triplet> triplets,
                           Margin margin) {
  const Tensor& e = embeddings.value();
  expect_rank(e, 2, "batch_triplet_loss embeddings");
  if (triplets.empty()) throw ContractViolation("batch_triplet_loss: empty triplet list");
  const std::size_t n = e.dim(0);
  std::vector<nd::Var> rows(n);
  auto row = [&](std::size_t i) {
    if (i >= n) {
      throw IndexError("batch_triplet_loss: index " + std::to_string(i) + " out of range for " +
                       std::to_string(n) + " embeddings");
    }
    if (!rows[i].valid()) rows[i] = nd::select_row(embeddings, i);
    return rows[i];
  };
  std::vector<nd::Var> losses;
  losses.reserve(triplets.size());
  for (const Triplet& t : triplets) {
    losses.push_back(triplet_loss(row(t.anchor), row(t.positive), row(t.negative), margin));
  }
  return nd::mean_of(losses);
}

std::vector<Triplet> select_semi_hard(const Tensor& embeddings, std::span<const int> labels,
                                      std::span<const Triplet> triplets, Margin margin) {
  expect_rank(embeddings, 2, "select_semi_hard embeddings");
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  if (labels.size() != n) throw DimensionError("select_semi_hard: label count mismatch");
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = embeddings[i * d + k] - embeddings[j * d + k];
      s += diff * diff;
    }
    return s;
  };
  std::vector<Triplet> out(triplets.begin(), triplets.end());
  for (Triplet& t : out) {
    const double dap = dist(t.anchor, t.positive);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (labels[j] == labels[t.anchor]) continue;
      const double dan = dist(t.anchor, j);
      if (dan > dap && dan < dap + margin.alpha() && dan < best) {
        best = dan;
        t.negative = j;
      }
    }
  }
  return out;
}

}  // namespace tl
