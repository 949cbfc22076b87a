#pragma once

#include <vector>

#include "tripletlens/rng.hpp"
#include "tripletlens/tensor.hpp"

namespace tl::test {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<double> to_vector(std::span<const double> s) {
  return std::vector<double>(s.begin(), s.end());
}

}  // namespace tl::test
