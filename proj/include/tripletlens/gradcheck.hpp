#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "tripletlens/graph.hpp"
#include "tripletlens/rng.hpp"

namespace tl::nd {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;  // coordinates compared
  std::size_t kinks = 0;    // coordinates skipped because a perturbation crossed a kink
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

/// Scalar function of one tensor, expressed on a graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

/// Compares the autodiff gradient of f at x with central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2eps for every coordinate. A coordinate
/// whose perturbations change the forward branch pattern sits on a kink
/// (ReLU/hinge at 0, max-pool tie) and is excluded.
GradCheckResult finite_difference_check(const ScalarFn& f, const Tensor& x,
                                        double eps = 1e-5);

/// Loss built from parameters that the function binds with Graph::param.
using LossFn = std::function<Var(Graph&)>;

/// Central-difference check of `samples` parameter coordinates drawn uniformly
/// over all elements of `params`. Kink coordinates are resampled, up to
/// `max_attempts` draws in total. Parameter values are restored bit-exactly.
GradCheckResult check_parameter_gradients(const LossFn& loss,
                                          std::span<Tensor* const> params,
                                          std::size_t samples, Rng& rng,
                                          double eps = 1e-5,
                                          std::size_t max_attempts = 10000);

}  // namespace tl::nd
