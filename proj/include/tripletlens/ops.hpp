#pragma once

#include <cstddef>
#include <span>

#include "tripletlens/graph.hpp"

namespace tl::nd {

/// Cross-correlation of input [N,C,H,W] with kernel [F,C,kh,kw].
/// Output is [N,F,H',W'] with H' = (H + 2*padding - kh) / stride + 1.
Var conv2d(Var input, Var kernel, std::size_t stride = 1, std::size_t padding = 0);

/// Max over window x window cells. Gradient goes to the winning cell; ties
/// go to the lowest linear index.
Var maxpool2d(Var input, std::size_t window, std::size_t stride);

/// max(0, x), with subgradient 0 at x == 0.
Var relu(Var x);

/// input [N,Din] * weight[Dout,Din]^T + bias[Dout]. The bias is the one
/// broadcast the library performs.
Var linear(Var input, Var weight, Var bias);

/// Sum of squared differences between equally shaped tensors; scalar.
Var squared_l2_distance(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_scalar(Var a, double c);
Var scale(Var a, double c);
Var sum(Var x);
/// Arithmetic mean of scalar nodes.
Var mean_of(std::span<const Var> scalars);

Var reshape(Var x, Shape shape);
/// [N, ...] -> [N, prod(...)]
Var flatten(Var x);
/// Row `row` of a rank-2 tensor, as a rank-1 tensor.
Var select_row(Var x, std::size_t row);
/// Scales each row of a rank-2 tensor to unit L2 norm.
Var normalize_rows(Var x);
/// Mean softmax cross-entropy of logits [N,C] against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace tl::nd
