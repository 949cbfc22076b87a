#pragma once

#include <span>
#include <vector>

#include "tripletlens/tensor.hpp"

namespace tl {

/// Heavy-ball update, in place:
///   v <- momentum * v + g
///   p <- p - lr * v
/// Throws DimensionError if the three buffers differ in length.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum);

/// SGD with momentum over a fixed list of parameter tensors. Keeps one
/// velocity buffer per tensor.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor*> params, double lr, double momentum);

  /// Applies one update from the tensors' grad buffers. Tensors without a
  /// grad buffer are treated as having zero gradient.
  void step();
  void zero_grad();

  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
};

}  // namespace tl
