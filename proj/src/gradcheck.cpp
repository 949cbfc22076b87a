#include "tripletlens/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tripletlens/error.hpp"

namespace tl::nd {

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const ScalarFn& f, const Tensor& x) {
  Graph g;
  Var out = f(g, g.input(x));
  return {out.item(), g.branch_signature()};
}

Probe evaluate(const LossFn& loss) {
  Graph g;
  Var out = loss(g);
  return {out.item(), g.branch_signature()};
}

}  // namespace

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

GradCheckResult finite_difference_check(const ScalarFn& f, const Tensor& x, double eps) {
  std::vector<double> analytic;
  std::uint64_t base_signature = 0;
  {
    Graph g;
    Var v = g.variable(x);
    Var out = f(g, v);
    g.backward(out);
    auto grad = g.grad_of(v);
    analytic.assign(grad.begin(), grad.end());
    base_signature = g.branch_signature();
  }

  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double original = x[i];
    probe[i] = original + eps;
    const Probe plus = evaluate(f, probe);
    probe[i] = original - eps;
    const Probe minus = evaluate(f, probe);
    probe[i] = original;
    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++result.kinks;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * eps);
    result.max_relative_error =
        std::max(result.max_relative_error, relative_error(analytic[i], numeric));
    ++result.checked;
  }
  return result;
}

GradCheckResult check_parameter_gradients(const LossFn& loss,
                                          std::span<Tensor* const> params,
                                          std::size_t samples, Rng& rng, double eps,
                                          std::size_t max_attempts) {
  std::size_t total = 0;
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->ensure_grad();
    p->zero_grad();
    total += p->numel();
  }
  if (total == 0) throw ContractViolation("check_parameter_gradients: no parameters");

  std::uint64_t base_signature = 0;
  {
    Graph g;
    Var out = loss(g);
    g.backward(out);
    base_signature = g.branch_signature();
  }

  GradCheckResult result;
  for (std::size_t attempt = 0; attempt < max_attempts && result.checked < samples; ++attempt) {
    std::size_t flat = rng.below(total);
    std::size_t t = 0;
    while (flat >= params[t]->numel()) flat -= params[t++]->numel();
    Tensor& p = *params[t];

    const double original = p[flat];
    p[flat] = original + eps;
    const Probe plus = evaluate(loss);
    p[flat] = original - eps;
    const Probe minus = evaluate(loss);
    p[flat] = original;
    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++result.kinks;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * eps);
    result.max_relative_error =
        std::max(result.max_relative_error, relative_error(p.grad()[flat], numeric));
    ++result.checked;
  }
  return result;
}

}  // namespace tl::nd
