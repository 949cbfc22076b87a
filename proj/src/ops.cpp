#include "tripletlens/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tripletlens/error.hpp"

namespace tl::nd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

Graph& same_graph(Var a, Var b, const char* op) {
  if (!a.valid() || a.graph() != b.graph()) {
    throw ContractViolation(std::string(op) + ": operands belong to different graphs");
  }
  return *a.graph();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t out_plane() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& k, std::size_t stride,
                           std::size_t pad) {
  expect_rank(x, 4, "conv2d input");
  expect_rank(k, 4, "conv2d kernel");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2),
                 k.dim(3), stride, pad, 0, 0};
  if (k.dim(1) != g.c) {
    throw DimensionError("conv2d: input has " + std::to_string(g.c) +
                         " channels, kernel expects " + std::to_string(k.dim(1)));
  }
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_to_string(k.shape()) +
                         " larger than padded input " + shape_to_string(x.shape()));
  }
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// col is [C*kh*kw, ho*wo]; row index (c, ki, kj), column index (oi, oj).
void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* dst = col + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
          double* row = dst + oi * g.wo;
          if (ii < 0 || ii >= static_cast<long>(g.h)) {
            std::fill(row, row + g.wo, 0.0);
            continue;
          }
          const double* src = img + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
            row[oj] = (jj < 0 || jj >= static_cast<long>(g.w)) ? 0.0
                                                               : src[static_cast<std::size_t>(jj)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* src = col + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const long ii = static_cast<long>(oi * g.stride + ki) - static_cast<long>(g.pad);
          if (ii < 0 || ii >= static_cast<long>(g.h)) continue;
          double* dst = img + (c * g.h + static_cast<std::size_t>(ii)) * g.w;
          for (std::size_t oj = 0; oj < g.wo; ++oj) {
            const long jj = static_cast<long>(oj * g.stride + kj) - static_cast<long>(g.pad);
            if (jj < 0 || jj >= static_cast<long>(g.w)) continue;
            dst[static_cast<std::size_t>(jj)] += src[oi * g.wo + oj];
          }
        }
      }
    }
  }
}

void conv2d_backward(Graph& graph, Graph::Node& node) {
  Graph::Node& xin = graph.node(node.inputs[0]);
  Graph::Node& kin = graph.node(node.inputs[1]);
  const Tensor& x = xin.result();
  const Tensor& k = kin.result();
  const ConvGeometry g = conv_geometry(x, k, node.stride, node.padding);
  const std::size_t patch = g.patch();
  const std::size_t plane = g.out_plane();
  Buffer col(patch * plane);
  Buffer dcol;

  ConstMatMap kmat(k.data().data(), static_cast<Eigen::Index>(g.f),
                   static_cast<Eigen::Index>(patch));
  double* dx = xin.needs_grad ? graph.grad_buffer(node.inputs[0]).data() : nullptr;
  double* dk = kin.needs_grad ? graph.grad_buffer(node.inputs[1]).data() : nullptr;
  if (dx) dcol.resize(patch * plane);

  for (std::size_t n = 0; n < g.n; ++n) {
    ConstMatMap dout(node.grad.data() + n * g.f * plane, static_cast<Eigen::Index>(g.f),
                     static_cast<Eigen::Index>(plane));
    if (dk) {
      im2col(x.data().data() + n * g.c * g.h * g.w, g, col.data());
      MatMap dkmat(dk, static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(patch));
      dkmat.noalias() +=
          dout * ConstMatMap(col.data(), static_cast<Eigen::Index>(patch),
                             static_cast<Eigen::Index>(plane))
                     .transpose();
    }
    if (dx) {
      MatMap dcolmat(dcol.data(), static_cast<Eigen::Index>(patch),
                     static_cast<Eigen::Index>(plane));
      dcolmat.noalias() = kmat.transpose() * dout;
      col2im_add(dcol.data(), g, dx + n * g.c * g.h * g.w);
    }
  }
}

void maxpool_backward(Graph& graph, Graph::Node& node) {
  if (!graph.node(node.inputs[0]).needs_grad) return;
  auto dx = graph.grad_buffer(node.inputs[0]);
  for (std::size_t o = 0; o < node.aux.size(); ++o) dx[node.aux[o]] += node.grad[o];
}

void linear_backward(Graph& graph, Graph::Node& node) {
  const Tensor& x = graph.node(node.inputs[0]).result();
  const Tensor& w = graph.node(node.inputs[1]).result();
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto din = static_cast<Eigen::Index>(x.dim(1));
  const auto dout = static_cast<Eigen::Index>(w.dim(0));
  ConstMatMap dy(node.grad.data(), n, dout);
  if (graph.node(node.inputs[0]).needs_grad) {
    MatMap dx(graph.grad_buffer(node.inputs[0]).data(), n, din);
    dx.noalias() += dy * ConstMatMap(w.data().data(), dout, din);
  }
  if (graph.node(node.inputs[1]).needs_grad) {
    MatMap dw(graph.grad_buffer(node.inputs[1]).data(), dout, din);
    dw.noalias() += dy.transpose() * ConstMatMap(x.data().data(), n, din);
  }
  if (graph.node(node.inputs[2]).needs_grad) {
    VecMap db(graph.grad_buffer(node.inputs[2]).data(), dout);
    db += dy.colwise().sum().transpose();
  }
}

void accumulate(Graph& graph, int id, std::span<const double> g, double factor) {
  if (!graph.node(id).needs_grad) return;
  auto dst = graph.grad_buffer(id);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
}

}  // namespace

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  Graph& graph = same_graph(input, kernel, "conv2d");
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const ConvGeometry g = conv_geometry(x, k, stride, padding);
  const std::size_t patch = g.patch();
  const std::size_t plane = g.out_plane();

  Tensor out(Shape{g.n, g.f, g.ho, g.wo});
  Buffer col(patch * plane);
  ConstMatMap kmat(k.data().data(), static_cast<Eigen::Index>(g.f),
                   static_cast<Eigen::Index>(patch));
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.data().data() + n * g.c * g.h * g.w, g, col.data());
    MatMap omat(out.data().data() + n * g.f * plane, static_cast<Eigen::Index>(g.f),
                static_cast<Eigen::Index>(plane));
    omat.noalias() = kmat * ConstMatMap(col.data(), static_cast<Eigen::Index>(patch),
                                        static_cast<Eigen::Index>(plane));
  }
  Var v = graph.record(OpKind::Conv2d, {input.id(), kernel.id()}, std::move(out));
  graph.node(v.id()).stride = stride;
  graph.node(v.id()).padding = padding;
  return v;
}

Var maxpool2d(Var input, std::size_t window, std::size_t stride) {
  const Tensor& x = input.value();
  expect_rank(x, 4, "maxpool2d input");
  if (window == 0 || stride == 0) {
    throw DimensionError("maxpool2d: window and stride must be positive");
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window > h || window > w) {
    throw DimensionError("maxpool2d: window " + std::to_string(window) +
                         " exceeds spatial dims " + shape_to_string(x.shape()));
  }
  const std::size_t ho = (h - window) / stride + 1;
  const std::size_t wo = (w - window) / stride + 1;
  Tensor out(Shape{n, c, ho, wo});
  std::vector<std::size_t> argmax(out.numel());
  const auto in = x.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oi = 0; oi < ho; ++oi) {
      for (std::size_t oj = 0; oj < wo; ++oj, ++o) {
        std::size_t best = base + oi * stride * w + oj * stride;
        for (std::size_t di = 0; di < window; ++di) {
          for (std::size_t dj = 0; dj < window; ++dj) {
            const std::size_t idx = base + (oi * stride + di) * w + oj * stride + dj;
            if (in[idx] > in[best]) best = idx;
          }
        }
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  Graph& graph = *input.graph();
  Var v = graph.record(OpKind::MaxPool2d, {input.id()}, std::move(out));
  graph.node(v.id()).aux = std::move(argmax);
  graph.node(v.id()).window = window;
  graph.node(v.id()).stride = stride;
  return v;
}

Var relu(Var x) {
  const Tensor& t = x.value();
  Tensor out(t.shape());
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return x.graph()->record(OpKind::Relu, {x.id()}, std::move(out));
}

Var linear(Var input, Var weight, Var bias) {
  Graph& graph = same_graph(input, weight, "linear");
  same_graph(input, bias, "linear");
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  expect_rank(x, 2, "linear input");
  expect_rank(w, 2, "linear weight");
  expect_rank(b, 1, "linear bias");
  if (x.dim(1) != w.dim(1) || b.dim(0) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + ", weight " +
                         shape_to_string(w.shape()) + ", bias " +
                         shape_to_string(b.shape()));
  }
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  Tensor out(Shape{n, dout});
  ConstMatMap wmat(w.data().data(), static_cast<Eigen::Index>(dout),
                   static_cast<Eigen::Index>(din));
  ConstVecMap bvec(b.data().data(), static_cast<Eigen::Index>(dout));
  // Row-at-a-time so a sample's output does not depend on its batch.
  for (std::size_t r = 0; r < n; ++r) {
    VecMap y(out.data().data() + r * dout, static_cast<Eigen::Index>(dout));
    y.noalias() = wmat * ConstVecMap(x.data().data() + r * din, static_cast<Eigen::Index>(din));
    y += bvec;
  }
  return graph.record(OpKind::Linear, {input.id(), weight.id(), bias.id()}, std::move(out));
}

Var squared_l2_distance(Var a, Var b) {
  Graph& graph = same_graph(a, b, "squared_l2_distance");
  require_same_shape(a.value(), b.value(), "squared_l2_distance");
  auto x = a.value().data();
  auto y = b.value().data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return graph.record(OpKind::SquaredDistance, {a.id(), b.id()}, Tensor::scalar(s));
}

Var add(Var a, Var b) {
  Graph& graph = same_graph(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out(a.shape());
  auto x = a.value().data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return graph.record(OpKind::Add, {a.id(), b.id()}, std::move(out));
}

Var sub(Var a, Var b) {
  Graph& graph = same_graph(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out(a.shape());
  auto x = a.value().data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return graph.record(OpKind::Sub, {a.id(), b.id()}, std::move(out));
}

Var add_scalar(Var a, double c) {
  Tensor out(a.shape());
  auto x = a.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + c;
  Var v = a.graph()->record(OpKind::AddScalar, {a.id()}, std::move(out));
  a.graph()->node(v.id()).scalar = c;
  return v;
}

Var scale(Var a, double c) {
  Tensor out(a.shape());
  auto x = a.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
  Var v = a.graph()->record(OpKind::Scale, {a.id()}, std::move(out));
  a.graph()->node(v.id()).scalar = c;
  return v;
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph()->record(OpKind::Sum, {x.id()}, Tensor::scalar(s));
}

Var mean_of(std::span<const Var> scalars) {
  if (scalars.empty()) throw ContractViolation("mean_of: no operands");
  Graph& graph = *scalars.front().graph();
  std::vector<int> ids;
  ids.reserve(scalars.size());
  double s = 0.0;
  for (const Var& v : scalars) {
    if (v.graph() != &graph) throw ContractViolation("mean_of: operands from different graphs");
    s += v.value().item();
    ids.push_back(v.id());
  }
  return graph.record(OpKind::MeanOf, std::move(ids),
                      Tensor::scalar(s / static_cast<double>(scalars.size())));
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " +
                         shape_to_string(shape));
  }
  auto src = x.value().data();
  Tensor out(std::move(shape), std::vector<double>(src.begin(), src.end()));
  return x.graph()->record(OpKind::Reshape, {x.id()}, std::move(out));
}

Var flatten(Var x) {
  if (x.value().rank() < 1) throw DimensionError("flatten: scalar input");
  const std::size_t n = x.value().dim(0);
  return reshape(x, Shape{n, x.value().numel() / n});
}

Var select_row(Var x, std::size_t row) {
  const Tensor& t = x.value();
  expect_rank(t, 2, "select_row");
  if (row >= t.dim(0)) {
    throw IndexError("select_row: row " + std::to_string(row) + " out of range for " +
                     shape_to_string(t.shape()));
  }
  const std::size_t d = t.dim(1);
  auto src = t.data().subspan(row * d, d);
  Tensor out(Shape{d}, std::vector<double>(src.begin(), src.end()));
  Var v = x.graph()->record(OpKind::SelectRow, {x.id()}, std::move(out));
  x.graph()->node(v.id()).aux = {row};
  return v;
}

Var normalize_rows(Var x) {
  const Tensor& t = x.value();
  expect_rank(t, 2, "normalize_rows");
  const std::size_t n = t.dim(0), d = t.dim(1);
  Tensor out(t.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += t[r * d + j] * t[r * d + j];
    const double norm = std::max(std::sqrt(s), 1e-12);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = t[r * d + j] / norm;
  }
  return x.graph()->record(OpKind::NormalizeRows, {x.id()}, std::move(out));
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  expect_rank(z, 2, "softmax_cross_entropy logits");
  const std::size_t n = z.dim(0), c = z.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  std::vector<std::size_t> aux(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw LabelError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                       " outside 0.." + std::to_string(c - 1));
    }
    aux[r] = static_cast<std::size_t>(labels[r]);
    const double* row = z.data().data() + r * c;
    const double m = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
    total += m + std::log(s) - row[aux[r]];
  }
  Var v = logits.graph()->record(OpKind::SoftmaxCrossEntropy, {logits.id()},
                                 Tensor::scalar(total / static_cast<double>(n)));
  logits.graph()->node(v.id()).aux = std::move(aux);
  return v;
}

namespace detail {

void backward_node(Graph& graph, int id) {
  Graph::Node& node = graph.node(id);
  const Buffer& g = node.grad;
  switch (node.op) {
    case OpKind::Leaf:
      return;
    case OpKind::Conv2d:
      conv2d_backward(graph, node);
      return;
    case OpKind::MaxPool2d:
      maxpool_backward(graph, node);
      return;
    case OpKind::Relu: {
      const int in = node.inputs[0];
      if (!graph.node(in).needs_grad) return;
      auto x = graph.node(in).result().data();
      auto dx = graph.grad_buffer(in);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (x[i] > 0.0) dx[i] += g[i];
      }
      return;
    }
    case OpKind::Linear:
      linear_backward(graph, node);
      return;
    case OpKind::SquaredDistance: {
      auto a = graph.node(node.inputs[0]).result().data();
      auto b = graph.node(node.inputs[1]).result().data();
      std::vector<double> diff(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) diff[i] = 2.0 * (a[i] - b[i]);
      accumulate(graph, node.inputs[0], diff, g[0]);
      accumulate(graph, node.inputs[1], diff, -g[0]);
      return;
    }
    case OpKind::Add:
      accumulate(graph, node.inputs[0], g, 1.0);
      accumulate(graph, node.inputs[1], g, 1.0);
      return;
    case OpKind::Sub:
      accumulate(graph, node.inputs[0], g, 1.0);
      accumulate(graph, node.inputs[1], g, -1.0);
      return;
    case OpKind::AddScalar:
    case OpKind::Reshape:
      accumulate(graph, node.inputs[0], g, 1.0);
      return;
    case OpKind::Scale:
      accumulate(graph, node.inputs[0], g, node.scalar);
      return;
    case OpKind::Sum: {
      const int in = node.inputs[0];
      if (!graph.node(in).needs_grad) return;
      for (double& v : graph.grad_buffer(in)) v += g[0];
      return;
    }
    case OpKind::MeanOf: {
      const double share = g[0] / static_cast<double>(node.inputs.size());
      for (int in : node.inputs) {
        if (graph.node(in).needs_grad) graph.grad_buffer(in)[0] += share;
      }
      return;
    }
    case OpKind::SelectRow: {
      const int in = node.inputs[0];
      if (!graph.node(in).needs_grad) return;
      auto dx = graph.grad_buffer(in);
      const std::size_t d = g.size();
      for (std::size_t j = 0; j < d; ++j) dx[node.aux[0] * d + j] += g[j];
      return;
    }
    case OpKind::NormalizeRows: {
      const int in = node.inputs[0];
      if (!graph.node(in).needs_grad) return;
      const Tensor& x = graph.node(in).result();
      const Tensor& y = node.value;
      auto dx = graph.grad_buffer(in);
      const std::size_t n = x.dim(0), d = x.dim(1);
      for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0, yg = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          s += x[r * d + j] * x[r * d + j];
          yg += y[r * d + j] * g[r * d + j];
        }
        const double norm = std::max(std::sqrt(s), 1e-12);
        for (std::size_t j = 0; j < d; ++j) {
          dx[r * d + j] += (g[r * d + j] - y[r * d + j] * yg) / norm;
        }
      }
      return;
    }
    case OpKind::SoftmaxCrossEntropy: {
      const int in = node.inputs[0];
      if (!graph.node(in).needs_grad) return;
      const Tensor& z = graph.node(in).result();
      auto dz = graph.grad_buffer(in);
      const std::size_t n = z.dim(0), c = z.dim(1);
      const double share = g[0] / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = z.data().data() + r * c;
        const double m = *std::max_element(row, row + c);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - m);
        for (std::size_t j = 0; j < c; ++j) {
          const double p = std::exp(row[j] - m) / s;
          dz[r * c + j] += share * (p - (j == node.aux[r] ? 1.0 : 0.0));
        }
      }
      return;
    }
  }
}

}  // namespace detail

}  // namespace tl::nd
