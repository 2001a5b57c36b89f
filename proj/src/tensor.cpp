// Copyright 2026 The rae-toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rae/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "rae/error.hpp"
#include "rae/rng.hpp"

namespace rae {

using detail::Node;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  return node;
}

// Builds the result tensor; attaches inputs and the backward closure only when
// some input participates in the graph.
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> fn) {
  auto node = new_node(std::move(shape), std::move(values));
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> fn) {
  auto node = new_node(std::move(shape), std::move(values));
  if (g_grad_enabled) {
    node->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const Tensor& t) { return t.requires_grad(); });
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

template <class Pred>
void require_all(const Tensor& t, const char* op, const char* what, Pred ok) {
  for (double v : t.values()) {
    if (!ok(v)) throw DomainError(std::string(op) + ": " + what);
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ArgumentError(std::string(op) + ": undefined tensor");
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// ---- broadcasting ---------------------------------------------------------

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;  // 0 on broadcast axes
  std::vector<std::size_t> stride_b;
  bool same = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  const auto sa = strides_of(pa);
  const auto sb = strides_of(pb);
  plan.stride_a.resize(rank);
  plan.stride_b.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    plan.stride_a[i] = pa[i] == 1 ? 0 : sa[i];
    plan.stride_b[i] = pb[i] == 1 ? 0 : sb[i];
  }
  return plan;
}

template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::size_t total = shape_numel(plan.out);
  if (plan.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += plan.stride_a[ax];
      ib += plan.stride_b[ax];
      if (idx[ax] < plan.out[ax]) break;
      ia -= plan.stride_a[ax] * idx[ax];
      ib -= plan.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

// Binary op with local partials: out = f(a, b), da = fa(a, b, out), db = fb(...).
template <typename F, typename FA, typename FB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, FA fa, FB fb) {
  require_defined(a, name);
  require_defined(b, name);
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<double> out(shape_numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = f(av[ia], bv[ib]);
  });
  Shape out_shape = plan.out;
  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [plan = std::move(plan), fa, fb](Node& self) {
                       Node& na = *self.parents[0];
                       Node& nb = *self.parents[1];
                       const auto& g = self.grad;
                       if (na.requires_grad) {
                         auto& ga = na.ensure_grad();
                         for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           ga[ia] += g[o] * fa(na.values[ia], nb.values[ib], self.values[o]);
                         });
                       }
                       if (nb.requires_grad) {
                         auto& gb = nb.ensure_grad();
                         for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           gb[ib] += g[o] * fb(na.values[ia], nb.values[ib], self.values[o]);
                         });
                       }
                     });
}

// Elementwise unary op; `df(x, y)` is dy/dx.
template <typename F, typename DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
  require_defined(x, name);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [df](Node& self) {
    Node& nx = *self.parents[0];
    auto& gx = nx.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * df(nx.values[i], self.values[i]);
  });
}

// Splits a shape around `axis` into (outer, n, inner) loop extents.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<double>(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("dim: axis out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return defined() ? node_->values.size() : 0; }

std::span<const double> Tensor::values() const {
  require_defined(*this, "values");
  return node_->values;
}

std::span<double> Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  return node_->values;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->values[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  require_defined(*this, "set_requires_grad");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->ensure_grad();
}

std::span<double> Tensor::mutable_grad() {
  require_defined(*this, "mutable_grad");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(new_node(node_->shape, node_->values));
}

Tensor Tensor::clone() const { return detach(); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss is not connected to any tensor that requires a gradient");
  }

  // Iterative post-order DFS; reversed, it is a valid reverse-mode schedule.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn || node->grad.empty()) continue;
    node->backward_fn(*node);
    // Interior gradients are consumed; a second backward over the same
    // graph must not see them again.
    std::vector<double>().swap(node->grad);
  }
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_defined(b, "div");
  require_all(b, "div", "division by zero", [](double v) { return v != 0.0; });
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  require_defined(x, "log");
  require_all(x, "log", "argument must be positive", [](double v) { return v > 0.0; });
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  require_defined(x, "sqrt");
  require_all(x, "sqrt", "argument must be nonnegative", [](double v) { return v >= 0.0; });
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sb.size() != 2 || sa.back() != sb[0]) {
    throw DimensionError("matmul: cannot contract " + shape_str(sa) + " with " + shape_str(sb));
  }
  const auto q = static_cast<Eigen::Index>(sb[0]);
  const auto r = static_cast<Eigen::Index>(sb[1]);
  const auto m = static_cast<Eigen::Index>(a.numel() / sb[0]);
  Shape out_shape = sa;
  out_shape.back() = sb[1];
  std::vector<double> out(static_cast<std::size_t>(m * r));
  MutMap(out.data(), m, r).noalias() = ConstMap(a.values().data(), m, q) * ConstMap(b.values().data(), q, r);
  return make_result(std::move(out_shape), std::move(out), {a, b}, [m, q, r](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    ConstMap g(self.grad.data(), m, r);
    if (na.requires_grad) {
      MutMap(na.ensure_grad().data(), m, q).noalias() += g * ConstMap(nb.values.data(), q, r).transpose();
    }
    if (nb.requires_grad) {
      MutMap(nb.ensure_grad().data(), q, r).noalias() += ConstMap(na.values.data(), m, q).transpose() * g;
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_defined(a, "bmm");
  require_defined(b, "bmm");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const std::size_t rank = sa.size();
  if (rank < 3 || sb.size() != rank || !std::equal(sa.begin(), sa.end() - 2, sb.begin()) ||
      sa[rank - 1] != sb[rank - 2]) {
    throw DimensionError("bmm: cannot contract " + shape_str(sa) + " with " + shape_str(sb));
  }
  const auto p = static_cast<Eigen::Index>(sa[rank - 2]);
  const auto q = static_cast<Eigen::Index>(sa[rank - 1]);
  const auto r = static_cast<Eigen::Index>(sb[rank - 1]);
  const std::size_t groups = a.numel() / static_cast<std::size_t>(p * q);
  Shape out_shape = sa;
  out_shape.back() = sb.back();
  std::vector<double> out(groups * static_cast<std::size_t>(p * r));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  // Per-head products are tiny; coefficient-wise lazy products skip the
  // GEMM blocking overhead.
  for (std::size_t g = 0; g < groups; ++g) {
    MutMap(out.data() + g * p * r, p, r).noalias() =
        ConstMap(av + g * p * q, p, q).lazyProduct(ConstMap(bv + g * q * r, q, r));
  }
  return make_result(std::move(out_shape), std::move(out), {a, b}, [groups, p, q, r](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    double* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
    double* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
    for (std::size_t g = 0; g < groups; ++g) {
      ConstMap go(self.grad.data() + g * p * r, p, r);
      if (ga) {
        MutMap(ga + g * p * q, p, q).noalias() +=
            go.lazyProduct(ConstMap(nb.values.data() + g * q * r, q, r).transpose());
      }
      if (gb) {
        MutMap(gb + g * q * r, q, r).noalias() +=
            ConstMap(na.values.data() + g * p * q, p, q).transpose().lazyProduct(go);
      }
    }
  });
}

// ---- shape ops ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  require_defined(x, "permute");
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) throw DimensionError("permute: axis count does not match rank");
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) throw DimensionError("permute: invalid axis list");
    seen[ax] = true;
  }
  Shape out_shape(rank);
  const auto in_strides = strides_of(in_shape);
  std::vector<std::size_t> gather_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    gather_strides[i] = in_strides[axes[i]];
  }
  // Source offset of every output element, reused by the backward scatter.
  const std::size_t total = x.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(total);
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < total; ++o) {
      (*source)[o] = off;
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        off += gather_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        off -= gather_strides[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  std::vector<double> out(total);
  const auto xv = x.values();
  for (std::size_t o = 0; o < total; ++o) out[o] = xv[(*source)[o]];
  return make_result(std::move(out_shape), std::move(out), {x}, [source](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < source->size(); ++o) gx[(*source)[o]] += self.grad[o];
  });
}

Tensor transpose_last(const Tensor& x) {
  const std::size_t rank = x.rank();
  if (rank < 2) throw DimensionError("transpose_last: rank < 2");
  std::vector<std::size_t> axes(rank);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[rank - 1], axes[rank - 2]);
  return permute(x, axes);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_defined(x, "slice");
  const auto s = split_axis(x.shape(), axis, "slice");
  if (start + length > s.n || length == 0) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds extent " + std::to_string(s.n));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * s.n + start) * s.inner), length * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [s, start, length](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = self.grad.data() + o * length * s.inner;
      double* dst = gx.data() + (o * s.n + start) * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw DimensionError("concat: axis out of range");
  std::size_t total_n = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    auto ps = p.shape();
    if (ps.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (i != axis && ps[i] != out_shape[i]) throw DimensionError("concat: extent mismatch");
    }
    extents.push_back(ps[axis]);
    total_n += ps[axis];
  }
  out_shape[axis] = total_n;
  const auto s = split_axis(out_shape, axis, "concat");
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    const std::size_t block = extents[k] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.begin() + static_cast<std::ptrdiff_t>((o * s.n + offset) * s.inner));
    }
    offset += extents[k];
  }
  return make_result(std::move(out_shape), std::move(out), parts, [s, extents](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      const std::size_t block = extents[k] * s.inner;
      if (p.requires_grad) {
        auto& gp = p.ensure_grad();
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = self.grad.data() + (o * s.n + offset) * s.inner;
          for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += src[i];
        }
      }
      offset += extents[k];
    }
  });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, {x}, [](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  require_defined(x, "sum_axis");
  const auto s = split_axis(x.shape(), axis, "sum_axis");
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.n; ++k) {
      const double* src = xv.data() + (o * s.n + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [s](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t k = 0; k < s.n; ++k) {
        double* dst = gx.data() + (o * s.n + k) * s.inner;
        const double* src = self.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const auto s = split_axis(x.shape(), axis, "softmax");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) {
        const double e = std::exp(xv[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= z;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [s](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const auto& y = self.values;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.n * s.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
        for (std::size_t k = 0; k < s.n; ++k) {
          const std::size_t j = base + k * s.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "log_softmax");
  const auto s = split_axis(x.shape(), axis, "log_softmax");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) z += std::exp(xv[base + k * s.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] = xv[base + k * s.inner] - lse;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [s](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const auto& y = self.values;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.n * s.inner + i;
        double gsum = 0.0;
        for (std::size_t k = 0; k < s.n; ++k) gsum += g[base + k * s.inner];
        for (std::size_t k = 0; k < s.n; ++k) {
          const std::size_t j = base + k * s.inner;
          gx[j] += g[j] - std::exp(y[j]) * gsum;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, double eps) {
  require_defined(x, "layer_norm");
  if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layer_norm: empty last axis");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (row[j] - mu) * inv;
  }
  return make_result(x.shape(), std::move(out), {x}, [d, rows, rstd](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const auto& y = self.values;
    const auto& g = self.grad;
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      double gmean = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        gmean += g[r * d + j];
        gy += g[r * d + j] * y[r * d + j];
      }
      gmean *= inv_d;
      gy *= inv_d;
      const double inv = (*rstd)[r];
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t k = r * d + j;
        gx[k] += inv * (g[k] - gmean - y[k] * gy);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias must have shape (" + std::to_string(d) + ")");
  }
  return add(mul(layer_norm(x, eps), gain), bias);
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_defined(table, "embedding");
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2");
  const std::size_t rows = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * width);
  const auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ArgumentError("embedding: id " + std::to_string(idx[i]) + " out of range [0, " +
                          std::to_string(rows) + ")");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(idx[i] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return make_result({idx.size(), width}, std::move(out), {table}, [idx, width](Node& self) {
    auto& gt = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < width; ++j) gt[idx[i] * width + j] += self.grad[i * width + j];
    }
  });
}

Tensor seeded_normal(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.normal();
  return Tensor::from(shape, std::move(values));
}

}  // namespace rae
