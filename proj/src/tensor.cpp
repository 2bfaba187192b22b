// Copyright 2026 The Cotask Authors. All Rights Reserved.
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

#include "cotask/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "cotask/errors.hpp"

namespace cotask {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ColVec = Eigen::Map<const Eigen::VectorXd>;

thread_local bool g_recording = true;

using detail::Buffer;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr new_node(Shape shape, Buffer value) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

// Builds the result of an op and, when recording applies, hooks it onto the
// tape with the given backward rule.
Tensor make_result(const char* op, Shape shape, Buffer value,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> rule) {
  auto out = new_node(std::move(shape), std::move(value));
  out->op = op;
  bool needs = false;
  if (g_recording) {
    for (const auto& t : inputs) needs = needs || t.node().requires_grad;
  }
  if (needs) {
    out->requires_grad = true;
    out->leaf = false;
    out->parents.reserve(inputs.size());
    for (const auto& t : inputs) out->parents.push_back(t.node_ptr());
    out->backward = std::move(rule);
  }
  return Tensor(std::move(out));
}

Tensor make_result_n(const char* op, Shape shape, Buffer value,
                     std::span<const Tensor> inputs,
                     std::function<void(Node&)> rule) {
  auto out = new_node(std::move(shape), std::move(value));
  out->op = op;
  bool needs = false;
  if (g_recording) {
    for (const auto& t : inputs) needs = needs || t.node().requires_grad;
  }
  if (needs) {
    out->requires_grad = true;
    out->leaf = false;
    for (const auto& t : inputs) out->parents.push_back(t.node_ptr());
    out->backward = std::move(rule);
  }
  return Tensor(std::move(out));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_to_string(a) + " and " + shape_to_string(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_to_string(t.shape()));
  }
}

enum class Bcast { same, row, scalar };

Bcast broadcast_kind(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::same;
  const std::size_t bs = shape_size(b);
  if (bs == 1) return Bcast::scalar;
  if (a.size() == 2 && bs == a[1] &&
      (b.size() == 1 || (b.size() == 2 && b[0] == 1))) {
    return Bcast::row;
  }
  shape_fail(op, a, b);
}

inline std::size_t bidx(Bcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Bcast::same:
      return i;
    case Bcast::row:
      return i % cols;
    case Bcast::scalar:
      return 0;
  }
  return 0;
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t axis = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.axis = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

// ---- shape helpers ----------------------------------------------------------

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

detail::Buffer& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  auto node = new_node(std::move(shape), Buffer(n, value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape) + " holds " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = new_node(std::move(shape), Buffer(values.begin(), values.end()));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

detail::Node& Tensor::node() const {
  if (!node_) throw StateError("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }
std::size_t Tensor::size() const { return node().value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(s));
  }
  return s[axis];
}

std::span<const double> Tensor::values() const { return node().value; }

std::span<double> Tensor::mutable_values() {
  auto& n = node();
  if (!n.leaf) throw StateError("only leaf tensors can be modified in place");
  return n.value;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item: tensor of shape " + shape_to_string(shape()) +
                     " is not a scalar");
  }
  return node().value[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool on) {
  auto& n = node();
  if (!n.leaf) throw StateError("requires_grad can only be changed on leaves");
  n.requires_grad = on;
}

bool Tensor::is_leaf() const { return node().leaf; }
bool Tensor::has_grad() const { return !node().grad.empty(); }
std::span<const double> Tensor::grad() const { return node().grad; }
void Tensor::zero_grad() { Buffer().swap(node().grad); }

Tensor Tensor::clone(bool requires_grad) const {
  auto copy = new_node(shape(), node().value);
  copy->requires_grad = requires_grad;
  return Tensor(std::move(copy));
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() noexcept { return g_recording; }

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_fail("matmul", a.shape(), b.shape());
  Buffer out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [m, k, n](Node& self) {
                       ConstMap g(self.grad.data(), m, n);
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         MutMap(pa.ensure_grad().data(), m, k).noalias() +=
                             g * ConstMap(pb.value.data(), k, n).transpose();
                       }
                       if (pb.requires_grad) {
                         MutMap(pb.ensure_grad().data(), k, n).noalias() +=
                             ConstMap(pa.value.data(), m, k).transpose() * g;
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", w, 2);
  const auto n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in) shape_fail("linear", x.shape(), w.shape());
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != out_dim) shape_fail("linear", w.shape(), bias.shape());
  Buffer out(n * out_dim);
  MutMap o(out.data(), n, out_dim);
  o.noalias() = ConstMap(x.values().data(), n, in) *
                ConstMap(w.values().data(), out_dim, in).transpose();
  if (has_bias) {
    o.rowwise() += ColVec(bias.values().data(), out_dim).transpose();
    return make_result("linear", {n, out_dim}, std::move(out), {x, w, bias},
                       [n, in, out_dim](Node& self) {
                         ConstMap g(self.grad.data(), n, out_dim);
                         Node& px = *self.parents[0];
                         Node& pw = *self.parents[1];
                         Node& pb = *self.parents[2];
                         if (px.requires_grad) {
                           MutMap(px.ensure_grad().data(), n, in).noalias() +=
                               g * ConstMap(pw.value.data(), out_dim, in);
                         }
                         if (pw.requires_grad) {
                           MutMap(pw.ensure_grad().data(), out_dim, in).noalias() +=
                               g.transpose() * ConstMap(px.value.data(), n, in);
                         }
                         if (pb.requires_grad) {
                           Eigen::Map<Eigen::RowVectorXd>(pb.ensure_grad().data(), out_dim) +=
                               g.colwise().sum();
                         }
                       });
  }
  return make_result("linear", {n, out_dim}, std::move(out), {x, w},
                     [n, in, out_dim](Node& self) {
                       ConstMap g(self.grad.data(), n, out_dim);
                       Node& px = *self.parents[0];
                       Node& pw = *self.parents[1];
                       if (px.requires_grad) {
                         MutMap(px.ensure_grad().data(), n, in).noalias() +=
                             g * ConstMap(pw.value.data(), out_dim, in);
                       }
                       if (pw.requires_grad) {
                         MutMap(pw.ensure_grad().data(), out_dim, in).noalias() +=
                             g.transpose() * ConstMap(px.value.data(), n, in);
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const auto r = x.dim(0), c = x.dim(1);
  Buffer out(r * c);
  MutMap(out.data(), c, r) = ConstMap(x.values().data(), r, c).transpose();
  return make_result("transpose", {c, r}, std::move(out), {x}, [r, c](Node& self) {
    MutMap(self.parents[0]->ensure_grad().data(), r, c) +=
        ConstMap(self.grad.data(), c, r).transpose();
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) shape_fail("reshape", x.shape(), shape);
  Buffer out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---- elementwise ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.size() == 1 && b.size() != 1) return add(b, a);
  const auto kind = broadcast_kind("add", a.shape(), b.shape());
  const std::size_t cols = a.rank() == 2 ? a.dim(1) : a.size();
  const auto av = a.values(), bv = b.values();
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[bidx(kind, i, cols)];
  return make_result("add", a.shape(), std::move(out), {a, b}, [kind, cols](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[bidx(kind, i, cols)] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind("sub", a.shape(), b.shape());
  const std::size_t cols = a.rank() == 2 ? a.dim(1) : a.size();
  const auto av = a.values(), bv = b.values();
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[bidx(kind, i, cols)];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [kind, cols](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[bidx(kind, i, cols)] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.size() == 1 && b.size() != 1) return mul(b, a);
  const auto kind = broadcast_kind("mul", a.shape(), b.shape());
  const std::size_t cols = a.rank() == 2 ? a.dim(1) : a.size();
  const auto av = a.values(), bv = b.values();
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[bidx(kind, i, cols)];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [kind, cols](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb.value[bidx(kind, i, cols)];
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[bidx(kind, i, cols)] += g[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  const auto xv = x.values();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

namespace {
inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.values();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  return make_result("sigmoid", x.shape(), std::move(out), {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor gelu(const Tensor& x) {
  const auto xv = x.values();
  const bool track = g_recording && x.requires_grad();
  Buffer out(xv.size());
  Buffer slope(track ? xv.size() : 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    out[i] = 0.5 * v * (1.0 + t);
    if (track) {
      slope[i] = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    }
  }
  return make_result("gelu", x.shape(), std::move(out), {x},
                     [slope = std::move(slope)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * slope[i];
                     });
}

// ---- reductions -------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result("sum", {1}, {s}, {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const auto xv = x.values();
  const double n = static_cast<double>(xv.size());
  const double s = std::accumulate(xv.begin(), xv.end(), 0.0) / n;
  return make_result("mean", {1}, {s}, {x}, [n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0] / n;
  });
}

Tensor mean_over_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("mean_over_axis: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_to_string(x.shape()));
  }
  const auto sp = split_at(x.shape(), axis);
  if (sp.axis == 0) throw ShapeError("mean_over_axis: empty axis");
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.shape()[i]);
  if (out_shape.empty()) out_shape = {1};
  const auto xv = x.values();
  Buffer out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t a = 0; a < sp.axis; ++a)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xv[(o * sp.axis + a) * sp.inner + i];
  const double n = static_cast<double>(sp.axis);
  for (auto& v : out) v /= n;
  return make_result("mean_over_axis", std::move(out_shape), std::move(out), {x},
                     [sp, n](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t a = 0; a < sp.axis; ++a)
                           for (std::size_t i = 0; i < sp.inner; ++i)
                             g[(o * sp.axis + a) * sp.inner + i] +=
                                 self.grad[o * sp.inner + i] / n;
                     });
}

// ---- normalization ----------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank("layer_norm", x, 2);
  const auto rows = x.dim(0), d = x.dim(1);
  if (gain.size() != d) shape_fail("layer_norm", x.shape(), gain.shape());
  if (bias.size() != d) shape_fail("layer_norm", x.shape(), bias.shape());
  const auto xv = x.values(), gv = gain.values(), bv = bias.values();
  Buffer out(rows * d), xhat(rows * d), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", {rows, d}, std::move(out), {x, gain, bias},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& g = self.grad;
        if (pg.requires_grad) {
          auto& gg = pg.ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0, m2 = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[r * d + j] * pg.value[j];
              m1 += dxh;
              m2 += dxh * xhat[r * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[r * d + j] * pg.value[j];
              gx[r * d + j] += rstd[r] * (dxh - m1 - xhat[r * d + j] * m2);
            }
          }
        }
      });
}

Tensor softmax_over_axis(const Tensor& x, std::size_t axis,
                         std::span<const std::uint8_t> keep) {
  require_rank("softmax_over_axis", x, 2);
  if (axis > 1) throw ShapeError("softmax_over_axis: axis must be 0 or 1");
  const auto rows = x.dim(0), cols = x.dim(1);
  const std::size_t len = axis == 1 ? cols : rows;
  const std::size_t groups = axis == 1 ? rows : cols;
  if (!keep.empty() && keep.size() != len) {
    throw ShapeError("softmax_over_axis: mask length " + std::to_string(keep.size()) +
                     " does not match axis length " + std::to_string(len));
  }
  // element k of group gi lives at base(gi) + k * stride
  const std::size_t stride = axis == 1 ? 1 : cols;
  auto base = [axis, cols](std::size_t gi) { return axis == 1 ? gi * cols : gi; };
  std::vector<std::uint8_t> kept(keep.begin(), keep.end());
  auto is_kept = [&kept](std::size_t k) { return kept.empty() || kept[k] != 0; };

  const auto xv = x.values();
  Buffer out(xv.size(), 0.0);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t b0 = base(gi);
    double mx = -INFINITY;
    for (std::size_t k = 0; k < len; ++k)
      if (is_kept(k)) mx = std::max(mx, xv[b0 + k * stride]);
    if (mx == -INFINITY) continue;  // every position masked: all zeros
    double z = 0;
    for (std::size_t k = 0; k < len; ++k) {
      if (!is_kept(k)) continue;
      const double e = std::exp(xv[b0 + k * stride] - mx);
      out[b0 + k * stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[b0 + k * stride] /= z;
  }
  return make_result("softmax_over_axis", x.shape(), std::move(out), {x},
                     [groups, len, stride, axis, cols](Node& self) {
                       auto& gx = self.parents[0]->ensure_grad();
                       const auto& g = self.grad;
                       const auto& y = self.value;
                       for (std::size_t gi = 0; gi < groups; ++gi) {
                         const std::size_t b0 = axis == 1 ? gi * cols : gi;
                         double dot = 0;
                         for (std::size_t k = 0; k < len; ++k)
                           dot += g[b0 + k * stride] * y[b0 + k * stride];
                         for (std::size_t k = 0; k < len; ++k) {
                           const std::size_t i = b0 + k * stride;
                           gx[i] += y[i] * (g[i] - dot);
                         }
                       }
                     });
}

Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> lengths, std::size_t heads,
                         std::span<const std::uint8_t> keep) {
  require_rank("segment_attention", q, 2);
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    shape_fail("segment_attention", q.shape(), k.shape() != q.shape() ? k.shape() : v.shape());
  }
  const std::size_t rows = q.dim(0), d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("segment_attention: " + std::to_string(d) + " columns do not split into " +
                     std::to_string(heads) + " heads");
  }
  if (std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}) != rows) {
    throw ShapeError("segment_attention: segment lengths do not add up to " +
                     std::to_string(rows) + " rows");
  }
  if (!keep.empty() && keep.size() != rows) {
    throw ShapeError("segment_attention: mask length " + std::to_string(keep.size()) +
                     " does not match " + std::to_string(rows) + " rows");
  }
  using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
  using MutStrided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<std::size_t> segs(lengths.begin(), lengths.end());
  std::vector<std::uint8_t> kept(keep.begin(), keep.end());

  // attention weights of every (segment, head), kept for the backward pass
  std::vector<std::size_t> p_offset;
  std::size_t p_total = 0;
  for (const std::size_t n : segs) {
    p_offset.push_back(p_total);
    p_total += heads * n * n;
  }
  Buffer probs(p_total, 0.0);
  Buffer out(rows * d, 0.0);
  const double* qv = q.values().data();
  const double* kv = k.values().data();
  const double* vv = v.values().data();
  std::size_t row0 = 0;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const std::size_t n = segs[s];
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t at = row0 * d + h * dh;
      MutMap p(probs.data() + p_offset[s] + h * n * n, n, n);
      p.noalias() = Strided(qv + at, n, dh, Eigen::OuterStride<>(d)) *
                    Strided(kv + at, n, dh, Eigen::OuterStride<>(d)).transpose();
      p *= inv_sqrt;
      for (std::size_t i = 0; i < n; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < n; ++j)
          if (kept.empty() || kept[row0 + j]) mx = std::max(mx, p(i, j));
        double z = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const bool on = (kept.empty() || kept[row0 + j]) && mx != -INFINITY;
          p(i, j) = on ? std::exp(p(i, j) - mx) : 0.0;
          z += p(i, j);
        }
        if (z > 0) p.row(i) /= z;
      }
      MutStrided(out.data() + at, n, dh, Eigen::OuterStride<>(d)).noalias() =
          p * Strided(vv + at, n, dh, Eigen::OuterStride<>(d));
    }
    row0 += n;
  }
  return make_result(
      "segment_attention", {rows, d}, std::move(out), {q, k, v},
      [segs = std::move(segs), p_offset = std::move(p_offset), probs = std::move(probs), heads,
       d, dh, inv_sqrt](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Node& pv = *self.parents[2];
        double* gq = pq.requires_grad ? pq.ensure_grad().data() : nullptr;
        double* gk = pk.requires_grad ? pk.ensure_grad().data() : nullptr;
        double* gv = pv.requires_grad ? pv.ensure_grad().data() : nullptr;
        RowMat dp, ds;
        std::size_t row0 = 0;
        for (std::size_t s = 0; s < segs.size(); ++s) {
          const std::size_t n = segs[s];
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t at = row0 * d + h * dh;
            const Eigen::OuterStride<> st(d);
            ConstMap p(probs.data() + p_offset[s] + h * n * n, n, n);
            const Strided go(self.grad.data() + at, n, dh, st);
            if (gv) MutStrided(gv + at, n, dh, st).noalias() += p.transpose() * go;
            if (!gq && !gk) continue;
            dp.noalias() = go * Strided(pv.value.data() + at, n, dh, st).transpose();
            ds.resize(n, n);
            for (std::size_t i = 0; i < n; ++i) {
              const double dot = dp.row(i).dot(p.row(i));
              ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
            }
            ds *= inv_sqrt;
            if (gq) {
              MutStrided(gq + at, n, dh, st).noalias() +=
                  ds * Strided(pk.value.data() + at, n, dh, st);
            }
            if (gk) {
              MutStrided(gk + at, n, dh, st).noalias() +=
                  ds.transpose() * Strided(pq.value.data() + at, n, dh, st);
            }
          }
          row0 += n;
        }
      });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool train) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (!train || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  Buffer mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  const auto xv = x.values();
  Buffer out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return make_result("dropout", x.shape(), std::move(out), {x},
                     [mask = std::move(mask)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                     });
}

// ---- structural -----------------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_fail("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) shape_fail("concat", first, s);
    out_shape[axis] += s[axis];
    widths.push_back(s[axis]);
  }
  const auto sp = split_at(out_shape, axis);
  Buffer out(shape_size(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pv = parts[pi].values();
    const std::size_t w = widths[pi];
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pv.data() + o * w * sp.inner, w * sp.inner,
                  out.data() + (o * sp.axis + offset) * sp.inner);
    offset += w;
  }
  return make_result_n("concat", std::move(out_shape), std::move(out), parts,
                       [sp, widths = std::move(widths)](Node& self) {
                         std::size_t off = 0;
                         for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                           Node& p = *self.parents[pi];
                           const std::size_t w = widths[pi];
                           if (p.requires_grad) {
                             auto& g = p.ensure_grad();
                             for (std::size_t o = 0; o < sp.outer; ++o)
                               for (std::size_t k = 0; k < w * sp.inner; ++k)
                                 g[o * w * sp.inner + k] +=
                                     self.grad[(o * sp.axis + off) * sp.inner + k];
                           }
                           off += w;
                         }
                       });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank()) throw ShapeError("slice: axis out of range");
  if (begin > end || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + shape_to_string(x.shape()));
  }
  const auto sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t w = end - begin;
  const auto xv = x.values();
  Buffer out(sp.outer * w * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(xv.data() + (o * sp.axis + begin) * sp.inner, w * sp.inner,
                out.data() + o * w * sp.inner);
  return make_result("slice", std::move(out_shape), std::move(out), {x},
                     [sp, w, begin](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t o = 0; o < sp.outer; ++o)
                         for (std::size_t k = 0; k < w * sp.inner; ++k)
                           g[(o * sp.axis + begin) * sp.inner + k] +=
                               self.grad[o * w * sp.inner + k];
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const int> rows) {
  require_rank("gather_rows", table, 2);
  const auto v = table.dim(0), d = table.dim(1);
  std::vector<int> ids(rows.begin(), rows.end());
  Buffer out(ids.size() * d);
  const auto tv = table.values();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= v) {
      throw ShapeError("gather_rows: row " + std::to_string(ids[r]) +
                       " out of range for table " + shape_to_string(table.shape()));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * d, d, out.data() + r * d);
  }
  const std::size_t n = ids.size();
  return make_result("gather_rows", {n, d}, std::move(out), {table},
                     [d, ids = std::move(ids)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < ids.size(); ++r)
                         for (std::size_t j = 0; j < d; ++j)
                           g[static_cast<std::size_t>(ids[r]) * d + j] += self.grad[r * d + j];
                     });
}

Tensor element(const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.size()) {
    throw ShapeError("element: index " + std::to_string(flat_index) +
                     " out of range for shape " + shape_to_string(x.shape()));
  }
  return make_result("element", {1}, {x.values()[flat_index]}, {x},
                     [flat_index](Node& self) {
                       self.parents[0]->ensure_grad()[flat_index] += self.grad[0];
                     });
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets) {
  if (probs.size() != targets.size()) {
    throw ShapeError("binary_cross_entropy: " + std::to_string(probs.size()) +
                     " probabilities vs " + std::to_string(targets.size()) + " targets");
  }
  const auto pv = probs.values();
  const double n = static_cast<double>(pv.size());
  double total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], kBceClamp, 1.0 - kBceClamp);
    total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  Buffer y(targets.begin(), targets.end());
  return make_result("binary_cross_entropy", {1}, {total / n}, {probs},
                     [n, y = std::move(y)](Node& self) {
                       Node& pp = *self.parents[0];
                       auto& g = pp.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double p = pp.value[i];
                         if (p < kBceClamp || p > 1.0 - kBceClamp) continue;
                         g[i] += self.grad[0] * (-(y[i] / p) + (1.0 - y[i]) / (1.0 - p)) / n;
                       }
                     });
}

// ---- backward -------------------------------------------------------------------------

void backward(const Tensor& root) {
  Node& r = root.node();
  if (r.value.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " + shape_to_string(r.shape));
  }
  if (r.consumed) {
    throw StateError("backward: the tape of this root was already consumed");
  }
  if (!r.requires_grad) {
    throw StateError("backward: root does not depend on any tensor that requires grad");
  }

  // iterative post-order DFS yields a topological order (inputs first)
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&r, 0}};
  seen.insert(&r);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(n);
    stack.pop_back();
  }

  for (Node* n : order) {
    if (n->leaf && !n->grad.empty()) {
      throw StateError("backward: a leaf still holds a gradient from a previous pass; "
                       "call zero_grad() first");
    }
    if (!n->leaf && n->consumed) {
      throw StateError(std::string("backward: graph passes through a released '") + n->op +
                       "' node");
    }
  }

  r.ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }

  for (Node* n : order) {
    if (n->leaf) continue;
    n->parents.clear();
    n->backward = nullptr;
    n->consumed = true;
    Buffer().swap(n->grad);
  }
}

std::vector<std::vector<double>> finite_difference_grad(const std::function<double()>& f,
                                                        std::span<const Tensor> params,
                                                        double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_grad: eps must be positive");
  NoGradGuard no_grad;
  const double f0 = f();
  const double f1 = f();
  if (!(f0 == f1)) {
    throw OracleError("finite_difference_grad: objective returned " + std::to_string(f0) +
                      " and " + std::to_string(f1) + " at the same point");
  }
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    Tensor t = p;
    auto w = t.mutable_values();
    std::vector<double> g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double fp = f();
      w[i] = orig - eps;
      const double fm = f();
      w[i] = orig;
      g[i] = (fp - fm) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace cotask
