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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "cotask/rng.hpp"

namespace cotask {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_to_string(const Shape& shape);

namespace detail {

// Every buffer starts on the same boundary, so vectorized reductions split
// work identically from run to run and results are bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

// One entry of the autodiff tape. Non-leaf nodes keep their inputs alive in
// `parents` until backward() releases them.
struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Buffer& ensure_grad();
};

}  // namespace detail

/// Dense row-major double tensor with reverse-mode autodiff.
///
/// A Tensor is a cheap handle; copies alias the same storage. Ops are free
/// functions below. An op records itself on the tape when any input
/// requires a gradient and recording is not suspended by NoGradGuard.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  // Only leaves may be written in place (parameter updates, perturbations).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat) const { return values()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Deep copy of the value as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  detail::Node& node() const;
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Suspends tape recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled() noexcept;

// ---- ops ------------------------------------------------------------------
// Rank-2 operands are [rows, cols]. "Row broadcast" means a [cols] or
// [1, cols] operand applied to every row of a [rows, cols] operand; a size-1
// operand broadcasts to everything.

Tensor matmul(const Tensor& a, const Tensor& b);
// x [n, in] times w [out, in] transposed, plus optional bias [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_over_axis(const Tensor& x, std::size_t axis);

// Normalizes each row of x [n, d]; gain and bias are [d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Softmax along `axis` of a rank-2 tensor. When `keep` is non-empty it has
// one entry per position along `axis`; positions with keep == 0 get exactly
// zero probability, as if their logits were -inf.
Tensor softmax_over_axis(const Tensor& x, std::size_t axis,
                         std::span<const std::uint8_t> keep = {});

// Multi-head scaled dot-product attention over row-packed sequences. q, k
// and v are [N, d] where N is the sum of `lengths`; rows attend only to rows
// of their own segment whose `keep` entry (one per row, empty = all) is set.
// Heads split the columns into `heads` equal blocks.
Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> lengths, std::size_t heads,
                         std::span<const std::uint8_t> keep = {});

// Inverted dropout. Identity (same handle) when train is false or p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool train);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor gather_rows(const Tensor& table, std::span<const int> rows);
Tensor element(const Tensor& x, std::size_t flat_index);

// Mean binary cross-entropy of probabilities against 0/1 targets, with
// probabilities clamped to [kBceClamp, 1 - kBceClamp] before the log.
inline constexpr double kBceClamp = 1e-12;
Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets);

// ---- backward / oracles ---------------------------------------------------

/// Fills the gradient of every requires_grad leaf reachable from `root`.
/// The tape is released afterwards; a second call on the same root, or a
/// call that would accumulate into a leaf that still holds a gradient,
/// raises StateError.
void backward(const Tensor& root);

/// Central differences (f(w + eps) - f(w - eps)) / (2 eps) per coordinate of
/// each tensor in `params`. `f` must read the parameters in place and be
/// deterministic; it is evaluated twice at the start to check that.
std::vector<std::vector<double>> finite_difference_grad(
    const std::function<double()>& f, std::span<const Tensor> params,
    double eps);

}  // namespace cotask
