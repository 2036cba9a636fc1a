#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Every op's backward rule is itself
// written in terms of Var ops, so when grad() runs with create_graph the
// returned gradients are ordinary graph nodes and can be differentiated again
// (reverse-over-reverse). Without create_graph the backward pass runs under a
// NoGradGuard and only values are produced.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metareid/tensor.hpp"

namespace metareid {

template <typename T>
class Var;

/// Maps (node output, upstream gradient) to one gradient per parent. An empty
/// Var in the result means "no contribution".
template <typename T>
using BackwardFn = std::function<std::vector<Var<T>>(const Var<T>& out, const Var<T>& grad_out)>;

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<Var<T>> parents;
  BackwardFn<T> backward;
  bool requires_grad = false;
  const char* op = "leaf";
};

/// Thread-local switch controlling whether new ops record graph edges.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class EnableGradGuard {
 public:
  EnableGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(true); }
  ~EnableGradGuard() { GradMode::set_enabled(previous_); }
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Var {
 public:
  Var() = default;

  /// A differentiable input.
  static Var leaf(Tensor<T> value, bool requires_grad = true) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }

  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  static Var scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  /// Records an op result. Parents that do not require grad are not tracked,
  /// and nothing is tracked while GradMode is off.
  static Var make(const char* op, Tensor<T> value, std::vector<Var> parents, BackwardFn<T> backward);

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Tensor<T>& value() const { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] std::size_t numel() const { return node_->value.numel(); }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
  [[nodiscard]] const char* op() const { return node_->op; }
  [[nodiscard]] T item() const { return node_->value.item(); }

  /// Same value, cut from the graph.
  [[nodiscard]] Var detach() const { return constant(node_->value); }

  [[nodiscard]] const Node<T>* id() const { return node_.get(); }
  [[nodiscard]] Node<T>& node() const { return *node_; }

 private:
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<Node<T>> node_;
};

struct GradOptions {
  /// Record the backward pass so the results can be differentiated again.
  bool create_graph = false;
  /// Return zeros for inputs the output does not depend on instead of failing.
  bool allow_unused = false;
};

/// d(output)/d(wrt[i]) for a scalar output. Each result has its input's shape.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& output, std::span<const Var<T>> wrt, GradOptions options = {});

template <typename T>
Var<T> grad(const Var<T>& output, const Var<T>& wrt, GradOptions options = {}) {
  return grad(output, std::span<const Var<T>>(&wrt, 1), options).front();
}

// ---------------------------------------------------------------------------
// Ops. Binary elementwise ops accept equal shapes, a rank-1 operand matching
// the trailing extent of a matrix (broadcast over the leading batch axis), or
// a single-element operand.
// ---------------------------------------------------------------------------

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> neg(const Var<T>& a);
template <typename T> Var<T> scale(const Var<T>& a, double c);
template <typename T> Var<T> add_scalar(const Var<T>& a, double c);

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);

template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);
/// Backward clamps the denominator at kSqrtEps so sqrt(0) has a finite slope.
template <typename T> Var<T> sqrt(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> clamp_min(const Var<T>& a, double lo);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
/// [B,N] -> [N]
template <typename T> Var<T> sum_rows(const Var<T>& a);
template <typename T> Var<T> mean_rows(const Var<T>& a);
/// Population variance along the batch axis, [B,N] -> [N].
template <typename T> Var<T> var_rows(const Var<T>& a);
/// [B,N] -> [B]
template <typename T> Var<T> sum_cols(const Var<T>& a);
/// [N] -> [B,N]
template <typename T> Var<T> expand_rows(const Var<T>& v, std::size_t rows);
/// [B] -> [B,N]
template <typename T> Var<T> expand_cols(const Var<T>& v, std::size_t cols);
/// single element -> shape
template <typename T> Var<T> expand_scalar(const Var<T>& s, const Shape& shape);

/// [B,M] -> [B]
template <typename T> Var<T> logsumexp_rows(const Var<T>& a);
/// Squared Euclidean distance between every pair of rows, [B,E] -> [B,B].
template <typename T> Var<T> pairwise_sqdist(const Var<T>& x);
/// Euclidean distance between rows. The diagonal is exactly 0 with zero gradient.
template <typename T> Var<T> pairwise_dist(const Var<T>& x);

/// out[i] = a(rows[i], cols[i])
template <typename T>
Var<T> gather(const Var<T>& a, std::vector<std::size_t> rows, std::vector<std::size_t> cols);
/// Adjoint of gather: zeros of `shape` with v[i] added at (rows[i], cols[i]).
template <typename T>
Var<T> scatter(const Var<T>& v, std::vector<std::size_t> rows, std::vector<std::size_t> cols,
               Shape shape);

template <typename T> Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T> Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t end);
/// Embeds a into zeros with `total` rows, starting at row `begin`.
template <typename T> Var<T> pad_rows(const Var<T>& a, std::size_t begin, std::size_t total);

inline constexpr double kSqrtEps = 1e-12;

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a) { return neg(a); }
template <typename T> Var<T> operator*(double c, const Var<T>& a) { return scale(a, c); }

}  // namespace metareid
