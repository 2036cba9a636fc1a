#include "metareid/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "metareid/kernels.hpp"

namespace metareid {

namespace {
thread_local bool grad_mode_enabled = true;
}  // namespace

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

template <typename T>
Var<T> Var<T>::make(const char* op, Tensor<T> value, std::vector<Var> parents,
                    BackwardFn<T> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  const bool track =
      GradMode::enabled() &&
      std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

namespace {

template <typename T>
const Var<T>& parent(const Var<T>& out, std::size_t i) {
  return out.node().parents[i];
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(s));
  }
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

template <typename T>
Var<T> reshape(const Var<T>& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (shape_numel(shape) != a.numel()) shape_fail("reshape", a.shape(), shape);
  return Var<T>::make("reshape", a.value().reshaped(shape), {a},
                      [](const Var<T>& out, const Var<T>& g) {
                        return std::vector<Var<T>>{reshape(g, parent(out, 0).shape())};
                      });
}

bool is_row_broadcast(const Shape& full, const Shape& v) {
  return full.size() == 2 && v.size() == 1 && v[0] == full[1];
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (nb == 1 && (na != 1 || a.size() >= b.size())) return a;
  if (na == 1) return b;
  if (is_row_broadcast(a, b)) return a;
  if (is_row_broadcast(b, a)) return b;
  shape_fail(op, a, b);
}

template <typename T>
Var<T> broadcast_to(const Var<T>& v, const Shape& target) {
  if (v.shape() == target) return v;
  if (v.numel() == 1) return expand_scalar(v, target);
  return expand_rows(v, target[0]);
}

template <typename T>
Var<T> add_same(const Var<T>& a, const Var<T>& b) {
  return Var<T>::make("add", zip(a.value(), b.value(), std::plus<T>()), {a, b},
                      [](const Var<T>&, const Var<T>& g) { return std::vector<Var<T>>{g, g}; });
}

template <typename T>
Var<T> sub_same(const Var<T>& a, const Var<T>& b) {
  return Var<T>::make("sub", zip(a.value(), b.value(), std::minus<T>()), {a, b},
                      [](const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{g, neg(g)};
                      });
}

template <typename T>
Var<T> mul_same(const Var<T>& a, const Var<T>& b) {
  return Var<T>::make("mul", zip(a.value(), b.value(), std::multiplies<T>()), {a, b},
                      [](const Var<T>& out, const Var<T>& g) {
                        const auto& x = parent(out, 0);
                        const auto& y = parent(out, 1);
                        return std::vector<Var<T>>{mul_same(g, y), mul_same(g, x)};
                      });
}

template <typename T>
Var<T> div_same(const Var<T>& a, const Var<T>& b) {
  return Var<T>::make("div", zip(a.value(), b.value(), std::divides<T>()), {a, b},
                      [](const Var<T>& out, const Var<T>& g) {
                        const auto& y = parent(out, 1);
                        return std::vector<Var<T>>{div_same(g, y),
                                                   neg(div_same(mul_same(g, out), y))};
                      });
}

template <typename T>
Tensor<T> mask_where(const Tensor<T>& a, double threshold) {
  return map(a, [threshold](T v) { return v > static_cast<T>(threshold) ? T{1} : T{0}; });
}

}  // namespace

// ---------------------------------------------------------------------------
// grad
// ---------------------------------------------------------------------------

template <typename T>
std::vector<Var<T>> grad(const Var<T>& output, std::span<const Var<T>> wrt, GradOptions options) {
  if (!output.defined() || output.numel() != 1) {
    throw ShapeError("grad: output must be a scalar, got shape " +
                     (output.defined() ? shape_str(output.shape()) : std::string("<undefined>")));
  }

  // Reverse topological order by iterative post-order DFS.
  std::vector<Var<T>> order;
  if (output.requires_grad()) {
    std::unordered_set<const Node<T>*> visited;
    std::vector<std::pair<Var<T>, std::size_t>> stack;
    stack.emplace_back(output, 0);
    visited.insert(output.id());
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& parents = v.node().parents;
      if (next < parents.size()) {
        const Var<T>& p = parents[next++];
        if (p.requires_grad() && visited.insert(p.id()).second) {
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(v);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<const Node<T>*, Var<T>> grads;
  {
    std::optional<NoGradGuard> no_grad;
    std::optional<EnableGradGuard> with_grad;
    if (options.create_graph) {
      with_grad.emplace();
    } else {
      no_grad.emplace();
    }

    grads.emplace(output.id(), Var<T>::constant(Tensor<T>::ones(output.shape())));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Var<T>& v = *it;
      auto found = grads.find(v.id());
      if (found == grads.end() || !v.node().backward) continue;
      const Var<T> g = found->second;
      std::vector<Var<T>> parent_grads = v.node().backward(v, g);
      const auto& parents = v.node().parents;
      for (std::size_t i = 0; i < parents.size(); ++i) {
        if (!parents[i].requires_grad() || !parent_grads[i].defined()) continue;
        auto [slot, inserted] = grads.try_emplace(parents[i].id(), parent_grads[i]);
        if (!inserted) slot->second = add(slot->second, parent_grads[i]);
      }
    }
  }

  std::vector<Var<T>> result;
  result.reserve(wrt.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto found = grads.find(wrt[i].id());
    if (found == grads.end()) {
      if (!options.allow_unused) {
        throw std::invalid_argument("grad: input " + std::to_string(i) +
                                    " is not reachable from the output");
      }
      result.push_back(Var<T>::constant(Tensor<T>::zeros(wrt[i].shape())));
    } else if (!options.create_graph) {
      result.push_back(found->second.detach());
    } else {
      result.push_back(found->second);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Shape s = broadcast_shape("add", a.shape(), b.shape());
  return add_same(broadcast_to(a, s), broadcast_to(b, s));
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const Shape s = broadcast_shape("sub", a.shape(), b.shape());
  return sub_same(broadcast_to(a, s), broadcast_to(b, s));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Shape s = broadcast_shape("mul", a.shape(), b.shape());
  return mul_same(broadcast_to(a, s), broadcast_to(b, s));
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  const Shape s = broadcast_shape("div", a.shape(), b.shape());
  return div_same(broadcast_to(a, s), broadcast_to(b, s));
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return Var<T>::make("neg", map(a.value(), [](T v) { return -v; }), {a},
                      [](const Var<T>&, const Var<T>& g) { return std::vector<Var<T>>{neg(g)}; });
}

template <typename T>
Var<T> scale(const Var<T>& a, double c) {
  const T k = static_cast<T>(c);
  return Var<T>::make("scale", map(a.value(), [k](T v) { return k * v; }), {a},
                      [c](const Var<T>&, const Var<T>& g) {
                        return std::vector<Var<T>>{scale(g, c)};
                      });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double c) {
  const T k = static_cast<T>(c);
  return Var<T>::make("add_scalar", map(a.value(), [k](T v) { return v + k; }), {a},
                      [](const Var<T>&, const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return Var<T>::make("relu", map(a.value(), [](T v) { return v > T{0} ? v : T{0}; }), {a},
                      [](const Var<T>& out, const Var<T>& g) {
                        auto mask = Var<T>::constant(mask_where(parent(out, 0).value(), 0.0));
                        return std::vector<Var<T>>{mul_same(g, mask)};
                      });
}

template <typename T>
Var<T> clamp_min(const Var<T>& a, double lo) {
  const T l = static_cast<T>(lo);
  return Var<T>::make("clamp_min", map(a.value(), [l](T v) { return v > l ? v : l; }), {a},
                      [lo](const Var<T>& out, const Var<T>& g) {
                        auto mask = Var<T>::constant(mask_where(parent(out, 0).value(), lo));
                        return std::vector<Var<T>>{mul_same(g, mask)};
                      });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return Var<T>::make("square", map(a.value(), [](T v) { return v * v; }), {a},
                      [](const Var<T>& out, const Var<T>& g) {
                        return std::vector<Var<T>>{mul_same(g, scale(parent(out, 0), 2.0))};
                      });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  return Var<T>::make("sqrt", map(a.value(), [](T v) { return std::sqrt(v); }), {a},
                      [](const Var<T>& out, const Var<T>& g) {
                        return std::vector<Var<T>>{
                            div_same(g, scale(clamp_min(out, kSqrtEps), 2.0))};
                      });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return Var<T>::make("exp", map(a.value(), [](T v) { return std::exp(v); }), {a},
                      [](const Var<T>& out, const Var<T>& g) {
                        return std::vector<Var<T>>{mul_same(g, out)};
                      });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return Var<T>::make("log", map(a.value(), [](T v) { return std::log(v); }), {a},
                      [](const Var<T>& out, const Var<T>& g) {
                        return std::vector<Var<T>>{div_same(g, parent(out, 0))};
                      });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) shape_fail("matmul", a.shape(), b.shape());
  Tensor<T> out(Shape{m, n});
  kernels::matmul<T>(a.value().data(), b.value().data(), out.data(), m, k, n);
  return Var<T>::make("matmul", std::move(out), {a, b}, [](const Var<T>& o, const Var<T>& g) {
    const auto& x = parent(o, 0);
    const auto& y = parent(o, 1);
    return std::vector<Var<T>>{matmul(g, transpose(y)), matmul(transpose(x), g)};
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_rank("transpose", a.shape(), 2);
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  Tensor<T> out(Shape{c, r});
  kernels::transpose<T>(a.value().data(), out.data(), r, c);
  return Var<T>::make("transpose", std::move(out), {a}, [](const Var<T>&, const Var<T>& g) {
    return std::vector<Var<T>>{transpose(g)};
  });
}

// ---------------------------------------------------------------------------
// Reductions and their adjoint expansions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc{0};
  for (T v : a.value().data()) acc += v;
  return Var<T>::make("sum", Tensor<T>::scalar(acc), {a}, [](const Var<T>& out, const Var<T>& g) {
    return std::vector<Var<T>>{expand_scalar(g, parent(out, 0).shape())};
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

template <typename T>
Var<T> expand_scalar(const Var<T>& s, const Shape& shape) {
  if (s.numel() != 1) throw ShapeError("expand_scalar: operand has shape " + shape_str(s.shape()));
  return Var<T>::make("expand_scalar", Tensor<T>(shape, s.value()[0]), {s},
                      [](const Var<T>& out, const Var<T>& g) {
                        return std::vector<Var<T>>{reshape(sum(g), parent(out, 0).shape())};
                      });
}

template <typename T>
Var<T> sum_rows(const Var<T>& a) {
  require_rank("sum_rows", a.shape(), 2);
  const std::size_t rows = a.shape()[0];
  const std::size_t cols = a.shape()[1];
  Tensor<T> out(Shape{cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += a.value()(i, j);
  }
  return Var<T>::make("sum_rows", std::move(out), {a}, [](const Var<T>& o, const Var<T>& g) {
    return std::vector<Var<T>>{expand_rows(g, parent(o, 0).shape()[0])};
  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& a) {
  require_rank("mean_rows", a.shape(), 2);
  if (a.shape()[0] == 0) throw ShapeError("mean_rows: no rows");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.shape()[0]));
}

template <typename T>
Var<T> var_rows(const Var<T>& a) {
  const auto centered = sub(a, mean_rows(a));
  return mean_rows(square(centered));
}

template <typename T>
Var<T> expand_rows(const Var<T>& v, std::size_t rows) {
  require_rank("expand_rows", v.shape(), 1);
  const std::size_t cols = v.shape()[0];
  Tensor<T> out(Shape{rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy(v.value().data().begin(), v.value().data().end(), out.row(i).begin());
  }
  return Var<T>::make("expand_rows", std::move(out), {v}, [](const Var<T>&, const Var<T>& g) {
    return std::vector<Var<T>>{sum_rows(g)};
  });
}

template <typename T>
Var<T> sum_cols(const Var<T>& a) {
  require_rank("sum_cols", a.shape(), 2);
  const std::size_t rows = a.shape()[0];
  const std::size_t cols = a.shape()[1];
  Tensor<T> out(Shape{rows});
  for (std::size_t i = 0; i < rows; ++i) {
    T acc{0};
    for (std::size_t j = 0; j < cols; ++j) acc += a.value()(i, j);
    out[i] = acc;
  }
  return Var<T>::make("sum_cols", std::move(out), {a}, [](const Var<T>& o, const Var<T>& g) {
    return std::vector<Var<T>>{expand_cols(g, parent(o, 0).shape()[1])};
  });
}

template <typename T>
Var<T> expand_cols(const Var<T>& v, std::size_t cols) {
  require_rank("expand_cols", v.shape(), 1);
  const std::size_t rows = v.shape()[0];
  Tensor<T> out(Shape{rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = v.value()[i];
  }
  return Var<T>::make("expand_cols", std::move(out), {v}, [](const Var<T>&, const Var<T>& g) {
    return std::vector<Var<T>>{sum_cols(g)};
  });
}

// ---------------------------------------------------------------------------
// Composite kernels
// ---------------------------------------------------------------------------

template <typename T>
Var<T> logsumexp_rows(const Var<T>& a) {
  require_rank("logsumexp_rows", a.shape(), 2);
  const std::size_t rows = a.shape()[0];
  const std::size_t cols = a.shape()[1];
  if (cols == 0) throw ShapeError("logsumexp_rows: zero columns");
  Tensor<T> out(Shape{rows});
  kernels::logsumexp_rows<T>(a.value().data(), out.data(), rows, cols);
  return Var<T>::make("logsumexp_rows", std::move(out), {a}, [](const Var<T>& o, const Var<T>& g) {
    const auto& x = parent(o, 0);
    const std::size_t m = x.shape()[1];
    auto softmax = exp(sub_same(x, expand_cols(o, m)));
    return std::vector<Var<T>>{mul_same(expand_cols(g, m), softmax)};
  });
}

template <typename T>
Var<T> pairwise_sqdist(const Var<T>& x) {
  require_rank("pairwise_sqdist", x.shape(), 2);
  const std::size_t rows = x.shape()[0];
  const std::size_t dim = x.shape()[1];
  Tensor<T> out(Shape{rows, rows});
  kernels::pairwise_sqdist<T>(x.value().data(), out.data(), rows, dim);
  return Var<T>::make("pairwise_sqdist", std::move(out), {x}, [](const Var<T>& o, const Var<T>& g) {
    // d/dx_i sum_ij g_ij |x_i - x_j|^2 = 2 (rowsum(S)_i x_i - (S x)_i), S = g + g^T
    const auto& in = parent(o, 0);
    auto s = add_same(g, transpose(g));
    auto diag_term = mul_same(expand_cols(sum_cols(s), in.shape()[1]), in);
    return std::vector<Var<T>>{scale(sub_same(diag_term, matmul(s, in)), 2.0)};
  });
}

template <typename T>
Var<T> pairwise_dist(const Var<T>& x) {
  const std::size_t n = x.shape().at(0);
  Tensor<T> off_diagonal(Shape{n, n}, T{1});
  for (std::size_t i = 0; i < n; ++i) off_diagonal(i, i) = T{0};
  return sqrt(mul(pairwise_sqdist(x), Var<T>::constant(std::move(off_diagonal))));
}

template <typename T>
Var<T> gather(const Var<T>& a, std::vector<std::size_t> rows, std::vector<std::size_t> cols) {
  require_rank("gather", a.shape(), 2);
  if (rows.size() != cols.size()) throw ShapeError("gather: index lists differ in length");
  Tensor<T> out(Shape{rows.size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.shape()[0] || cols[i] >= a.shape()[1]) {
      throw ShapeError("gather: index out of range for shape " + shape_str(a.shape()));
    }
    out[i] = a.value()(rows[i], cols[i]);
  }
  return Var<T>::make("gather", std::move(out), {a},
                      [rows = std::move(rows), cols = std::move(cols)](const Var<T>& o,
                                                                       const Var<T>& g) {
                        return std::vector<Var<T>>{scatter(g, rows, cols, parent(o, 0).shape())};
                      });
}

template <typename T>
Var<T> scatter(const Var<T>& v, std::vector<std::size_t> rows, std::vector<std::size_t> cols,
               Shape shape) {
  require_rank("scatter", v.shape(), 1);
  require_rank("scatter", shape, 2);
  if (rows.size() != cols.size() || rows.size() != v.shape()[0]) {
    throw ShapeError("scatter: index lists do not match values of shape " + shape_str(v.shape()));
  }
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) out(rows[i], cols[i]) += v.value()[i];
  return Var<T>::make("scatter", std::move(out), {v},
                      [rows = std::move(rows), cols = std::move(cols)](const Var<T>&,
                                                                       const Var<T>& g) {
                        return std::vector<Var<T>>{gather(g, rows, cols)};
                      });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw ShapeError("concat_rows: scalar operand");
  Shape out_shape = first;
  out_shape[0] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      shape_fail("concat_rows", first, s);
    }
    out_shape[0] += s[0];
  }
  std::vector<T> data;
  data.reserve(shape_numel(out_shape));
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  std::vector<Var<T>> parents(parts.begin(), parts.end());
  return Var<T>::make("concat_rows", Tensor<T>(out_shape, std::move(data)), std::move(parents),
                      [](const Var<T>& o, const Var<T>& g) {
                        std::vector<Var<T>> out;
                        std::size_t begin = 0;
                        for (const auto& p : o.node().parents) {
                          const std::size_t n = p.shape()[0];
                          out.push_back(slice_rows(g, begin, begin + n));
                          begin += n;
                        }
                        return out;
                      });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t end) {
  if (a.shape().empty() || begin > end || end > a.shape()[0]) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_str(a.shape()));
  }
  Shape s = a.shape();
  s[0] = end - begin;
  const std::size_t stride = a.value().cols();
  const auto src = a.value().data();
  std::vector<T> data(src.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                      src.begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Var<T>::make("slice_rows", Tensor<T>(s, std::move(data)), {a},
                      [begin](const Var<T>& o, const Var<T>& g) {
                        return std::vector<Var<T>>{pad_rows(g, begin, parent(o, 0).shape()[0])};
                      });
}

template <typename T>
Var<T> pad_rows(const Var<T>& a, std::size_t begin, std::size_t total) {
  if (a.shape().empty() || begin + a.shape()[0] > total) {
    throw ShapeError("pad_rows: cannot place shape " + shape_str(a.shape()) + " at row " +
                     std::to_string(begin) + " of " + std::to_string(total));
  }
  Shape s = a.shape();
  s[0] = total;
  Tensor<T> out(s);
  const std::size_t stride = out.cols();
  std::copy(a.value().data().begin(), a.value().data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(begin * stride));
  const std::size_t n = a.shape()[0];
  return Var<T>::make("pad_rows", std::move(out), {a}, [begin, n](const Var<T>&, const Var<T>& g) {
    return std::vector<Var<T>>{slice_rows(g, begin, begin + n)};
  });
}

// ---------------------------------------------------------------------------

#define METAREID_INSTANTIATE(T)                                                                  \
  template class Var<T>;                                                                         \
  template std::vector<Var<T>> grad<T>(const Var<T>&, std::span<const Var<T>>, GradOptions);     \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> neg<T>(const Var<T>&);                                                         \
  template Var<T> scale<T>(const Var<T>&, double);                                               \
  template Var<T> add_scalar<T>(const Var<T>&, double);                                          \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> transpose<T>(const Var<T>&);                                                   \
  template Var<T> relu<T>(const Var<T>&);                                                        \
  template Var<T> square<T>(const Var<T>&);                                                      \
  template Var<T> sqrt<T>(const Var<T>&);                                                        \
  template Var<T> exp<T>(const Var<T>&);                                                         \
  template Var<T> log<T>(const Var<T>&);                                                         \
  template Var<T> clamp_min<T>(const Var<T>&, double);                                           \
  template Var<T> sum<T>(const Var<T>&);                                                         \
  template Var<T> mean<T>(const Var<T>&);                                                        \
  template Var<T> sum_rows<T>(const Var<T>&);                                                    \
  template Var<T> mean_rows<T>(const Var<T>&);                                                   \
  template Var<T> var_rows<T>(const Var<T>&);                                                    \
  template Var<T> sum_cols<T>(const Var<T>&);                                                    \
  template Var<T> expand_rows<T>(const Var<T>&, std::size_t);                                    \
  template Var<T> expand_cols<T>(const Var<T>&, std::size_t);                                    \
  template Var<T> expand_scalar<T>(const Var<T>&, const Shape&);                                 \
  template Var<T> logsumexp_rows<T>(const Var<T>&);                                              \
  template Var<T> pairwise_sqdist<T>(const Var<T>&);                                             \
  template Var<T> pairwise_dist<T>(const Var<T>&);                                               \
  template Var<T> gather<T>(const Var<T>&, std::vector<std::size_t>, std::vector<std::size_t>);  \
  template Var<T> scatter<T>(const Var<T>&, std::vector<std::size_t>, std::vector<std::size_t>,  \
                             Shape);                                                             \
  template Var<T> concat_rows<T>(std::span<const Var<T>>);                                       \
  template Var<T> slice_rows<T>(const Var<T>&, std::size_t, std::size_t);                        \
  template Var<T> pad_rows<T>(const Var<T>&, std::size_t, std::size_t);

METAREID_INSTANTIATE(float)
METAREID_INSTANTIATE(double)
#undef METAREID_INSTANTIATE

}  // namespace metareid
