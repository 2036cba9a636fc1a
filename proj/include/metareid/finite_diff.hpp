#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "metareid/tensor.hpp"

namespace metareid {

/// Central-difference gradient of a scalar function, one coordinate at a time:
/// (f(theta + h e_i) - f(theta - h e_i)) / 2h.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& theta,
                           T h = T(1e-5)) {
  if (!(h > T{0})) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Tensor<T> probe = theta;
  Tensor<T> out(theta.shape());
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    const T base = theta[i];
    probe[i] = base + h;
    const T up = f(probe);
    probe[i] = base - h;
    const T down = f(probe);
    probe[i] = base;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NonFiniteError("finite_diff_grad: non-finite evaluation at coordinate " +
                           std::to_string(i));
    }
    out[i] = (up - down) / (T{2} * h);
  }
  return out;
}

struct AdaptiveDiff {
  Tensor<double> grad;
  std::size_t refined = 0;  // coordinates evaluated with a step below h0
};

/// Central differences with a step-halving consistency check: the estimate at
/// step h is accepted once it agrees with the estimate at h/10 within
/// max(rel * |D(h/10)|, abs). A kink or jump of a piecewise-smooth f inside
/// [theta - h, theta + h] breaks that agreement and the step keeps shrinking,
/// down to h_min.
inline AdaptiveDiff finite_diff_grad_adaptive(const std::function<double(const Tensor<double>&)>& f,
                                              const Tensor<double>& theta, double h0 = 1e-5,
                                              double h_min = 1e-7, double rel = 1e-6,
                                              double abs = 1e-8) {
  if (!(h0 > 0.0) || !(h_min > 0.0)) {
    throw std::invalid_argument("finite_diff_grad_adaptive: steps must be positive");
  }
  AdaptiveDiff out{Tensor<double>(theta.shape())};
  Tensor<double> probe = theta;
  auto central = [&](std::size_t i, double h) {
    const double base = theta[i];
    probe[i] = base + h;
    const double up = f(probe);
    probe[i] = base - h;
    const double down = f(probe);
    probe[i] = base;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NonFiniteError("finite_diff_grad_adaptive: non-finite evaluation at coordinate " +
                           std::to_string(i));
    }
    return (up - down) / (2.0 * h);
  };
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    double h = h0;
    double d = central(i, h);
    while (h / 10.0 >= h_min) {
      const double finer = central(i, h / 10.0);
      if (std::abs(d - finer) <= std::max(rel * std::abs(finer), abs)) break;
      h /= 10.0;
      d = finer;
    }
    out.grad[i] = d;
    if (h < h0) ++out.refined;
  }
  return out;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
template <typename T>
double max_relative_error(std::span<const T> a, std::span<const T> b, double floor = 1e-4) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a[i]);
    const double y = static_cast<double>(b[i]);
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

}  // namespace metareid
