#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "metareid/tensor.hpp"

namespace metareid {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;
};

/// One AdamW step in place. A zero learning rate advances the moments but
/// leaves the parameters untouched.
template <typename T>
void adamw_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
                AdamState<T>& state, double lr, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adamw_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    const Tensor<T>& g = grads[k];
    if (g.shape() != p.shape()) {
      throw ShapeError("adamw_step: gradient " + shape_str(g.shape()) + " for parameter " +
                       shape_str(p.shape()));
    }
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = static_cast<T>(cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi);
      v[i] = static_cast<T>(cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi);
      if (lr == 0.0) continue;
      const double m_hat = static_cast<double>(m[i]) / bc1;
      const double v_hat = static_cast<double>(v[i]) / bc2;
      const double update =
          m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * static_cast<double>(p[i]);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * update);
    }
  }
}

/// Global L2 norm over a list of tensors.
template <typename T>
double global_norm(std::span<const Tensor<T>> tensors) {
  double acc = 0.0;
  for (const auto& t : tensors) {
    for (T v : t.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(acc);
}

/// Rescales in place so the global norm is at most max_norm. Returns the norm
/// before clipping.
template <typename T>
double clip_global_norm(std::span<Tensor<T>> tensors, double max_norm) {
  const double norm = global_norm<T>(tensors);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& t : tensors) {
      for (auto& v : t.data()) v *= factor;
    }
  }
  return norm;
}

}  // namespace metareid
