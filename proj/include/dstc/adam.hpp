#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dstc/error.hpp"
#include "dstc/tensor.hpp"

namespace dstc {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState zeros_like(std::span<Tensor* const> params) {
    AdamState s;
    for (const Tensor* p : params) {
      s.m.emplace_back(p->shape(), 0.0);
      s.v.emplace_back(p->shape(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update at step `t` (1-based).
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                      AdamState& state, std::size_t t, const AdamConfig& cfg) {
  if (t < 1) throw ContractError("adam_step: step index starts at 1");
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    p.require_same_shape(g, "adam_step grad");
    p.require_same_shape(state.m[i], "adam_step state");
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace dstc
