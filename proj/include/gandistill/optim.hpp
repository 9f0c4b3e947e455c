#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "gandistill/tensor.hpp"

namespace gandistill {

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.value->n(), p.value->c(), p.value->h(), p.value->w());
      v_.emplace_back(p.value->n(), p.value->c(), p.value->h(), p.value->w());
    }
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& w = *params_[k].value;
      const auto& g = *params_[k].grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  void zero_grad() { zero_grads(params_); }

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

  /// Moment tensors, named after the parameters they track.
  BufferList<T> state(const std::string& prefix) {
    BufferList<T> out;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      out.push_back({prefix + ".m." + params_[k].name, &m_[k]});
      out.push_back({prefix + ".v." + params_[k].name, &v_[k]});
    }
    return out;
  }

 private:
  ParamList<T> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace gandistill
