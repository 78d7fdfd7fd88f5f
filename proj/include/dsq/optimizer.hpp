// dsq/optimizer.hpp

// Copyright 2026  The dsq Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DSQ_OPTIMIZER_HPP_
#define DSQ_OPTIMIZER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "dsq/graph.hpp"

namespace dsq {

struct RAdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Rectified Adam. The adaptive (second-moment) step is used only once the
/// variance of the adaptive learning rate is tractable (rho_t > 4); before
/// that the update is bias-corrected momentum SGD.
template <typename T>
class RAdam {
 public:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  explicit RAdam(RAdamConfig cfg = {}) : cfg_(cfg) {}

  std::uint64_t step() const { return step_; }
  const RAdamConfig &config() const { return cfg_; }
  std::map<std::string, Moments> &moments() { return moments_; }
  const std::map<std::string, Moments> &moments() const { return moments_; }
  void set_step(std::uint64_t s) { step_ = s; }

  /// Length of the approximated simple moving average at step t.
  double Rho(std::uint64_t t) const {
    const double rho_inf = 2.0 / (1.0 - cfg_.beta2) - 1.0;
    const double b2t = std::pow(cfg_.beta2, static_cast<double>(t));
    return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
  }

  void Step(ParameterSet<T> &params, double lr) {
    for (const auto &p : params)
      for (T g : p.grad.data)
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name);
    ++step_;
    const double t = static_cast<double>(step_);
    const double rho_inf = 2.0 / (1.0 - cfg_.beta2) - 1.0;
    const double rho_t = Rho(step_);
    const double bias1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg_.beta2, t);
    const bool adaptive = rho_t > 4.0;
    const double rect =
        adaptive ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                             ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                 : 0.0;
    for (auto &p : params) {
      auto &mo = moments_[p.name];
      if (mo.m.shape != p.value.shape) {
        mo.m = Tensor<T>(p.value.shape);
        mo.v = Tensor<T>(p.value.shape);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.data[i];
        const double m = cfg_.beta1 * mo.m.data[i] + (1.0 - cfg_.beta1) * g;
        const double v = cfg_.beta2 * mo.v.data[i] + (1.0 - cfg_.beta2) * g * g;
        mo.m.data[i] = static_cast<T>(m);
        mo.v.data[i] = static_cast<T>(v);
        const double m_hat = m / bias1;
        double update;
        if (adaptive) {
          const double l = std::sqrt(bias2) / (std::sqrt(v) + cfg_.eps);
          update = lr * rect * m_hat * l;
        } else {
          update = lr * m_hat;
        }
        p.value.data[i] = static_cast<T>(p.value.data[i] - update);
      }
    }
  }

 private:
  RAdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double ClipGradNorm(ParameterSet<T> &params, double max_norm) {
  double sq = 0.0;
  for (const auto &p : params)
    for (T g : p.grad.data) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto &p : params)
      for (auto &g : p.grad.data) g *= s;
  }
  return norm;
}

/// Linear warmup then inverse-square-root decay, peaking at `peak` on step
/// `warmup`.
inline double NoamRate(double peak, std::uint64_t step, std::uint64_t warmup) {
  const double s = static_cast<double>(std::max<std::uint64_t>(step, 1));
  if (warmup == 0) return peak;
  const double w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

}  // namespace dsq

#endif  // DSQ_OPTIMIZER_HPP_
