// dsq/gradcheck.hpp

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

#ifndef DSQ_GRADCHECK_HPP_
#define DSQ_GRADCHECK_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsq/graph.hpp"
#include "dsq/rng.hpp"

namespace dsq {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so entries whose true gradient
  // is zero are judged on absolute error. It is multiplied by max(1, |f(x)|)
  // to keep the test invariant to rescaling the loss.
  double floor = 1e-6;
  // 0 checks every entry; otherwise a seeded random subset of this size per
  // tensor.
  std::size_t max_entries = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
  std::string worst;  // "<tensor>[index]" of the largest relative error
};

namespace detail {

inline double RelError(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline std::vector<std::size_t> PickEntries(std::size_t n, std::size_t max_entries, Rng &rng) {
  std::vector<std::size_t> idx;
  if (max_entries == 0 || max_entries >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t k = 0; k < max_entries; ++k)
    idx.push_back(static_cast<std::size_t>(rng.UniformInt(0, static_cast<long>(n) - 1)));
  return idx;
}

inline void Record(GradCheckReport &r, double a, double n, const GradCheckOptions &opt,
                   const std::string &where) {
  const double rel = RelError(a, n, opt.floor);
  r.max_abs_error = std::max(r.max_abs_error, std::abs(a - n));
  if (rel > r.max_rel_error || r.checked == 0) {
    r.max_rel_error = rel;
    r.worst = where;
  }
  ++r.checked;
}

}  // namespace detail

/// Compares the reverse-mode gradient of scalar f(x) with central differences.
/// f must be deterministic; it is evaluated twice up front and any bitwise
/// difference raises NumericError.
template <typename T>
GradCheckReport GradCheck(const std::function<Expr<T>(Graph<T> &, Expr<T>)> &f,
                          const Tensor<T> &x, const GradCheckOptions &opt = {}) {
  auto eval = [&](const Tensor<T> &at) {
    Graph<T> g;
    Expr<T> out = f(g, g.Constant(at));
    if (out.value().size() != 1) throw DimensionError("GradCheck: f must return a scalar");
    return out.value().data[0];
  };
  const T f0 = eval(x);
  if (eval(x) != f0) throw NumericError("GradCheck: f is not deterministic");
  GradCheckOptions scaled = opt;
  scaled.floor = opt.floor * std::max(1.0, std::abs(static_cast<double>(f0)));

  Graph<T> g;
  Expr<T> in = g.Leaf(x);
  Expr<T> out = f(g, in);
  g.Backward(out);
  const Tensor<T> analytic = g.Grad(in);

  GradCheckReport report;
  Rng rng(opt.seed);
  Tensor<T> probe = x;
  for (std::size_t i : detail::PickEntries(x.size(), opt.max_entries, rng)) {
    const T orig = probe.data[i];
    probe.data[i] = orig + T(opt.step);
    const double up = eval(probe);
    probe.data[i] = orig - T(opt.step);
    const double down = eval(probe);
    probe.data[i] = orig;
    const double numeric = (up - down) / (2.0 * opt.step);
    detail::Record(report, analytic.data[i], numeric, scaled, "x[" + std::to_string(i) + "]");
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

/// Same check over every parameter of `params` for a loss built by `loss`.
template <typename T>
GradCheckReport GradCheckParams(const std::function<Expr<T>(Graph<T> &)> &loss,
                                ParameterSet<T> &params, const GradCheckOptions &opt = {}) {
  auto eval = [&]() {
    Graph<T> g;
    Expr<T> out = loss(g);
    if (out.value().size() != 1) throw DimensionError("GradCheckParams: loss must be a scalar");
    return out.value().data[0];
  };
  const T f0 = eval();
  if (eval() != f0) throw NumericError("GradCheckParams: loss is not deterministic");
  GradCheckOptions scaled = opt;
  scaled.floor = opt.floor * std::max(1.0, std::abs(static_cast<double>(f0)));

  params.ZeroGrad();
  {
    Graph<T> g;
    g.Backward(loss(g));
  }
  GradCheckReport report;
  Rng rng(opt.seed);
  for (auto &p : params) {
    for (std::size_t i : detail::PickEntries(p.value.size(), opt.max_entries, rng)) {
      const T orig = p.value.data[i];
      p.value.data[i] = orig + T(opt.step);
      const double up = eval();
      p.value.data[i] = orig - T(opt.step);
      const double down = eval();
      p.value.data[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      detail::Record(report, p.grad.data[i], numeric, scaled,
                     p.name + "[" + std::to_string(i) + "]");
    }
  }
  params.ZeroGrad();
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace dsq

#endif  // DSQ_GRADCHECK_HPP_
