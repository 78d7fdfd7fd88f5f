// dsq/ops.hpp

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

#ifndef DSQ_OPS_HPP_
#define DSQ_OPS_HPP_

// Differentiable primitives over Graph nodes. All matrices are row-major;
// sequence tensors keep one position per row.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "dsq/graph.hpp"

namespace dsq {

namespace detail {

inline void Require(bool ok, const std::string &what) {
  if (!ok) throw DimensionError(what);
}

template <typename T>
void Require2D(const Tensor<T> &t, const char *op) {
  Require(t.rank() == 2, std::string(op) + ": expected a matrix, got " + ShapeString(t.shape));
}

}  // namespace detail

/// Boolean attendability matrix, queries x keys. true = attendable.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> allowed;

  AttentionMask() = default;
  AttentionMask(std::size_t q, std::size_t k, bool fill = true)
      : queries(q), keys(k), allowed(q * k, fill ? 1 : 0) {}

  static AttentionMask Causal(std::size_t n) {
    AttentionMask m(n, n, false);
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t k = 0; k <= q; ++k) m.set(q, k, true);
    return m;
  }

  bool at(std::size_t q, std::size_t k) const { return allowed[q * keys + k] != 0; }
  void set(std::size_t q, std::size_t k, bool v) { allowed[q * keys + k] = v ? 1 : 0; }
};

// ---------------------------------------------------------------- linear algebra

/// a (m x k) * b (k x n).
template <typename T>
Expr<T> MatMul(Expr<T> a, Expr<T> b) {
  const auto &A = a.value();
  const auto &B = b.value();
  detail::Require2D(A, "MatMul");
  detail::Require2D(B, "MatMul");
  detail::Require(A.cols() == B.rows(), "MatMul: inner dimensions differ " +
                                            ShapeString(A.shape) + " * " + ShapeString(B.shape));
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor<T> C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T *c = C.data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A.data[i * k + p];
      const T *brow = B.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  const int ia = a.id, ib = b.id;
  return a.graph->Push(std::move(C), {ia, ib}, [ia, ib, m, k, n](Graph<T> &g, int self) {
    const auto &dC = g.node(self).grad.data;
    const auto &A = g.value(ia).data;
    const auto &B = g.value(ib).data;
    if (g.requires_grad(ia)) {
      auto &dA = g.GradBuffer(ia).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T s = 0;
          for (std::size_t j = 0; j < n; ++j) s += dC[i * n + j] * B[p * n + j];
          dA[i * k + p] += s;
        }
    }
    if (g.requires_grad(ib)) {
      auto &dB = g.GradBuffer(ib).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * dC[i * n + j];
        }
    }
  });
}

/// a (m x k) * transpose(b (n x k)).
template <typename T>
Expr<T> MatMulNT(Expr<T> a, Expr<T> b) {
  const auto &A = a.value();
  const auto &B = b.value();
  detail::Require2D(A, "MatMulNT");
  detail::Require2D(B, "MatMulNT");
  detail::Require(A.cols() == B.cols(), "MatMulNT: inner dimensions differ " +
                                            ShapeString(A.shape) + " * " +
                                            ShapeString(B.shape) + "^T");
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor<T> C({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += A.data[i * k + p] * B.data[j * k + p];
      C.data[i * n + j] = s;
    }
  const int ia = a.id, ib = b.id;
  return a.graph->Push(std::move(C), {ia, ib}, [ia, ib, m, k, n](Graph<T> &g, int self) {
    const auto &dC = g.node(self).grad.data;
    const auto &A = g.value(ia).data;
    const auto &B = g.value(ib).data;
    if (g.requires_grad(ia)) {
      auto &dA = g.GradBuffer(ia).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const T d = dC[i * n + j];
          for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += d * B[j * k + p];
        }
    }
    if (g.requires_grad(ib)) {
      auto &dB = g.GradBuffer(ib).data;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const T d = dC[i * n + j];
          for (std::size_t p = 0; p < k; ++p) dB[j * k + p] += d * A[i * k + p];
        }
    }
  });
}

template <typename T>
Expr<T> Transpose(Expr<T> a) {
  const auto &A = a.value();
  detail::Require2D(A, "Transpose");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = A.data[i * n + j];
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia, m, n](Graph<T> &g, int self) {
    const auto &d = g.node(self).grad.data;
    auto &dA = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += d[j * m + i];
  });
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Expr<T> Add(Expr<T> a, Expr<T> b) {
  detail::Require(a.shape() == b.shape(),
                  "Add: " + ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  Tensor<T> out = a.value();
  const auto &B = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B[i];
  const int ia = a.id, ib = b.id;
  return a.graph->Push(std::move(out), {ia, ib}, [ia, ib](Graph<T> &g, int self) {
    const auto &d = g.node(self).grad.data;
    for (int in : {ia, ib}) {
      if (!g.requires_grad(in)) continue;
      auto &dx = g.GradBuffer(in).data;
      for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
    }
  });
}

template <typename T>
Expr<T> Sub(Expr<T> a, Expr<T> b) {
  detail::Require(a.shape() == b.shape(),
                  "Sub: " + ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  Tensor<T> out = a.value();
  const auto &B = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= B[i];
  const int ia = a.id, ib = b.id;
  return a.graph->Push(std::move(out), {ia, ib}, [ia, ib](Graph<T> &g, int self) {
    const auto &d = g.node(self).grad.data;
    if (g.requires_grad(ia)) {
      auto &dx = g.GradBuffer(ia).data;
      for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
    }
    if (g.requires_grad(ib)) {
      auto &dx = g.GradBuffer(ib).data;
      for (std::size_t i = 0; i < d.size(); ++i) dx[i] -= d[i];
    }
  });
}

/// Elementwise product.
template <typename T>
Expr<T> Mul(Expr<T> a, Expr<T> b) {
  detail::Require(a.shape() == b.shape(),
                  "Mul: " + ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  Tensor<T> out = a.value();
  const auto &B = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B[i];
  const int ia = a.id, ib = b.id;
  return a.graph->Push(std::move(out), {ia, ib}, [ia, ib](Graph<T> &g, int self) {
    const auto &d = g.node(self).grad.data;
    const auto &A = g.value(ia).data;
    const auto &B = g.value(ib).data;
    if (g.requires_grad(ia)) {
      auto &dx = g.GradBuffer(ia).data;
      for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * B[i];
    }
    if (g.requires_grad(ib)) {
      auto &dx = g.GradBuffer(ib).data;
      for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * A[i];
    }
  });
}

template <typename T>
Expr<T> Scale(Expr<T> a, T c) {
  Tensor<T> out = a.value();
  for (auto &v : out.data) v *= c;
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia, c](Graph<T> &g, int self) {
    const auto &d = g.node(self).grad.data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += c * d[i];
  });
}

/// x (N x d) plus a 1 x d row broadcast over all rows.
template <typename T>
Expr<T> AddRow(Expr<T> x, Expr<T> row) {
  const auto &X = x.value();
  const auto &R = row.value();
  detail::Require2D(X, "AddRow");
  detail::Require(R.size() == X.cols(), "AddRow: row of size " + std::to_string(R.size()) +
                                            " for " + ShapeString(X.shape));
  const std::size_t n = X.rows(), d = X.cols();
  Tensor<T> out = X;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] += R.data[j];
  const int ix = x.id, ir = row.id;
  return x.graph->Push(std::move(out), {ix, ir}, [ix, ir, n, d](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    if (g.requires_grad(ix)) {
      auto &dx = g.GradBuffer(ix).data;
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    }
    if (g.requires_grad(ir)) {
      auto &dr = g.GradBuffer(ir).data;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) dr[j] += dy[i * d + j];
    }
  });
}

template <typename T>
Expr<T> Tanh(Expr<T> a) {
  Tensor<T> out = a.value();
  for (auto &v : out.data) v = std::tanh(v);
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia](Graph<T> &g, int self) {
    const auto &n = g.node(self);
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T y = n.value.data[i];
      dx[i] += n.grad.data[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Expr<T> Relu(Expr<T> a) {
  Tensor<T> out = a.value();
  for (auto &v : out.data) v = v > T(0) ? v : T(0);
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia](Graph<T> &g, int self) {
    const auto &n = g.node(self);
    const auto &x = g.value(ia).data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (x[i] > T(0)) dx[i] += n.grad.data[i];
  });
}

/// Scalar GELU x * Phi(x) with the exact Gaussian CDF.
template <typename T>
T GeluScalar(T x) {
  return x * T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
Expr<T> Gelu(Expr<T> a) {
  Tensor<T> out = a.value();
  for (auto &v : out.data) v = GeluScalar(v);
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    const auto &x = g.value(ia).data;
    auto &dx = g.GradBuffer(ia).data;
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
      dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
  });
}

/// Inverted dropout; identity outside training or when rate == 0.
template <typename T>
Expr<T> Dropout(Expr<T> a, double rate) {
  Graph<T> &g = *a.graph;
  if (!g.training() || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const T keep_scale = T(1) / T(1 - rate);
  std::vector<T> mask(a.value().size());
  for (auto &m : mask) m = g.rng().Uniform() < rate ? T(0) : keep_scale;
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
  const int ia = a.id;
  return g.Push(std::move(out), {ia}, [ia, mask = std::move(mask)](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * mask[i];
  });
}

// ---------------------------------------------------------------- normalizers

/// Row-wise softmax. With a mask, disallowed entries get exactly zero weight;
/// a row without any allowed entry is an error.
template <typename T>
Expr<T> SoftmaxRows(Expr<T> a, const AttentionMask *mask = nullptr) {
  const auto &X = a.value();
  detail::Require2D(X, "SoftmaxRows");
  const std::size_t n = X.rows(), c = X.cols();
  if (mask)
    detail::Require(mask->queries == n && mask->keys == c,
                    "SoftmaxRows: mask " + std::to_string(mask->queries) + "x" +
                        std::to_string(mask->keys) + " for " + ShapeString(X.shape));
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const T *x = X.data.data() + i * c;
    T *y = out.data.data() + i * c;
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || mask->at(i, j)) {
        mx = std::max(mx, x[j]);
        any = true;
      }
    if (!any)
      throw std::invalid_argument("SoftmaxRows: query row " + std::to_string(i) +
                                  " has every key masked");
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || mask->at(i, j)) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
      }
    for (std::size_t j = 0; j < c; ++j) y[j] /= sum;
  }
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia, n, c](Graph<T> &g, int self) {
    const auto &node = g.node(self);
    const auto &y = node.value.data;
    const auto &dy = node.grad.data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < n; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += dy[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        dx[i * c + j] += y[i * c + j] * (dy[i * c + j] - dot);
    }
  });
}

template <typename T>
Expr<T> LogSoftmaxRows(Expr<T> a) {
  const auto &X = a.value();
  detail::Require2D(X, "LogSoftmaxRows");
  const std::size_t n = X.rows(), c = X.cols();
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const T *x = X.data.data() + i * c;
    const T mx = *std::max_element(x, x + c);
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(x[j] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = x[j] - lse;
  }
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia, n, c](Graph<T> &g, int self) {
    const auto &node = g.node(self);
    const auto &y = node.value.data;
    const auto &dy = node.grad.data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < n; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < c; ++j) s += dy[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        dx[i * c + j] += dy[i * c + j] - std::exp(y[i * c + j]) * s;
    }
  });
}

/// Per-row layer normalization followed by the affine map gain * xhat + bias.
template <typename T>
Expr<T> LayerNormRows(Expr<T> x, Expr<T> gain, Expr<T> bias, T eps = T(1e-5)) {
  const auto &X = x.value();
  detail::Require2D(X, "LayerNormRows");
  const std::size_t n = X.rows(), d = X.cols();
  detail::Require(gain.value().size() == d && bias.value().size() == d,
                  "LayerNormRows: affine size mismatch for " + ShapeString(X.shape));
  const auto &G = gain.value().data;
  const auto &B = bias.value().data;
  Tensor<T> out({n, d});
  std::vector<T> xhat(n * d), inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T *xr = X.data.data() + i * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(d);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xr[j] - mean) * inv_std[i];
      out.data[i * d + j] = xhat[i * d + j] * G[j] + B[j];
    }
  }
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.graph->Push(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T> &g,
                                                                               int self) {
        const auto &dy = g.node(self).grad.data;
        const auto &G = g.value(ig).data;
        if (g.requires_grad(ig)) {
          auto &dg = g.GradBuffer(ig).data;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) dg[j] += dy[i * d + j] * xhat[i * d + j];
        }
        if (g.requires_grad(ib)) {
          auto &db = g.GradBuffer(ib).data;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
        }
        if (g.requires_grad(ix)) {
          auto &dx = g.GradBuffer(ix).data;
          for (std::size_t i = 0; i < n; ++i) {
            T mean_dxh = 0, mean_dxh_xh = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = dy[i * d + j] * G[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xhat[i * d + j];
            }
            mean_dxh /= T(d);
            mean_dxh_xh /= T(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = dy[i * d + j] * G[j];
              dx[i * d + j] += inv_std[i] * (dxh - mean_dxh - xhat[i * d + j] * mean_dxh_xh);
            }
          }
        }
      });
}

// ---------------------------------------------------------------- structure

/// Gathers rows of `table` (V x d) for each id.
template <typename T>
Expr<T> Embedding(Expr<T> table, const std::vector<int> &ids) {
  const auto &W = table.value();
  detail::Require2D(W, "Embedding");
  const std::size_t v = W.rows(), d = W.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
      throw std::out_of_range("Embedding: id " + std::to_string(ids[i]) +
                              " outside vocabulary of " + std::to_string(v));
    std::copy_n(W.data.begin() + ids[i] * d, d, out.data.begin() + i * d);
  }
  const int it = table.id;
  return table.graph->Push(std::move(out), {it}, [it, ids, d](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    auto &dW = g.GradBuffer(it).data;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) dW[ids[i] * d + j] += dy[i * d + j];
  });
}

template <typename T>
Expr<T> SliceRows(Expr<T> a, std::size_t start, std::size_t count) {
  const auto &A = a.value();
  detail::Require2D(A, "SliceRows");
  detail::Require(start + count <= A.rows() && count > 0,
                  "SliceRows: rows [" + std::to_string(start) + "," +
                      std::to_string(start + count) + ") of " + ShapeString(A.shape));
  const std::size_t d = A.cols();
  Tensor<T> out({count, d});
  std::copy_n(A.data.begin() + start * d, count * d, out.data.begin());
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia, start, count, d](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < count * d; ++i) dx[start * d + i] += dy[i];
  });
}

template <typename T>
Expr<T> SliceCols(Expr<T> a, std::size_t start, std::size_t count) {
  const auto &A = a.value();
  detail::Require2D(A, "SliceCols");
  detail::Require(start + count <= A.cols() && count > 0,
                  "SliceCols: cols [" + std::to_string(start) + "," +
                      std::to_string(start + count) + ") of " + ShapeString(A.shape));
  const std::size_t n = A.rows(), d = A.cols();
  Tensor<T> out({n, count});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(A.data.begin() + i * d + start, count, out.data.begin() + i * count);
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia, start, count, n, d](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) dx[i * d + start + j] += dy[i * count + j];
  });
}

template <typename T>
Expr<T> ConcatRows(const std::vector<Expr<T>> &parts) {
  detail::Require(!parts.empty(), "ConcatRows: nothing to concatenate");
  const std::size_t d = parts.front().cols();
  std::size_t n = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (const auto &p : parts) {
    detail::Require(p.cols() == d && p.shape().size() == 2, "ConcatRows: column count differs");
    offsets.push_back(n);
    n += p.rows();
    ids.push_back(p.id);
  }
  Tensor<T> out({n, d});
  for (std::size_t k = 0; k < parts.size(); ++k)
    std::copy(parts[k].value().data.begin(), parts[k].value().data.end(),
              out.data.begin() + offsets[k] * d);
  return parts.front().graph->Push(
      std::move(out), ids, [ids, offsets, d](Graph<T> &g, int self) {
        const auto &dy = g.node(self).grad.data;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!g.requires_grad(ids[k])) continue;
          auto &dx = g.GradBuffer(ids[k]).data;
          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[offsets[k] * d + i];
        }
      });
}

template <typename T>
Expr<T> ConcatCols(const std::vector<Expr<T>> &parts) {
  detail::Require(!parts.empty(), "ConcatCols: nothing to concatenate");
  const std::size_t n = parts.front().rows();
  std::size_t d = 0;
  std::vector<int> ids;
  std::vector<std::size_t> offsets, widths;
  for (const auto &p : parts) {
    detail::Require(p.rows() == n && p.shape().size() == 2, "ConcatCols: row count differs");
    offsets.push_back(d);
    widths.push_back(p.cols());
    d += p.cols();
    ids.push_back(p.id);
  }
  Tensor<T> out({n, d});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto &src = parts[k].value().data;
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(src.begin() + i * widths[k], widths[k], out.data.begin() + i * d + offsets[k]);
  }
  return parts.front().graph->Push(
      std::move(out), ids, [ids, offsets, widths, n, d](Graph<T> &g, int self) {
        const auto &dy = g.node(self).grad.data;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!g.requires_grad(ids[k])) continue;
          auto &dx = g.GradBuffer(ids[k]).data;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
              dx[i * widths[k] + j] += dy[i * d + offsets[k] + j];
        }
      });
}

template <typename T>
Expr<T> Reshape(Expr<T> a, Shape shape) {
  detail::Require(ShapeSize(shape) == a.value().size(),
                  "Reshape: " + ShapeString(a.shape()) + " -> " + ShapeString(shape));
  Tensor<T> out(std::move(shape), a.value().data);
  const int ia = a.id;
  return a.graph->Push(std::move(out), {ia}, [ia](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    auto &dx = g.GradBuffer(ia).data;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Expr<T> Sum(Expr<T> a) {
  T s = 0;
  for (T v : a.value().data) s += v;
  const int ia = a.id;
  return a.graph->Push(Tensor<T>({1}, std::vector<T>{s}), {ia}, [ia](Graph<T> &g, int self) {
    const T d = g.node(self).grad.data[0];
    auto &dx = g.GradBuffer(ia).data;
    for (auto &v : dx) v += d;
  });
}

/// Floor applied to log-probabilities inside the cross-entropy.
template <typename T>
constexpr T kLogProbFloor = T(-27.631021115928547);  // ln(1e-12)

/// -sum(targets * max(log_probs, ln 1e-12)) over every entry. Rows of
/// `targets` that are all zero (padding) contribute nothing.
template <typename T>
Expr<T> SoftTargetNll(Expr<T> log_probs, const Tensor<T> &targets) {
  detail::Require(log_probs.shape() == targets.shape,
                  "SoftTargetNll: " + ShapeString(log_probs.shape()) + " vs targets " +
                      ShapeString(targets.shape));
  const auto &L = log_probs.value().data;
  T loss = 0;
  for (std::size_t i = 0; i < L.size(); ++i)
    if (targets.data[i] != T(0)) loss -= targets.data[i] * std::max(L[i], kLogProbFloor<T>);
  const int il = log_probs.id;
  return log_probs.graph->Push(Tensor<T>({1}, std::vector<T>{loss}), {il},
                               [il, targets](Graph<T> &g, int self) {
                                 const T d = g.node(self).grad.data[0];
                                 const auto &L = g.value(il).data;
                                 auto &dx = g.GradBuffer(il).data;
                                 for (std::size_t i = 0; i < dx.size(); ++i)
                                   if (L[i] > kLogProbFloor<T>) dx[i] -= d * targets.data[i];
                               });
}

// ---------------------------------------------------------------- convolution

/// Same-padded, stride-1 2-D convolution. x: Cin x H x W, weight:
/// Cout x Cin x kh x kw (odd kernel sizes), bias: 1 x Cout.
template <typename T>
Expr<T> Conv2D(Expr<T> x, Expr<T> weight, Expr<T> bias) {
  const auto &X = x.value();
  const auto &Wt = weight.value();
  detail::Require(X.rank() == 3, "Conv2D: input must be C x H x W, got " + ShapeString(X.shape));
  detail::Require(Wt.rank() == 4 && Wt.shape[1] == X.shape[0],
                  "Conv2D: weight " + ShapeString(Wt.shape) + " for input " + ShapeString(X.shape));
  detail::Require(Wt.shape[2] % 2 == 1 && Wt.shape[3] % 2 == 1, "Conv2D: kernel sizes must be odd");
  const std::size_t ci = X.shape[0], h = X.shape[1], w = X.shape[2];
  const std::size_t co = Wt.shape[0], kh = Wt.shape[2], kw = Wt.shape[3];
  detail::Require(bias.value().size() == co, "Conv2D: bias size mismatch");
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  Tensor<T> out({co, h, w});
  const auto &Bv = bias.value().data;
  for (std::size_t o = 0; o < co; ++o) {
    T *y = out.data.data() + o * h * w;
    for (std::size_t i = 0; i < h * w; ++i) y[i] = Bv[o];
    for (std::size_t c = 0; c < ci; ++c) {
      const T *xc = X.data.data() + c * h * w;
      for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b) {
          const T wv = Wt.data[((o * ci + c) * kh + a) * kw + b];
          const long da = static_cast<long>(a) - ph, db = static_cast<long>(b) - pw;
          for (std::size_t r = 0; r < h; ++r) {
            const long rr = static_cast<long>(r) + da;
            if (rr < 0 || rr >= static_cast<long>(h)) continue;
            const std::size_t c0 = db < 0 ? static_cast<std::size_t>(-db) : 0;
            const std::size_t c1 = db > 0 ? w - static_cast<std::size_t>(db) : w;
            T *yr = y + r * w;
            const T *xr = xc + rr * static_cast<long>(w) + db;
            for (std::size_t q = c0; q < c1; ++q) yr[q] += wv * xr[q];
          }
        }
    }
  }
  const int ix = x.id, iw = weight.id, ib = bias.id;
  return x.graph->Push(
      std::move(out), {ix, iw, ib},
      [ix, iw, ib, ci, h, w, co, kh, kw, ph, pw](Graph<T> &g, int self) {
        const auto &dy = g.node(self).grad.data;
        const auto &X = g.value(ix).data;
        const auto &Wt = g.value(iw).data;
        const bool gx = g.requires_grad(ix), gw = g.requires_grad(iw);
        T *dX = gx ? g.GradBuffer(ix).data.data() : nullptr;
        T *dW = gw ? g.GradBuffer(iw).data.data() : nullptr;
        if (g.requires_grad(ib)) {
          auto &db = g.GradBuffer(ib).data;
          for (std::size_t o = 0; o < co; ++o)
            for (std::size_t i = 0; i < h * w; ++i) db[o] += dy[o * h * w + i];
        }
        for (std::size_t o = 0; o < co; ++o) {
          const T *dyo = dy.data() + o * h * w;
          for (std::size_t c = 0; c < ci; ++c) {
            const std::size_t xoff = c * h * w;
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t b = 0; b < kw; ++b) {
                const std::size_t widx = ((o * ci + c) * kh + a) * kw + b;
                const T wv = Wt[widx];
                const long da = static_cast<long>(a) - ph, dbb = static_cast<long>(b) - pw;
                T acc = 0;
                for (std::size_t r = 0; r < h; ++r) {
                  const long rr = static_cast<long>(r) + da;
                  if (rr < 0 || rr >= static_cast<long>(h)) continue;
                  const std::size_t c0 = dbb < 0 ? static_cast<std::size_t>(-dbb) : 0;
                  const std::size_t c1 = dbb > 0 ? w - static_cast<std::size_t>(dbb) : w;
                  const std::size_t xbase = xoff + rr * w;
                  for (std::size_t q = c0; q < c1; ++q) {
                    const T d = dyo[r * w + q];
                    const std::size_t xi = xbase + static_cast<std::size_t>(static_cast<long>(q) + dbb);
                    if (gw) acc += d * X[xi];
                    if (gx) dX[xi] += d * wv;
                  }
                }
                if (gw) dW[widx] += acc;
              }
          }
        }
      });
}

/// 2 x 2 max pooling with stride 2 over the last two axes of C x H x W.
/// Partial windows at the border are kept (ceil mode).
template <typename T>
Expr<T> MaxPool2x2(Expr<T> x) {
  const auto &X = x.value();
  detail::Require(X.rank() == 3, "MaxPool2x2: input must be C x H x W");
  const std::size_t c = X.shape[0], h = X.shape[1], w = X.shape[2];
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  Tensor<T> out({c, ho, wo});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = k * h * w + (2 * i) * w + 2 * j;
        for (std::size_t a = 2 * i; a < std::min(h, 2 * i + 2); ++a)
          for (std::size_t b = 2 * j; b < std::min(w, 2 * j + 2); ++b) {
            const std::size_t idx = k * h * w + a * w + b;
            if (X.data[idx] > X.data[best]) best = idx;
          }
        const std::size_t o = (k * ho + i) * wo + j;
        out.data[o] = X.data[best];
        argmax[o] = best;
      }
  const int ix = x.id;
  return x.graph->Push(std::move(out), {ix}, [ix, argmax = std::move(argmax)](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    auto &dx = g.GradBuffer(ix).data;
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  });
}

/// C x Tm x F  ->  Tm x (C * F): one row per time step, channel-major.
template <typename T>
Expr<T> TimeMajorFlatten(Expr<T> x) {
  const auto &X = x.value();
  detail::Require(X.rank() == 3, "TimeMajorFlatten: input must be C x T x F");
  const std::size_t c = X.shape[0], tm = X.shape[1], f = X.shape[2];
  Tensor<T> out({tm, c * f});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t t = 0; t < tm; ++t)
      for (std::size_t j = 0; j < f; ++j)
        out.data[t * c * f + k * f + j] = X.data[(k * tm + t) * f + j];
  const int ix = x.id;
  return x.graph->Push(std::move(out), {ix}, [ix, c, tm, f](Graph<T> &g, int self) {
    const auto &dy = g.node(self).grad.data;
    auto &dx = g.GradBuffer(ix).data;
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t t = 0; t < tm; ++t)
        for (std::size_t j = 0; j < f; ++j)
          dx[(k * tm + t) * f + j] += dy[t * c * f + k * f + j];
  });
}

}  // namespace dsq

#endif  // DSQ_OPS_HPP_
