/* Copyright 2026 The specdraft Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Differentiable primitives. Each free function computes its value eagerly
// and, when any input requires grad, records a backward closure on the tape.

#pragma once

#include "specdraft/tensor.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace specdraft {

namespace detail {

template <typename S>
[[noreturn]] void shape_mismatch(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename S>
bool same_storage(const Tensor<S>& a, const Tensor<S>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

template <typename S>
bool row_broadcast(const Tensor<S>& a, const Tensor<S>& b) {
  return b.rows() == 1 && b.cols() == a.cols() && a.rows() > 1;
}

template <typename S>
void require_finite(const char* op, const RowMatrix<S>& m) {
  if (!m.allFinite()) throw DomainError(std::string(op) + ": input contains NaN or Inf");
}

}  // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows()) detail::shape_mismatch("matmul", a, b);
  RowMatrix<S> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  auto an = a.node(), bn = b.node();
  return detail::record<S>("matmul", detail::matrix_shape(a.rows(), b.cols()), std::move(out), {a, b},
                           [an, bn](const RowMatrix<S>& g) {
                             if (an->requires_grad) detail::accumulate<S>(an, (g * bn->value.transpose()).eval());
                             if (bn->requires_grad) detail::accumulate<S>(bn, (an->value.transpose() * g).eval());
                           });
}

// Elementwise sum; `b` may also be a single row broadcast over the rows of `a`.
template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  auto an = a.node(), bn = b.node();
  if (detail::same_storage(a, b)) {
    return detail::record<S>("add", a.shape(), a.value() + b.value(), {a, b}, [an, bn](const RowMatrix<S>& g) {
      detail::accumulate<S>(an, g);
      detail::accumulate<S>(bn, g);
    });
  }
  if (!detail::row_broadcast(a, b)) detail::shape_mismatch("add", a, b);
  RowMatrix<S> out = a.value().rowwise() + b.value().row(0);
  return detail::record<S>("add", a.shape(), std::move(out), {a, b}, [an, bn](const RowMatrix<S>& g) {
    detail::accumulate<S>(an, g);
    if (bn->requires_grad) detail::accumulate<S>(bn, g.colwise().sum().eval());
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  auto an = a.node(), bn = b.node();
  if (detail::same_storage(a, b)) {
    return detail::record<S>("sub", a.shape(), a.value() - b.value(), {a, b}, [an, bn](const RowMatrix<S>& g) {
      detail::accumulate<S>(an, g);
      if (bn->requires_grad) detail::accumulate<S>(bn, (-g).eval());
    });
  }
  if (!detail::row_broadcast(a, b)) detail::shape_mismatch("sub", a, b);
  RowMatrix<S> out = a.value().rowwise() - b.value().row(0);
  return detail::record<S>("sub", a.shape(), std::move(out), {a, b}, [an, bn](const RowMatrix<S>& g) {
    detail::accumulate<S>(an, g);
    if (bn->requires_grad) detail::accumulate<S>(bn, (-g.colwise().sum()).eval());
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (!detail::same_storage(a, b)) detail::shape_mismatch("mul", a, b);
  auto an = a.node(), bn = b.node();
  RowMatrix<S> out = a.value().cwiseProduct(b.value());
  return detail::record<S>("mul", a.shape(), std::move(out), {a, b}, [an, bn](const RowMatrix<S>& g) {
    if (an->requires_grad) detail::accumulate<S>(an, g.cwiseProduct(bn->value).eval());
    if (bn->requires_grad) detail::accumulate<S>(bn, g.cwiseProduct(an->value).eval());
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  auto an = a.node();
  return detail::record<S>("scale", a.shape(), a.value() * factor, {a},
                           [an, factor](const RowMatrix<S>& g) { detail::accumulate<S>(an, (g * factor).eval()); });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  auto an = a.node();
  RowMatrix<S> out = a.value().array() + c;
  return detail::record<S>("add_scalar", a.shape(), std::move(out), {a},
                           [an](const RowMatrix<S>& g) { detail::accumulate<S>(an, g); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  auto an = a.node();
  RowMatrix<S> out = (S(1) + (-a.value().array()).exp()).inverse().matrix();
  auto y = std::make_shared<RowMatrix<S>>(out);
  return detail::record<S>("sigmoid", a.shape(), std::move(out), {a}, [an, y](const RowMatrix<S>& g) {
    detail::accumulate<S>(an, (g.array() * y->array() * (S(1) - y->array())).matrix().eval());
  });
}

// x * sigmoid(x)
template <typename S>
Tensor<S> silu(const Tensor<S>& a) {
  auto an = a.node();
  auto sig = std::make_shared<RowMatrix<S>>((S(1) + (-a.value().array()).exp()).inverse().matrix());
  RowMatrix<S> out = a.value().cwiseProduct(*sig);
  return detail::record<S>("silu", a.shape(), std::move(out), {a}, [an, sig](const RowMatrix<S>& g) {
    const auto& x = an->value.array();
    const auto& s = sig->array();
    detail::accumulate<S>(an, (g.array() * s * (S(1) + x * (S(1) - s))).matrix().eval());
  });
}

// Natural log; throws DomainError on a nonpositive entry.
template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  if (!(a.value().array() > S(0)).all()) throw DomainError("log: input contains a nonpositive value");
  auto an = a.node();
  RowMatrix<S> out = a.value().array().log().matrix();
  return detail::record<S>("log", a.shape(), std::move(out), {a}, [an](const RowMatrix<S>& g) {
    detail::accumulate<S>(an, g.cwiseQuotient(an->value).eval());
  });
}

// Gradient passes only where the input lies strictly inside [lo, hi].
template <typename S>
Tensor<S> clamp(const Tensor<S>& a, S lo, S hi) {
  auto an = a.node();
  RowMatrix<S> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return detail::record<S>("clamp", a.shape(), std::move(out), {a}, [an, lo, hi](const RowMatrix<S>& g) {
    const auto& x = an->value.array();
    detail::accumulate<S>(an, ((x >= lo && x <= hi).select(g.array(), S(0))).matrix().eval());
  });
}

// Numerically stable row-wise softmax.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a) {
  detail::require_finite("softmax_rows", a.value());
  auto an = a.node();
  RowMatrix<S> out = (a.value().colwise() - a.value().rowwise().maxCoeff()).array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  auto y = std::make_shared<RowMatrix<S>>(out);
  return detail::record<S>("softmax_rows", a.shape(), std::move(out), {a}, [an, y](const RowMatrix<S>& g) {
    RowMatrix<S> gy = g.cwiseProduct(*y);
    RowMatrix<S> dx = gy - (y->array().colwise() * gy.rowwise().sum().array()).matrix();
    detail::accumulate<S>(an, dx);
  });
}

// Row-wise log-softmax via log-sum-exp.
template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& a) {
  detail::require_finite("log_softmax_rows", a.value());
  auto an = a.node();
  Eigen::Matrix<S, Eigen::Dynamic, 1> mx = a.value().rowwise().maxCoeff();
  RowMatrix<S> shifted = a.value().colwise() - mx;
  Eigen::Matrix<S, Eigen::Dynamic, 1> lse = shifted.array().exp().rowwise().sum().log().matrix();
  RowMatrix<S> out = shifted.colwise() - lse;
  auto y = std::make_shared<RowMatrix<S>>(out);
  return detail::record<S>("log_softmax_rows", a.shape(), std::move(out), {a}, [an, y](const RowMatrix<S>& g) {
    RowMatrix<S> p = y->array().exp().matrix();
    RowMatrix<S> dx = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    detail::accumulate<S>(an, dx);
  });
}

// Per-row layer normalization with learned gain and bias rows.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias, S eps = S(1e-5)) {
  if (gain.rows() != 1 || gain.cols() != x.cols()) detail::shape_mismatch("layer_norm", x, gain);
  if (bias.rows() != 1 || bias.cols() != x.cols()) detail::shape_mismatch("layer_norm", x, bias);
  const Index n = x.cols();
  Eigen::Matrix<S, Eigen::Dynamic, 1> mean = x.value().rowwise().mean();
  RowMatrix<S> centered = x.value().colwise() - mean;
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / S(n)) + eps).rsqrt().matrix();
  auto xhat = std::make_shared<RowMatrix<S>>((centered.array().colwise() * inv_std.array()).matrix());
  RowMatrix<S> out = (xhat->array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  auto istd = std::make_shared<Eigen::Matrix<S, Eigen::Dynamic, 1>>(std::move(inv_std));
  return detail::record<S>(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias}, [xn, gn, bn, xhat, istd, n](const RowMatrix<S>& g) {
        if (gn->requires_grad) detail::accumulate<S>(gn, g.cwiseProduct(*xhat).colwise().sum().eval());
        if (bn->requires_grad) detail::accumulate<S>(bn, g.colwise().sum().eval());
        if (xn->requires_grad) {
          RowMatrix<S> dxhat = (g.array().rowwise() * gn->value.row(0).array()).matrix();
          Eigen::Matrix<S, Eigen::Dynamic, 1> m1 = dxhat.rowwise().mean();
          Eigen::Matrix<S, Eigen::Dynamic, 1> m2 = dxhat.cwiseProduct(*xhat).rowwise().sum() / S(n);
          RowMatrix<S> dx = dxhat.colwise() - m1;
          dx -= (xhat->array().colwise() * m2.array()).matrix();
          dx = (dx.array().colwise() * istd->array()).matrix();
          detail::accumulate<S>(xn, dx);
        }
      });
}

// Row lookup into an embedding table; ids must lie in [0, table.rows()).
template <typename S>
Tensor<S> embedding(const Tensor<S>& table, std::span<const int> ids) {
  const Index n = static_cast<Index>(ids.size());
  RowMatrix<S> out(n, table.cols());
  for (Index i = 0; i < n; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= table.rows()) {
      throw DomainError("embedding: id " + std::to_string(id) + " outside table of " + std::to_string(table.rows()) +
                        " rows");
    }
    out.row(i) = table.value().row(id);
  }
  auto tn = table.node();
  std::vector<int> idx(ids.begin(), ids.end());
  return detail::record<S>("embedding", detail::matrix_shape(n, table.cols()), std::move(out), {table},
                           [tn, idx = std::move(idx)](const RowMatrix<S>& g) {
                             if (!tn->requires_grad) return;
                             if (tn->grad.size() == 0) tn->grad.setZero(tn->value.rows(), tn->value.cols());
                             for (std::size_t i = 0; i < idx.size(); ++i) tn->grad.row(idx[i]) += g.row(Index(i));
                           });
}

// Selects rows by index (repeats allowed).
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& a, std::span<const Index> rows) {
  const Index n = static_cast<Index>(rows.size());
  RowMatrix<S> out(n, a.cols());
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= a.rows()) throw ShapeError("gather_rows: row " + std::to_string(r) + " outside " + shape_str(a.shape()));
    out.row(i) = a.value().row(r);
  }
  auto an = a.node();
  std::vector<Index> idx(rows.begin(), rows.end());
  return detail::record<S>("gather_rows", detail::matrix_shape(n, a.cols()), std::move(out), {a},
                           [an, idx = std::move(idx)](const RowMatrix<S>& g) {
                             if (!an->requires_grad) return;
                             if (an->grad.size() == 0) an->grad.setZero(an->value.rows(), an->value.cols());
                             for (std::size_t i = 0; i < idx.size(); ++i) an->grad.row(idx[i]) += g.row(Index(i));
                           });
}

// out[r] = a(r, cols[r]); shape [rows x 1].
template <typename S>
Tensor<S> pick(const Tensor<S>& a, std::span<const int> cols) {
  if (static_cast<Index>(cols.size()) != a.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + shape_str(a.shape()));
  }
  RowMatrix<S> out(a.rows(), 1);
  for (Index r = 0; r < a.rows(); ++r) {
    const int c = cols[static_cast<std::size_t>(r)];
    if (c < 0 || c >= a.cols()) throw ShapeError("pick: column " + std::to_string(c) + " outside " + shape_str(a.shape()));
    out(r, 0) = a.value()(r, c);
  }
  auto an = a.node();
  std::vector<int> idx(cols.begin(), cols.end());
  return detail::record<S>("pick", detail::matrix_shape(a.rows(), 1), std::move(out), {a},
                           [an, idx = std::move(idx)](const RowMatrix<S>& g) {
                             if (!an->requires_grad) return;
                             if (an->grad.size() == 0) an->grad.setZero(an->value.rows(), an->value.cols());
                             for (std::size_t r = 0; r < idx.size(); ++r) an->grad(Index(r), idx[r]) += g(Index(r), 0);
                           });
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rows() != b.rows()) detail::shape_mismatch("concat_cols", a, b);
  RowMatrix<S> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  auto an = a.node(), bn = b.node();
  const Index ac = a.cols(), bc = b.cols();
  return detail::record<S>("concat_cols", detail::matrix_shape(a.rows(), ac + bc), std::move(out), {a, b},
                           [an, bn, ac, bc](const RowMatrix<S>& g) {
                             if (an->requires_grad) detail::accumulate<S>(an, g.leftCols(ac).eval());
                             if (bn->requires_grad) detail::accumulate<S>(bn, g.rightCols(bc).eval());
                           });
}

// Stacks tensors of equal width vertically.
template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) detail::shape_mismatch("concat_rows", parts.front(), p);
    rows += p.rows();
  }
  const Index cols = parts.front().cols();
  RowMatrix<S> out(rows, cols);
  std::vector<detail::NodePtr<S>> nodes;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
    nodes.push_back(p.node());
  }
  return detail::record<S>("concat_rows", detail::matrix_shape(rows, cols), std::move(out), parts,
                           [nodes = std::move(nodes)](const RowMatrix<S>& g) {
                             Index off = 0;
                             for (const auto& n : nodes) {
                               if (n->requires_grad) detail::accumulate<S>(n, g.middleRows(off, n->value.rows()).eval());
                               off += n->value.rows();
                             }
                           });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  RowMatrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  auto an = a.node();
  return detail::record<S>("sum", Shape{}, std::move(out), {a}, [an](const RowMatrix<S>& g) {
    detail::accumulate<S>(an, RowMatrix<S>::Constant(an->value.rows(), an->value.cols(), g(0, 0)));
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / S(a.numel()));
}

// Multi-head causal self-attention over consecutive row groups of length
// `group_len`: row i of a group attends to rows 0..i of the same group.
// Inputs are projected queries, keys and values of width d = n_heads * head_dim.
template <typename S>
Tensor<S> causal_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, Index n_heads,
                           Index group_len) {
  if (!detail::same_storage(q, k)) detail::shape_mismatch("causal_attention", q, k);
  if (!detail::same_storage(q, v)) detail::shape_mismatch("causal_attention", q, v);
  if (n_heads <= 0 || q.cols() % n_heads != 0) {
    throw ShapeError("causal_attention: width " + std::to_string(q.cols()) + " not divisible by " +
                     std::to_string(n_heads) + " heads");
  }
  if (group_len <= 0 || q.rows() % group_len != 0) {
    throw ShapeError("causal_attention: " + std::to_string(q.rows()) + " rows not divisible by group length " +
                     std::to_string(group_len));
  }
  const Index hd = q.cols() / n_heads;
  const Index groups = q.rows() / group_len;
  const Index L = group_len;
  const S scale_factor = S(1) / std::sqrt(S(hd));

  auto probs = std::make_shared<std::vector<RowMatrix<S>>>();
  probs->reserve(static_cast<std::size_t>(groups * n_heads));
  RowMatrix<S> out(q.rows(), q.cols());
  for (Index g = 0; g < groups; ++g) {
    for (Index h = 0; h < n_heads; ++h) {
      RowMatrix<S> qb = q.value().block(g * L, h * hd, L, hd);
      RowMatrix<S> kb = k.value().block(g * L, h * hd, L, hd);
      RowMatrix<S> scores = (qb * kb.transpose()) * scale_factor;
      for (Index i = 0; i < L; ++i) {
        const S mx = scores.row(i).head(i + 1).maxCoeff();
        S total = 0;
        for (Index j = 0; j < L; ++j) {
          S e = j <= i ? std::exp(scores(i, j) - mx) : S(0);
          scores(i, j) = e;
          total += e;
        }
        scores.row(i) /= total;
      }
      out.block(g * L, h * hd, L, hd).noalias() = scores * v.value().block(g * L, h * hd, L, hd);
      probs->push_back(std::move(scores));
    }
  }
  auto qn = q.node(), kn = k.node(), vn = v.node();
  return detail::record<S>(
      "causal_attention", q.shape(), std::move(out), {q, k, v},
      [qn, kn, vn, probs, n_heads, hd, groups, L, scale_factor](const RowMatrix<S>& gout) {
        RowMatrix<S> dq = RowMatrix<S>::Zero(qn->value.rows(), qn->value.cols());
        RowMatrix<S> dk = RowMatrix<S>::Zero(dq.rows(), dq.cols());
        RowMatrix<S> dv = RowMatrix<S>::Zero(dq.rows(), dq.cols());
        for (Index g = 0; g < groups; ++g) {
          for (Index h = 0; h < n_heads; ++h) {
            const RowMatrix<S>& p = (*probs)[static_cast<std::size_t>(g * n_heads + h)];
            RowMatrix<S> go = gout.block(g * L, h * hd, L, hd);
            RowMatrix<S> vb = vn->value.block(g * L, h * hd, L, hd);
            dv.block(g * L, h * hd, L, hd).noalias() = p.transpose() * go;
            RowMatrix<S> dp = go * vb.transpose();
            Eigen::Matrix<S, Eigen::Dynamic, 1> rowdot = dp.cwiseProduct(p).rowwise().sum();
            RowMatrix<S> ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale_factor;
            dq.block(g * L, h * hd, L, hd).noalias() = ds * kn->value.block(g * L, h * hd, L, hd);
            dk.block(g * L, h * hd, L, hd).noalias() = ds.transpose() * qn->value.block(g * L, h * hd, L, hd);
          }
        }
        detail::accumulate<S>(qn, dq);
        detail::accumulate<S>(kn, dk);
        detail::accumulate<S>(vn, dv);
      });
}

}  // namespace specdraft
