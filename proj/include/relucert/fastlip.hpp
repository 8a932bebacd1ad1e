#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "relucert/errors.hpp"
#include "relucert/fastlin.hpp"
#include "relucert/linalg.hpp"
#include "relucert/model.hpp"

namespace relucert {

// Worst-case gradient recursion state. C carries the contribution through
// always-active neurons; L <= 0 <= U are slack bounds for the uncertain ones.
// Every realizable gradient row lies in [C+L, C+U] elementwise.
struct GradBoundState {
  Matrix C, L, U;
};

// One step of the naive fold: absorb W_next (n_next x n_cur) given the
// partition of the current layer. State columns (input coordinates) are
// untouched; rows change from n_cur to n_next.
inline GradBoundState bound_layer_grad(const GradBoundState& s,
                                       const Matrix& W_next,
                                       const NeuronPartition& part) {
  if (s.C.rows != part.size() || W_next.cols != part.size())
    throw shape_error("bound_layer_grad: partition/state/weight shapes disagree");
  if (s.L.rows != s.C.rows || s.U.rows != s.C.rows || s.L.cols != s.C.cols ||
      s.U.cols != s.C.cols)
    throw shape_error("bound_layer_grad: state matrices disagree");
  const std::size_t n = s.C.cols;
  GradBoundState out;
  out.C = Matrix(W_next.rows, n);
  out.L = Matrix(W_next.rows, n);
  out.U = Matrix(W_next.rows, n);
  for (std::size_t j = 0; j < W_next.rows; ++j) {
    const double* wrow = W_next.row(j);
    double* cj = out.C.row(j);
    double* lj = out.L.row(j);
    double* uj = out.U.row(j);
    for (std::size_t i : part.always_active) {
      const double w = wrow[i];
      if (w == 0.0) continue;
      const double* ci = s.C.row(i);
      const double* li = s.L.row(i);
      const double* ui = s.U.row(i);
      if (w > 0.0) {
        for (std::size_t k = 0; k < n; ++k) {
          cj[k] += w * ci[k];
          uj[k] += w * ui[k];
          lj[k] += w * li[k];
        }
      } else {
        for (std::size_t k = 0; k < n; ++k) {
          cj[k] += w * ci[k];
          uj[k] += w * li[k];
          lj[k] += w * ui[k];
        }
      }
    }
    for (std::size_t i : part.uncertain) {
      const double w = wrow[i];
      if (w == 0.0) continue;
      const double* ci = s.C.row(i);
      const double* li = s.L.row(i);
      const double* ui = s.U.row(i);
      if (w > 0.0) {
        for (std::size_t k = 0; k < n; ++k) {
          const double hi = ci[k] + ui[k];
          const double lo = ci[k] + li[k];
          if (hi > 0.0) uj[k] += w * hi;
          if (lo < 0.0) lj[k] += w * lo;
        }
      } else {
        for (std::size_t k = 0; k < n; ++k) {
          const double hi = ci[k] + ui[k];
          const double lo = ci[k] + li[k];
          if (lo < 0.0) uj[k] += w * lo;
          if (hi > 0.0) lj[k] += w * hi;
        }
      }
    }
  }
  return out;
}

namespace detail {

// Mirrored fold step, contracting on the right: state rows (output
// coordinates) are untouched; columns change from n_cur to n_prev. The
// contraction index i carries the partition; W is n_cur x n_prev.
inline GradBoundState fold_step_lr(const GradBoundState& s, const Matrix& W,
                                   const NeuronPartition& part) {
  if (s.C.cols != part.size() || W.rows != part.size())
    throw shape_error("gradient fold: partition/state/weight shapes disagree");
  const std::size_t rows = s.C.rows, n = W.cols;
  GradBoundState out;
  out.C = Matrix(rows, n);
  out.L = Matrix(rows, n);
  out.U = Matrix(rows, n);
  for (std::size_t j = 0; j < rows; ++j) {
    const double* cj = s.C.row(j);
    const double* lj = s.L.row(j);
    const double* uj = s.U.row(j);
    double* co = out.C.row(j);
    double* lo = out.L.row(j);
    double* uo = out.U.row(j);
    for (std::size_t i : part.always_active) {
      const double* wrow = W.row(i);
      const double c = cj[i], l = lj[i], u = uj[i];
      for (std::size_t k = 0; k < n; ++k) {
        const double w = wrow[k];
        if (w == 0.0) continue;
        co[k] += c * w;
        if (w > 0.0) {
          uo[k] += u * w;
          lo[k] += l * w;
        } else {
          uo[k] += l * w;
          lo[k] += u * w;
        }
      }
    }
    for (std::size_t i : part.uncertain) {
      const double* wrow = W.row(i);
      const double hi = cj[i] + uj[i];
      const double low = cj[i] + lj[i];
      for (std::size_t k = 0; k < n; ++k) {
        const double w = wrow[k];
        if (w == 0.0) continue;
        if (w > 0.0) {
          if (hi > 0.0) uo[k] += hi * w;
          if (low < 0.0) lo[k] += low * w;
        } else {
          if (low < 0.0) uo[k] += low * w;
          if (hi > 0.0) lo[k] += hi * w;
        }
      }
    }
  }
  return out;
}

inline Vec state_to_v(const GradBoundState& s) {
  Vec v(s.C.cols, 0.0);
  for (std::size_t j = 0; j < s.C.rows; ++j)
    for (std::size_t k = 0; k < s.C.cols; ++k) {
      const double hi = std::fabs(s.C(j, k) + s.U(j, k));
      const double lo = std::fabs(s.C(j, k) + s.L(j, k));
      v[k] = std::max(v[k], std::max(hi, lo));
    }
  return v;
}

}  // namespace detail

// Per-coordinate bound v on |dg/dx_k| over the ball the layer bounds were
// propagated at. Folds from the output row inward, so the state stays one
// row tall regardless of hidden widths.
inline Vec grad_bound_all(const MarginNetwork& m, const LayerBounds& lb) {
  const Network& net = m.net;
  const std::size_t depth = net.layers.size();
  if (lb.l.size() + 1 != depth)
    throw invalid_parameter("layer bounds incomplete for this network");
  GradBoundState s;
  s.C = net.layers.back().W;  // 1 x n_{m-1}
  s.L = Matrix(1, s.C.cols);
  s.U = Matrix(1, s.C.cols);
  for (std::size_t l = depth - 1; l >= 1; --l) {
    const NeuronPartition part = classify_neurons(lb.l[l - 1], lb.u[l - 1]);
    s = detail::fold_step_lr(s, net.layers[l - 1].W, part);
  }
  return detail::state_to_v(s);
}

struct LipResult {
  double radius = 0.0;
  bool misclassified = false;
  double grad_norm = 0.0;  // ||v||_q
  Vec v;
};

// Certified radius from the local Lipschitz bound: min(g(x0)/||v||_q, eps).
// ||v||_q == 0 with g(x0) > 0 certifies the whole queried ball (g cannot
// decrease anywhere in it).
inline LipResult lip_lower_bound(const MarginNetwork& m, const Vec& x0,
                                 double eps, Norm p,
                                 std::optional<ClipBox> clip = std::nullopt) {
  LipResult res;
  const double g0 = forward_margin(m, x0);
  if (g0 <= 0.0) {
    res.misclassified = true;
    return res;
  }
  const LayerBounds lb = propagate_bounds(m.net, x0, eps, p, clip);
  res.v = grad_bound_all(m, lb);
  res.grad_norm = vec_qnorm(res.v, dual_order(p));
  res.radius = res.grad_norm == 0.0 ? eps : std::min(g0 / res.grad_norm, eps);
  return res;
}

// Global certificate g(x0) / (||wbar||_q * prod_k ||W^(k)||_{p->p}).
// Returns +inf when the Lipschitz product is zero.
inline double opnorm_bound(const Network& net, const Vec& x0, std::size_t c,
                           std::size_t j, Norm p) {
  const MarginNetwork m = merge_last_layer(net, c, j);
  const double g0 = forward_margin(m, x0);
  if (g0 <= 0.0) return 0.0;
  double L = vec_qnorm(m.wbar(), dual_order(p));
  for (std::size_t k = 0; k + 1 < m.net.layers.size(); ++k)
    L *= induced_norm(m.net.layers[k].W, p);
  if (L == 0.0) return std::numeric_limits<double>::infinity();
  return g0 / L;
}

// One-hidden-layer Lipschitz bound by norm splitting: the always-active part
// contributes ||wbar_act W^(1)||_q exactly; each uncertain neuron contributes
// its own row norm (subadditivity, no sign cancellation across neurons).
inline double norm_split_bound_2layer(const MarginNetwork& m,
                                      const NeuronPartition& part, Norm q) {
  const Network& net = m.net;
  if (net.layers.size() != 2)
    throw invalid_parameter("norm-split bound is defined for exactly one hidden layer");
  const Matrix& W1 = net.layers[0].W;
  const Vec& wbar = m.wbar();
  if (part.size() != W1.rows)
    throw shape_error("norm-split: partition size mismatch");
  Vec main(W1.cols, 0.0);
  for (std::size_t r : part.always_active) {
    const double w = wbar[r];
    if (w == 0.0) continue;
    const double* row = W1.row(r);
    for (std::size_t k = 0; k < W1.cols; ++k) main[k] += w * row[k];
  }
  double total = vec_qnorm(main, q);
  Vec tmp(W1.cols);
  for (std::size_t r : part.uncertain) {
    const double w = wbar[r];
    const double* row = W1.row(r);
    for (std::size_t k = 0; k < W1.cols; ++k) tmp[k] = w * row[k];
    total += vec_qnorm(tmp, q);
  }
  return total;
}

}  // namespace relucert
