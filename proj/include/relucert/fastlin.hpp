#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/model.hpp"

namespace relucert {

// Pre-ReLU bounds per hidden layer: l[k], u[k] bound layer k+1 (1-based) of
// the network, k = 0 .. depth-2.
struct LayerBounds {
  std::vector<Vec> l, u;

  std::size_t layer_count() const { return l.size(); }
};

enum class NeuronClass : unsigned char { active, inactive, uncertain };

struct NeuronPartition {
  std::vector<NeuronClass> cls;
  std::vector<std::size_t> always_active, always_inactive, uncertain;

  std::size_t size() const { return cls.size(); }
};

// Partition by bound signs. Degenerate l==u is classified by sign (positive
// -> active, nonpositive -> inactive) so the slope u/(u-l) is never 0/0.
inline NeuronPartition classify_neurons(const Vec& l, const Vec& u) {
  if (l.size() != u.size())
    throw shape_error("classify_neurons: bound length mismatch");
  NeuronPartition part;
  part.cls.resize(l.size());
  for (std::size_t r = 0; r < l.size(); ++r) {
    if (l[r] > u[r])
      throw invariant_violation("classify_neurons: lower bound exceeds upper at neuron " +
                                std::to_string(r));
    NeuronClass c;
    if (l[r] == u[r])
      c = l[r] > 0.0 ? NeuronClass::active : NeuronClass::inactive;
    else if (l[r] >= 0.0)
      c = NeuronClass::active;
    else if (u[r] <= 0.0)
      c = NeuronClass::inactive;
    else
      c = NeuronClass::uncertain;
    part.cls[r] = c;
    if (c == NeuronClass::active)
      part.always_active.push_back(r);
    else if (c == NeuronClass::inactive)
      part.always_inactive.push_back(r);
    else
      part.uncertain.push_back(r);
  }
  return part;
}

// Diagonal of the relaxation slope matrix: u/(u-l) on uncertain neurons,
// 1 on always-active, 0 on always-inactive.
inline Vec slope_matrix(const Vec& l, const Vec& u, const NeuronPartition& part) {
  if (l.size() != part.size() || u.size() != part.size())
    throw shape_error("slope_matrix: size mismatch");
  Vec d(l.size(), 0.0);
  for (std::size_t r = 0; r < l.size(); ++r) {
    switch (part.cls[r]) {
      case NeuronClass::active: d[r] = 1.0; break;
      case NeuronClass::inactive: d[r] = 0.0; break;
      case NeuronClass::uncertain: d[r] = u[r] / (u[r] - l[r]); break;
    }
  }
  return d;
}

// Optional per-coordinate clamp of the perturbation ball to a box
// (intersection applies to the l_inf ball only).
struct ClipBox {
  double lo;
  double hi;
};

namespace detail {

// Extremes of sum_r a_r * delta_r over the allowed perturbation set:
// unclipped, {max,min} = +-eps * ||a||_q with q dual to p; clipped (p=inf),
// delta_r ranges over [max(-eps, lo - x0_r), min(eps, hi - x0_r)].
struct BallExtremes {
  double eps;
  Norm q;
  const Vec* x0 = nullptr;
  std::optional<ClipBox> clip;

  BallExtremes(double eps_, Norm p, const Vec& x0_,
               const std::optional<ClipBox>& clip_)
      : eps(eps_), q(dual_order(p)), x0(&x0_), clip(clip_) {
    if (clip && p != Norm::inf)
      throw invalid_parameter("ball clipping is defined for p=inf only");
    if (clip) {
      for (double xi : x0_)
        if (xi < clip->lo || xi > clip->hi)
          throw invalid_parameter("anchor point lies outside the clip box");
    }
  }

  // (min, max) of the row functional over the ball.
  std::pair<double, double> operator()(const double* a, std::size_t n) const {
    if (!clip) {
      double nrm = 0.0;
      switch (q) {
        case Norm::one:
          for (std::size_t r = 0; r < n; ++r) nrm += std::fabs(a[r]);
          break;
        case Norm::two: {
          for (std::size_t r = 0; r < n; ++r) nrm += a[r] * a[r];
          nrm = std::sqrt(nrm);
          break;
        }
        case Norm::inf: {
          for (std::size_t r = 0; r < n; ++r)
            nrm = std::max(nrm, std::fabs(a[r]));
          break;
        }
      }
      return {-eps * nrm, eps * nrm};
    }
    double lo = 0.0, hi = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double dlo = std::max(-eps, clip->lo - (*x0)[r]);
      const double dhi = std::min(eps, clip->hi - (*x0)[r]);
      const double v1 = a[r] * dlo, v2 = a[r] * dhi;
      lo += std::min(v1, v2);
      hi += std::max(v1, v2);
    }
    return {lo, hi};
  }
};

}  // namespace detail

// Layer-by-layer bound propagation. Maintains the accumulated products
// A^(k) = W^(t) D^(t-1) W^(t-1) ... W^(k+1) D^(k) for the current target
// layer t; advancing the target left-multiplies every cached A^(k) by the
// new factor W^(t+1) D^(t), so each pair (t, k) costs one multiply total.
class BoundPropagator {
 public:
  BoundPropagator(const Network& net, Vec x0, double eps, Norm p,
                  std::optional<ClipBox> clip = std::nullopt)
      : net_(&net), x0_(std::move(x0)), extremes_(eps, p, x0_, clip) {
    if (x0_.size() != net.input_dim())
      throw shape_error("bound propagation: anchor length mismatch");
    if (eps < 0.0) throw invalid_parameter("negative radius");
  }

  // Compute two-side bounds of the next layer's pre-activation, then fold
  // that layer into the cache. Returns (gammaL, gammaU) for layer target()+1.
  std::pair<Vec, Vec> advance() {
    const std::size_t t = done_;  // 0-based index of the layer becoming the target
    if (t >= net_->layers.size())
      throw invalid_parameter("bound propagation advanced past the last layer");
    const Layer& Lt = net_->layers[t];

    // Extend the cache: A^(t-1) = W^(t) D^(t-1); A^(k) <- A^(t-1) * A_old^(k).
    if (t == 0) {
      A_.push_back(Lt.W);
    } else {
      Matrix head = scale_cols(Lt.W, slopes_[t - 1]);
      for (std::size_t k = 0; k < A_.size(); ++k) A_[k] = matmul(head, A_[k]);
      A_.push_back(std::move(head));
    }

    const std::size_t nt = Lt.W.rows;
    Vec gl(nt), gu(nt);
    for (std::size_t j = 0; j < nt; ++j) {
      // nu_j = A^(0)_j . x0 + b^(t)_j + sum_k A^(k)_j . b^(k)
      double nu = Lt.b[j];
      {
        const double* a0 = A_[0].row(j);
        for (std::size_t r = 0; r < x0_.size(); ++r) nu += a0[r] * x0_[r];
      }
      double mu_plus = 0.0, mu_minus = 0.0;
      for (std::size_t k = 1; k <= t; ++k) {
        const double* ak = A_[k].row(j);
        const Vec& bk = net_->layers[k - 1].b;
        const Vec& lk = lb_.l[k - 1];
        const NeuronPartition& pk = parts_[k - 1];
        double nub = 0.0;
        for (std::size_t r = 0; r < bk.size(); ++r) nub += ak[r] * bk[r];
        nu += nub;
        for (std::size_t r : pk.uncertain) {
          const double arj = ak[r];
          if (arj > 0.0)
            mu_plus -= arj * lk[r];
          else if (arj < 0.0)
            mu_minus -= arj * lk[r];
        }
      }
      const auto [lo, hi] = extremes_(A_[0].row(j), x0_.size());
      gu[j] = nu + mu_plus + hi;
      gl[j] = nu + mu_minus + lo;
    }

    // Record this layer's bounds/partition/slope if it feeds a ReLU.
    if (t + 1 < net_->layers.size()) {
      lb_.l.push_back(gl);
      lb_.u.push_back(gu);
      parts_.push_back(classify_neurons(gl, gu));
      slopes_.push_back(slope_matrix(gl, gu, parts_.back()));
    }
    ++done_;
    return {std::move(gl), std::move(gu)};
  }

  std::size_t target() const { return done_; }
  const LayerBounds& bounds() const { return lb_; }
  const std::vector<NeuronPartition>& partitions() const { return parts_; }

 private:
  const Network* net_;
  Vec x0_;
  detail::BallExtremes extremes_;
  std::size_t done_ = 0;
  std::vector<Matrix> A_;
  std::vector<Vec> slopes_;
  LayerBounds lb_;
  std::vector<NeuronPartition> parts_;
};

// Bounds for every hidden layer in order.
inline LayerBounds propagate_bounds(const Network& net, const Vec& x0,
                                    double eps, Norm p,
                                    std::optional<ClipBox> clip = std::nullopt) {
  BoundPropagator prop(net, x0, eps, p, clip);
  for (std::size_t t = 0; t + 1 < net.layers.size(); ++t) prop.advance();
  return prop.bounds();
}

// Full intermediate state of one two-side bound computation, for inspection:
// A^(k) products, the bias selector matrices T/H (n_k x n_target, nonzero
// only on uncertain rows), and the per-output constants.
struct TwoSideState {
  std::vector<Matrix> A;     // A[k], k = 0..t-1
  std::vector<Matrix> T, H;  // T[k-1], H[k-1] for k = 1..t-1
  std::vector<Vec> slopes;   // D^(k) diagonals, k = 1..t-1
  Vec nu, mu_plus, mu_minus;
  Vec gammaL, gammaU;
};

// Two-side bounds of layer mprime's pre-activation given bounds for layers
// 1..mprime-1 (prior.l/u[k-1] bounds layer k). Standalone form of the same
// computation BoundPropagator performs incrementally.
inline TwoSideState compute_two_side_state(
    const Network& net, const Vec& x0, double eps, Norm p,
    const LayerBounds& prior, std::size_t mprime,
    std::optional<ClipBox> clip = std::nullopt) {
  if (mprime < 1 || mprime > net.layers.size())
    throw invalid_parameter("target layer out of range");
  if (prior.l.size() + 1 < mprime)
    throw invalid_parameter("prior bounds must cover layers 1.." +
                            std::to_string(mprime - 1));
  if (x0.size() != net.input_dim())
    throw shape_error("two-side bounds: anchor length mismatch");
  for (std::size_t k = 0; k + 1 < mprime; ++k)
    if (prior.l[k].size() != net.layers[k].W.rows ||
        prior.u[k].size() != net.layers[k].W.rows)
      throw invalid_parameter("prior bounds have wrong width at layer " +
                              std::to_string(k + 1));
  detail::BallExtremes extremes(eps, p, x0, clip);

  TwoSideState st;
  std::vector<NeuronPartition> parts;
  for (std::size_t k = 0; k + 1 < mprime; ++k) {
    parts.push_back(classify_neurons(prior.l[k], prior.u[k]));
    st.slopes.push_back(slope_matrix(prior.l[k], prior.u[k], parts.back()));
  }

  // A^(t-1) = W^(t) D^(t-1); A^(k-1) = A^(k) W^(k) D^(k-1) down to A^(0).
  st.A.assign(mprime, Matrix());
  const Layer& Lt = net.layers[mprime - 1];
  st.A[mprime - 1] = mprime == 1 ? Lt.W : scale_cols(Lt.W, st.slopes[mprime - 2]);
  for (std::size_t k = mprime - 1; k >= 1; --k) {
    const Matrix& Wk = net.layers[k - 1].W;
    st.A[k - 1] = k == 1 ? matmul(st.A[k], Wk)
                         : matmul(st.A[k], scale_cols(Wk, st.slopes[k - 2]));
  }

  const std::size_t nt = Lt.W.rows;
  const std::size_t n0 = net.input_dim();
  st.nu.assign(nt, 0.0);
  st.mu_plus.assign(nt, 0.0);
  st.mu_minus.assign(nt, 0.0);
  st.gammaL.assign(nt, 0.0);
  st.gammaU.assign(nt, 0.0);
  for (std::size_t k = 1; k < mprime; ++k) {
    st.T.emplace_back(net.layers[k - 1].W.rows, nt);
    st.H.emplace_back(net.layers[k - 1].W.rows, nt);
  }
  for (std::size_t j = 0; j < nt; ++j) {
    double nu = Lt.b[j];
    const double* a0 = st.A[0].row(j);
    for (std::size_t r = 0; r < n0; ++r) nu += a0[r] * x0[r];
    double mp = 0.0, mm = 0.0;
    for (std::size_t k = 1; k < mprime; ++k) {
      const double* ak = st.A[k].row(j);
      const Vec& bk = net.layers[k - 1].b;
      const Vec& lk = prior.l[k - 1];
      for (std::size_t r = 0; r < bk.size(); ++r) nu += ak[r] * bk[r];
      for (std::size_t r : parts[k - 1].uncertain) {
        if (ak[r] > 0.0) {
          st.T[k - 1](r, j) = lk[r];
          mp -= ak[r] * lk[r];
        } else if (ak[r] < 0.0) {
          st.H[k - 1](r, j) = lk[r];
          mm -= ak[r] * lk[r];
        }
      }
    }
    const auto [lo, hi] = extremes(a0, n0);
    st.nu[j] = nu;
    st.mu_plus[j] = mp;
    st.mu_minus[j] = mm;
    st.gammaU[j] = nu + mp + hi;
    st.gammaL[j] = nu + mm + lo;
  }
  return st;
}

inline std::pair<Vec, Vec> compute_two_side_bounds(
    const Network& net, const Vec& x0, double eps, Norm p,
    const LayerBounds& prior, std::size_t mprime,
    std::optional<ClipBox> clip = std::nullopt) {
  TwoSideState st = compute_two_side_state(net, x0, eps, p, prior, mprime, clip);
  return {std::move(st.gammaL), std::move(st.gammaU)};
}

// Affine form f(x) = coef . x + c0.
struct AffineForm {
  Vec coef;
  double c0 = 0.0;

  double operator()(const Vec& x) const { return dot(coef, x) + c0; }
};

struct AffinePair {
  AffineForm lower, upper;
};

// The two affine functions that sandwich g over the ball: both share the
// coefficient row A^(0); the constants differ by which side's bias
// selector (T vs H) is folded in.
inline AffinePair output_bound_functions(const MarginNetwork& m, const Vec& x0,
                                         double eps, Norm p,
                                         const LayerBounds& lb,
                                         std::optional<ClipBox> clip = std::nullopt) {
  const Network& net = m.net;
  if (lb.l.size() + 1 != net.layers.size())
    throw invalid_parameter("layer bounds incomplete for this network");
  TwoSideState st =
      compute_two_side_state(net, x0, eps, p, lb, net.layers.size(), clip);
  AffinePair out;
  const std::size_t n0 = net.input_dim();
  out.upper.coef.assign(st.A[0].row(0), st.A[0].row(0) + n0);
  out.lower.coef = out.upper.coef;
  const double a0x0 = dot(out.upper.coef, x0);
  out.upper.c0 = st.nu[0] + st.mu_plus[0] - a0x0;
  out.lower.c0 = st.nu[0] + st.mu_minus[0] - a0x0;
  return out;
}

}  // namespace relucert
