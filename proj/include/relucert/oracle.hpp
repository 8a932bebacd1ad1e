#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "relucert/certify.hpp"
#include "relucert/errors.hpp"
#include "relucert/fastlin.hpp"
#include "relucert/linalg.hpp"
#include "relucert/model.hpp"
#include "relucert/rng.hpp"

namespace relucert {

struct OracleResult {
  enum class Kind { grid_min, pattern_enum, attack_upper, sample_check };
  Kind kind = Kind::sample_check;
  bool found = false;  // grid/attack: witness exists; sample_check: pass
  double value = 0.0;  // radius, bound, or 0/1 for sample_check
  std::optional<Vec> witness;
  std::size_t samples = 0;
  double searched_radius = 0.0;  // extent of the search when nothing was found
};

// n points with ||x - x0||_p <= eps, deterministic per seed.
// p=inf: per-coordinate uniform. p=2: uniform direction (normalized normal
// vector) with radius eps * u^(1/n0). p=1: direction from sign-symmetric
// exponentials normalized to unit l1 norm, same radial law.
inline std::vector<Vec> sample_in_ball(const Vec& x0, double eps, Norm p,
                                       std::size_t n, std::uint64_t seed) {
  if (eps < 0.0) throw invalid_parameter("negative radius");
  Rng rng(seed);
  const std::size_t d = x0.size();
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    Vec x = x0;
    if (eps > 0.0) {
      switch (p) {
        case Norm::inf:
          for (std::size_t i = 0; i < d; ++i) x[i] += rng.uniform(-eps, eps);
          break;
        case Norm::two: {
          Vec dir(d);
          double nrm = 0.0;
          do {
            for (std::size_t i = 0; i < d; ++i) dir[i] = rng.normal();
            nrm = vec_qnorm(dir, Norm::two);
          } while (nrm == 0.0);
          const double r =
              eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
          for (std::size_t i = 0; i < d; ++i) x[i] += r * dir[i] / nrm;
          break;
        }
        case Norm::one: {
          Vec dir(d);
          double nrm = 0.0;
          do {
            for (std::size_t i = 0; i < d; ++i) {
              const double mag = rng.exponential();
              dir[i] = rng.uniform() < 0.5 ? -mag : mag;
            }
            nrm = vec_qnorm(dir, Norm::one);
          } while (nrm == 0.0);
          const double r =
              eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
          for (std::size_t i = 0; i < d; ++i) x[i] += r * dir[i] / nrm;
          break;
        }
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

// Gradient of g through the activation pattern at x. Returns nullopt when
// any pre-activation sits within 1e-12 of zero (gradient undefined there).
inline std::optional<Vec> analytic_gradient(const MarginNetwork& m, const Vec& x) {
  if (!all_finite(x)) throw invalid_parameter("analytic_gradient: non-finite input");
  const Network& net = m.net;
  const std::size_t depth = net.layers.size();
  std::vector<Vec> masks;
  Vec h = x;
  for (std::size_t k = 0; k + 1 < depth; ++k) {
    Vec z = matvec(net.layers[k].W, h);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += net.layers[k].b[i];
    Vec mask(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (std::fabs(z[i]) <= 1e-12) return std::nullopt;
      mask[i] = z[i] > 0.0 ? 1.0 : 0.0;
    }
    masks.push_back(std::move(mask));
    for (double& v : z) v = std::max(v, 0.0);
    h = std::move(z);
  }
  Vec g = m.wbar();
  for (std::size_t k = depth - 1; k >= 1; --k) {
    Vec gm(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gm[i] = g[i] * masks[k - 1][i];
    g = vecmat(gm, net.layers[k - 1].W);
  }
  return g;
}

namespace detail {

// Attack-internal gradient: pattern taken as z > 0, no boundary signalling.
inline Vec subgradient(const MarginNetwork& m, const Vec& x) {
  const Network& net = m.net;
  const std::size_t depth = net.layers.size();
  std::vector<Vec> masks;
  Vec h = x;
  for (std::size_t k = 0; k + 1 < depth; ++k) {
    Vec z = matvec(net.layers[k].W, h);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += net.layers[k].b[i];
    Vec mask(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) mask[i] = z[i] > 0.0 ? 1.0 : 0.0;
    masks.push_back(std::move(mask));
    for (double& v : z) v = std::max(v, 0.0);
    h = std::move(z);
  }
  Vec g = m.wbar();
  for (std::size_t k = depth - 1; k >= 1; --k) {
    Vec gm(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gm[i] = g[i] * masks[k - 1][i];
    g = vecmat(gm, net.layers[k - 1].W);
  }
  return g;
}

}  // namespace detail

// Smallest ||delta||_p over a resolution^n0 grid with delta in
// [-box_radius, box_radius]^n0 at which g(x0 + delta) <= 0. An upper bound
// on the true minimum distortion whenever a witness is found.
inline OracleResult grid_min_distortion(const Network& net, const Vec& x0,
                                        std::size_t c, std::size_t j, Norm p,
                                        std::size_t resolution,
                                        double box_radius) {
  const std::size_t n0 = net.input_dim();
  if (n0 > 3) throw capacity_error("grid oracle supports n0 <= 3");
  if (resolution < 2) throw invalid_parameter("grid resolution must be >= 2");
  if (box_radius <= 0.0) throw invalid_parameter("grid box radius must be positive");
  const MarginNetwork m = merge_last_layer(net, c, j);
  OracleResult res;
  res.kind = OracleResult::Kind::grid_min;
  res.searched_radius = box_radius;
  res.value = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> idx(n0, 0);
  Vec delta(n0), x(n0);
  const double step = 2.0 * box_radius / static_cast<double>(resolution - 1);
  while (true) {
    for (std::size_t i = 0; i < n0; ++i) {
      delta[i] = -box_radius + step * static_cast<double>(idx[i]);
      x[i] = x0[i] + delta[i];
    }
    if (forward_margin(m, x) <= 0.0) {
      const double r = vec_qnorm(delta, p);
      if (r < res.value) {
        res.value = r;
        res.witness = delta;
        res.found = true;
      }
    }
    ++res.samples;
    std::size_t i = 0;
    while (i < n0 && ++idx[i] == resolution) {
      idx[i] = 0;
      ++i;
    }
    if (i == n0) break;
  }
  if (!res.found) res.value = 0.0;
  return res;
}

struct PatternEnumResult {
  Vec coord_max;      // per input coordinate, max |gradient| over patterns
  double max_qnorm = 0.0;
  std::size_t patterns = 0;
};

// Enumerates every activation assignment of the uncertain neurons (certain
// neurons keep their fixed state) and evaluates the exact gradient of each
// resulting linear piece. Capacity-capped at 2^16 patterns.
inline PatternEnumResult pattern_enum_max_grad(const MarginNetwork& m,
                                               const LayerBounds& lb, Norm q) {
  const Network& net = m.net;
  const std::size_t depth = net.layers.size();
  if (lb.l.size() + 1 != depth)
    throw invalid_parameter("layer bounds incomplete for this network");
  std::vector<NeuronPartition> parts;
  std::vector<std::pair<std::size_t, std::size_t>> unc;  // (layer, neuron)
  for (std::size_t k = 0; k + 1 < depth; ++k) {
    parts.push_back(classify_neurons(lb.l[k], lb.u[k]));
    for (std::size_t r : parts.back().uncertain) unc.emplace_back(k, r);
  }
  if (unc.size() > 16)
    throw capacity_error("pattern enumeration capped at 16 uncertain neurons, got " +
                         std::to_string(unc.size()));

  PatternEnumResult res;
  res.coord_max.assign(net.input_dim(), 0.0);
  std::vector<Vec> base_masks;
  for (std::size_t k = 0; k + 1 < depth; ++k) {
    Vec mask(net.layers[k].W.rows, 0.0);
    for (std::size_t r : parts[k].always_active) mask[r] = 1.0;
    base_masks.push_back(std::move(mask));
  }
  const std::size_t total = std::size_t{1} << unc.size();
  for (std::size_t bits = 0; bits < total; ++bits) {
    std::vector<Vec> masks = base_masks;
    for (std::size_t b = 0; b < unc.size(); ++b)
      masks[unc[b].first][unc[b].second] = (bits >> b) & 1 ? 1.0 : 0.0;
    Vec g = m.wbar();
    for (std::size_t k = depth - 1; k >= 1; --k) {
      Vec gm(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] = g[i] * masks[k - 1][i];
      g = vecmat(gm, net.layers[k - 1].W);
    }
    for (std::size_t i = 0; i < g.size(); ++i)
      res.coord_max[i] = std::max(res.coord_max[i], std::fabs(g[i]));
    res.max_qnorm = std::max(res.max_qnorm, vec_qnorm(g, q));
    ++res.patterns;
  }
  return res;
}

// Upper bound on minimum distortion by greedy descent: repeatedly step in
// the steepest-descent direction for the p norm, line-searching each ray for
// a sign change of g, with seeded random restarts. Any radius returned is
// witnessed by an actual misclassifying point.
inline OracleResult attack_upper_bound(const Network& net, const Vec& x0,
                                       std::size_t c, std::size_t j, Norm p,
                                       std::size_t budget = 20000,
                                       std::size_t restarts = 10,
                                       std::uint64_t seed = 1234) {
  const MarginNetwork m = merge_last_layer(net, c, j);
  OracleResult res;
  res.kind = OracleResult::Kind::attack_upper;
  const double g0 = forward_margin(m, x0);
  if (g0 <= 0.0) {
    res.found = true;
    res.value = 0.0;
    res.witness = Vec(x0.size(), 0.0);
    return res;
  }
  const std::size_t n0 = x0.size();
  std::size_t evals = 0;
  const auto g = [&](const Vec& x) {
    ++evals;
    return forward_margin(m, x);
  };
  const auto steepest = [&](const Vec& grad) -> std::optional<Vec> {
    Vec d(n0, 0.0);
    switch (p) {
      case Norm::inf: {
        bool any = false;
        for (std::size_t i = 0; i < n0; ++i) {
          if (grad[i] != 0.0) any = true;
          d[i] = grad[i] > 0.0 ? -1.0 : (grad[i] < 0.0 ? 1.0 : 1.0);
        }
        if (!any) return std::nullopt;
        return d;
      }
      case Norm::two: {
        const double nrm = vec_qnorm(grad, Norm::two);
        if (nrm == 0.0) return std::nullopt;
        for (std::size_t i = 0; i < n0; ++i) d[i] = -grad[i] / nrm;
        return d;
      }
      case Norm::one: {
        std::size_t best = 0;
        for (std::size_t i = 1; i < n0; ++i)
          if (std::fabs(grad[i]) > std::fabs(grad[best])) best = i;
        if (grad[best] == 0.0) return std::nullopt;
        d[best] = grad[best] > 0.0 ? -1.0 : 1.0;
        return d;
      }
    }
    return std::nullopt;
  };

  double best = std::numeric_limits<double>::infinity();
  Vec best_witness;
  const double tmax0 = 16.0 * std::max(vec_qnorm(x0, p), 1.0);
  Rng rng(seed);
  for (std::size_t r = 0; r < restarts && evals < budget; ++r) {
    Vec x = x0;
    if (r > 0)
      for (std::size_t i = 0; i < n0; ++i) x[i] += 0.01 * rng.normal();
    for (int step = 0; step < 60 && evals < budget; ++step) {
      const Vec grad = detail::subgradient(m, x);
      const auto dir = steepest(grad);
      if (!dir) break;
      const double cap = std::isfinite(best) ? best : tmax0;
      double t = 1e-3 * std::max(1.0, cap);
      std::optional<double> t_hit;
      while (t <= 2.0 * cap && evals < budget) {
        Vec xx = x;
        for (std::size_t i = 0; i < n0; ++i) xx[i] += t * (*dir)[i];
        if (g(xx) <= 0.0) {
          t_hit = t;
          break;
        }
        t *= 2.0;
      }
      if (t_hit) {
        double a = 0.0, b = *t_hit;
        for (int it = 0; it < 50 && evals < budget; ++it) {
          const double mid = 0.5 * (a + b);
          Vec xx = x;
          for (std::size_t i = 0; i < n0; ++i) xx[i] += mid * (*dir)[i];
          if (g(xx) <= 0.0)
            b = mid;
          else
            a = mid;
        }
        Vec xc = x;
        for (std::size_t i = 0; i < n0; ++i) xc[i] += b * (*dir)[i];
        // The claim is validated on x0 + delta, the reconstruction consumers
        // apply, which can differ from xc by an ulp.
        Vec delta(n0), xr(n0);
        for (std::size_t i = 0; i < n0; ++i) {
          delta[i] = xc[i] - x0[i];
          xr[i] = x0[i] + delta[i];
        }
        if (forward_margin(m, xr) <= 0.0) {
          const double rad = vec_qnorm(delta, p);
          if (rad < best) {
            best = rad;
            best_witness = delta;
          }
        }
        for (std::size_t i = 0; i < n0; ++i) x[i] += 0.95 * b * (*dir)[i];
      } else {
        for (std::size_t i = 0; i < n0; ++i)
          x[i] += std::min(0.05 * cap, 0.5) * (*dir)[i];
      }
    }
  }
  res.samples = evals;
  if (std::isfinite(best)) {
    res.found = true;
    res.value = best;
    res.witness = std::move(best_witness);
  } else {
    res.searched_radius = tmax0;
  }
  return res;
}

// Samples the certified ball at radius * (1 - 1e-6) and checks that the
// certificate's claim holds at every point: g > 0 for targeted certificates,
// argmax == true class for untargeted ones.
inline OracleResult soundness_check(const Certificate& cert, const Network& net,
                                    const Vec& x0, std::size_t samples,
                                    std::uint64_t seed) {
  OracleResult res;
  res.kind = OracleResult::Kind::sample_check;
  res.samples = samples;
  res.found = true;
  res.value = 1.0;
  if (cert.radius <= 0.0 || !std::isfinite(cert.radius)) return res;  // nothing to sample
  const double r = cert.radius * (1.0 - 1e-6);
  std::optional<MarginNetwork> m;
  if (cert.target_class)
    m = merge_last_layer(net, cert.true_class, *cert.target_class);
  const auto holds_at = [&](const Vec& x) {
    if (m) return forward_margin(*m, x) > 0.0;
    const Vec logits = forward(net, x);
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    return pred == cert.true_class;
  };
  for (const Vec& x : sample_in_ball(x0, r, cert.p, samples, seed)) {
    if (holds_at(x)) continue;
    // Violations are only reported when they reproduce at x0 + delta, the
    // reconstruction consumers apply; an ulp-level boundary flip does not.
    Vec delta(x.size()), xr(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      delta[i] = x[i] - x0[i];
      xr[i] = x0[i] + delta[i];
    }
    if (holds_at(xr)) continue;
    res.found = false;
    res.value = 0.0;
    res.witness = std::move(delta);
    return res;
  }
  return res;
}

}  // namespace relucert
