#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "relucert/errors.hpp"
#include "relucert/fastlin.hpp"
#include "relucert/fastlip.hpp"
#include "relucert/model.hpp"
#include "relucert/rng.hpp"

namespace relucert {

enum class Method { fast_lin, fast_lip, op_norm, norm_split };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::fast_lin: return "fast-lin";
    case Method::fast_lip: return "fast-lip";
    case Method::op_norm: return "op-norm";
    case Method::norm_split: return "norm-split";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "fast-lin") return Method::fast_lin;
  if (s == "fast-lip") return Method::fast_lip;
  if (s == "op-norm") return Method::op_norm;
  if (s == "norm-split") return Method::norm_split;
  throw invalid_parameter(
      "method must be one of {fast-lin,fast-lip,op-norm,norm-split,all}, got \"" +
      s + "\"");
}

struct SearchConfig {
  double eps0 = 0.05;       // first probe radius
  int max_iter = 15;        // bisection iterations after bracketing
  double factor = 2.0;      // bracket expansion/shrink factor
  double floor_eps = 1e-8;  // give up shrinking below this
  double rel_tol = 1e-5;    // stop when (hi-lo) <= rel_tol*lo
  int max_expand = 60;      // cap on doubling steps for unbounded predicates
};

struct Certificate {
  Method method = Method::fast_lin;
  Norm p = Norm::inf;
  std::size_t true_class = 0;
  std::optional<std::size_t> target_class;
  double radius = 0.0;  // certified lower bound on minimum distortion
  int iterations = 0;   // bisection steps taken
  double bracket_safe = 0.0;                 // last radius that passed
  std::optional<double> bracket_unsafe;      // last radius that failed, if any
  bool misclassified = false;  // anchor already misclassified; radius 0
  bool unbounded = false;      // predicate never failed while expanding
  double wall_ms = 0.0;
};

struct BinarySearchOutcome {
  double lo = 0.0;
  std::optional<double> hi;
  int iterations = 0;
  bool unbounded = false;
};

// Largest radius satisfying a monotone certification predicate, bracketed by
// doubling/halving from eps0 and then bisected. Always returns the safe
// (certified) end of the final bracket.
inline BinarySearchOutcome binary_search_radius(
    const std::function<bool(double)>& certified, const SearchConfig& cfg) {
  if (cfg.eps0 <= 0.0) throw invalid_parameter("eps0 must be positive");
  if (cfg.factor <= 1.0) throw invalid_parameter("bracket factor must exceed 1");
  BinarySearchOutcome out;
  double e = cfg.eps0;
  if (certified(e)) {
    out.lo = e;
    for (int i = 0; i < cfg.max_expand && !out.hi; ++i) {
      e *= cfg.factor;
      if (certified(e))
        out.lo = e;
      else
        out.hi = e;
    }
    if (!out.hi) {
      out.unbounded = true;  // never failed; report the largest probed radius
      return out;
    }
  } else {
    out.hi = e;
    while (true) {
      e /= cfg.factor;
      if (e < cfg.floor_eps) return out;  // lo stays 0
      if (certified(e)) {
        out.lo = e;
        break;
      }
      out.hi = e;
    }
  }
  for (int i = 0; i < cfg.max_iter; ++i) {
    if (*out.hi - out.lo <= cfg.rel_tol * out.lo) break;
    const double mid = 0.5 * (out.lo + *out.hi);
    if (certified(mid))
      out.lo = mid;
    else
      out.hi = mid;
    ++out.iterations;
  }
  return out;
}

namespace detail {

inline bool fastlin_certified(const MarginNetwork& m, const Vec& x0, double eps,
                              Norm p, const std::optional<ClipBox>& clip) {
  BoundPropagator prop(m.net, x0, eps, p, clip);
  Vec gl;
  for (std::size_t t = 0; t < m.net.layers.size(); ++t)
    gl = prop.advance().first;
  return gl[0] > 0.0;
}

inline bool fastlip_certified(const MarginNetwork& m, const Vec& x0, double g0,
                              double eps, Norm p,
                              const std::optional<ClipBox>& clip) {
  const LayerBounds lb = propagate_bounds(m.net, x0, eps, p, clip);
  const Vec v = grad_bound_all(m, lb);
  const double nv = vec_qnorm(v, dual_order(p));
  if (nv == 0.0) return true;
  return g0 / nv >= eps;
}

inline bool normsplit_certified(const MarginNetwork& m, const Vec& x0,
                                double g0, double eps, Norm p,
                                const std::optional<ClipBox>& clip) {
  const LayerBounds lb = propagate_bounds(m.net, x0, eps, p, clip);
  const NeuronPartition part = classify_neurons(lb.l[0], lb.u[0]);
  const double L = norm_split_bound_2layer(m, part, dual_order(p));
  if (L == 0.0) return true;
  return g0 / L >= eps;
}

}  // namespace detail

// Certified radius for the targeted attack c -> j. The anchor must be
// classified as c; otherwise a zero-radius certificate flagged misclassified
// is returned.
inline Certificate certify_target(const Network& net, const Vec& x0,
                                  std::size_t c, std::size_t j, Norm p,
                                  Method method,
                                  const SearchConfig& cfg = SearchConfig{},
                                  std::optional<ClipBox> clip = std::nullopt) {
  if (c == j) throw invalid_parameter("target class equals the true class");
  if (method == Method::norm_split && net.layers.size() != 2)
    throw invalid_parameter("norm-split bound is defined for exactly one hidden layer");
  const auto t0 = std::chrono::steady_clock::now();
  Certificate cert;
  cert.method = method;
  cert.p = p;
  cert.true_class = c;
  cert.target_class = j;

  const Vec logits = forward(net, x0);
  const std::size_t pred = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  const MarginNetwork m = merge_last_layer(net, c, j);
  const double g0 = forward_margin(m, x0);
  if (pred != c || g0 <= 0.0) {
    cert.misclassified = true;
    cert.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    return cert;
  }

  if (method == Method::op_norm) {
    cert.radius = opnorm_bound(net, x0, c, j, p);
    cert.unbounded = !std::isfinite(cert.radius);
    cert.bracket_safe = cert.radius;
  } else {
    std::function<bool(double)> pred_fn;
    switch (method) {
      case Method::fast_lin:
        pred_fn = [&](double e) { return detail::fastlin_certified(m, x0, e, p, clip); };
        break;
      case Method::fast_lip:
        pred_fn = [&](double e) {
          return detail::fastlip_certified(m, x0, g0, e, p, clip);
        };
        break;
      case Method::norm_split:
        pred_fn = [&](double e) {
          return detail::normsplit_certified(m, x0, g0, e, p, clip);
        };
        break;
      default: break;
    }
    const BinarySearchOutcome out = binary_search_radius(pred_fn, cfg);
    cert.radius = out.lo;
    cert.iterations = out.iterations;
    cert.bracket_safe = out.lo;
    cert.bracket_unsafe = out.hi;
    cert.unbounded = out.unbounded;
    if (!std::isfinite(cert.radius))
      throw numeric_error("certified radius is not finite");
  }
  cert.wall_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return cert;
}

struct UntargetedResult {
  Certificate overall;
  std::vector<Certificate> per_target;
};

// Untargeted radius = min over j != c of the targeted radii. Per-target
// certificates are retained. threads > 1 distributes targets.
inline UntargetedResult certify_untargeted(
    const Network& net, const Vec& x0, std::size_t c, Norm p, Method method,
    const SearchConfig& cfg = SearchConfig{},
    std::optional<ClipBox> clip = std::nullopt, unsigned threads = 1) {
  const std::size_t nout = net.output_dim();
  if (c >= nout) throw invalid_parameter("class index out of range");
  if (nout < 2) throw invalid_parameter("untargeted certification needs >= 2 classes");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> targets;
  for (std::size_t j = 0; j < nout; ++j)
    if (j != c) targets.push_back(j);

  UntargetedResult res;
  res.per_target.resize(targets.size());
  const unsigned nthreads =
      std::max(1u, std::min<unsigned>(threads, targets.size()));
  if (nthreads == 1) {
    for (std::size_t i = 0; i < targets.size(); ++i)
      res.per_target[i] = certify_target(net, x0, c, targets[i], p, method, cfg, clip);
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errs(nthreads);
    for (unsigned t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = next.fetch_add(1); i < targets.size();
               i = next.fetch_add(1))
            res.per_target[i] =
                certify_target(net, x0, c, targets[i], p, method, cfg, clip);
        } catch (...) {
          errs[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  }

  res.overall = res.per_target.front();
  for (const Certificate& cert : res.per_target)
    if (cert.radius < res.overall.radius) res.overall = cert;
  res.overall.target_class.reset();
  res.overall.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
  return res;
}

enum class TargetMode { runner_up, random, least_likely };

// Attack target choice: runner-up = strongest other logit, least-likely =
// weakest, random = seeded uniform over the other classes.
inline std::size_t select_target(const Vec& logits, std::size_t c,
                                 TargetMode mode, std::uint64_t seed = 0) {
  if (logits.size() < 2)
    throw invalid_parameter("select_target needs >= 2 classes");
  if (c >= logits.size()) throw invalid_parameter("class index out of range");
  switch (mode) {
    case TargetMode::runner_up: {
      std::size_t best = c == 0 ? 1 : 0;
      for (std::size_t j = 0; j < logits.size(); ++j)
        if (j != c && logits[j] > logits[best]) best = j;
      return best;
    }
    case TargetMode::least_likely: {
      std::size_t best = c == 0 ? 1 : 0;
      for (std::size_t j = 0; j < logits.size(); ++j)
        if (j != c && logits[j] < logits[best]) best = j;
      return best;
    }
    case TargetMode::random: {
      Rng rng(seed);
      const std::size_t idx = rng.below(logits.size() - 1);
      return idx >= c ? idx + 1 : idx;
    }
  }
  throw invalid_parameter("unknown target mode");
}

}  // namespace relucert
