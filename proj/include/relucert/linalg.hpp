#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "relucert/errors.hpp"

namespace relucert {

using Vec = std::vector<double>;

// Dense row-major matrix. Row-major so that row slices W_{r,:} used by the
// bound formulas are contiguous.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return a[i * cols + j];
  }

  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }

  bool empty() const { return rows == 0 || cols == 0; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

enum class Norm { one, two, inf };

inline std::string to_string(Norm p) {
  switch (p) {
    case Norm::one: return "1";
    case Norm::two: return "2";
    case Norm::inf: return "inf";
  }
  return "?";
}

// Accepts "1", "2", "inf" (and "Inf"/"INF").
inline Norm norm_from_string(const std::string& s) {
  if (s == "1") return Norm::one;
  if (s == "2") return Norm::two;
  if (s == "inf" || s == "Inf" || s == "INF") return Norm::inf;
  throw invalid_parameter("norm order must be one of {1,2,inf}, got \"" + s +
                          "\"");
}

inline double vec_qnorm(const Vec& v, Norm q) {
  switch (q) {
    case Norm::one: {
      double s = 0.0;
      for (double x : v) s += std::fabs(x);
      return s;
    }
    case Norm::two: {
      double s = 0.0;
      for (double x : v) s += x * x;
      return std::sqrt(s);
    }
    case Norm::inf: {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::fabs(x));
      return m;
    }
  }
  throw invalid_parameter("unsupported norm order");
}

// q with 1/p + 1/q = 1: inf<->1, 2<->2.
inline Norm dual_order(Norm p) {
  switch (p) {
    case Norm::one: return Norm::inf;
    case Norm::two: return Norm::two;
    case Norm::inf: return Norm::one;
  }
  throw invalid_parameter("unsupported norm order");
}

// Largest singular value via power iteration on W^T W. Deterministic
// all-ones start; iteration cap 500, relative tolerance 1e-10.
inline double spectral_norm(const Matrix& W) {
  const std::size_t n = W.cols;
  Vec x(n, 1.0), wx(W.rows), y(n);
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    for (std::size_t i = 0; i < W.rows; ++i) {
      const double* r = W.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += r[j] * x[j];
      wx[i] = s;
    }
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < W.rows; ++i) {
      const double* r = W.row(i);
      const double wi = wx[i];
      for (std::size_t j = 0; j < n; ++j) y[j] += wi * r[j];
    }
    double xx = 0.0, xy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      xx += x[j] * x[j];
      xy += x[j] * y[j];
    }
    const double lambda_new = xy / xx;
    double ynorm = 0.0;
    for (double v : y) ynorm += v * v;
    ynorm = std::sqrt(ynorm);
    if (ynorm == 0.0) return 0.0;
    for (std::size_t j = 0; j < n; ++j) x[j] = y[j] / ynorm;
    if (it > 0 && std::fabs(lambda_new - lambda) <= 1e-10 * std::fabs(lambda_new))
      return std::sqrt(std::max(lambda_new, 0.0));
    lambda = lambda_new;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

// ||W||_{p->p}: p=inf max absolute row sum, p=1 max absolute column sum,
// p=2 largest singular value.
inline double induced_norm(const Matrix& W, Norm p) {
  if (W.empty()) throw invalid_parameter("induced_norm: empty matrix");
  switch (p) {
    case Norm::inf: {
      double m = 0.0;
      for (std::size_t i = 0; i < W.rows; ++i) {
        const double* r = W.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < W.cols; ++j) s += std::fabs(r[j]);
        m = std::max(m, s);
      }
      return m;
    }
    case Norm::one: {
      Vec colsum(W.cols, 0.0);
      for (std::size_t i = 0; i < W.rows; ++i) {
        const double* r = W.row(i);
        for (std::size_t j = 0; j < W.cols; ++j) colsum[j] += std::fabs(r[j]);
      }
      return *std::max_element(colsum.begin(), colsum.end());
    }
    case Norm::two:
      return spectral_norm(W);
  }
  throw invalid_parameter("unsupported norm order");
}

// C = A * B, i-k-j loop order so the inner loop streams contiguous rows.
inline Matrix matmul(const Matrix& A, const Matrix& B) {
  if (A.cols != B.rows)
    throw shape_error("matmul: inner dimensions disagree (" +
                      std::to_string(A.cols) + " vs " + std::to_string(B.rows) +
                      ")");
  Matrix C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* arow = A.row(i);
    double* crow = C.row(i);
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = B.row(k);
      for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return C;
}

inline Vec matvec(const Matrix& A, const Vec& x) {
  if (A.cols != x.size())
    throw shape_error("matvec: dimension mismatch (" + std::to_string(A.cols) +
                      " vs " + std::to_string(x.size()) + ")");
  Vec y(A.rows, 0.0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* r = A.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

// y = A^T x for a single row vector x (x.size() == A.rows).
inline Vec vecmat(const Vec& x, const Matrix& A) {
  if (A.rows != x.size())
    throw shape_error("vecmat: dimension mismatch (" + std::to_string(x.size()) +
                      " vs " + std::to_string(A.rows) + ")");
  Vec y(A.cols, 0.0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* r = A.row(i);
    for (std::size_t j = 0; j < A.cols; ++j) y[j] += xi * r[j];
  }
  return y;
}

// B = A with column j scaled by d[j]; used to fold diagonal slope matrices.
inline Matrix scale_cols(const Matrix& A, const Vec& d) {
  if (A.cols != d.size())
    throw shape_error("scale_cols: dimension mismatch");
  Matrix B = A;
  for (std::size_t i = 0; i < B.rows; ++i) {
    double* r = B.row(i);
    for (std::size_t j = 0; j < B.cols; ++j) r[j] *= d[j];
  }
  return B;
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw shape_error("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.a); }

}  // namespace relucert
