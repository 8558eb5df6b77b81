#pragma once

// Dense linear algebra used throughout lipcert: row-major matrices, spectral
// norms by power iteration, Jacobi eigenvalues and Cholesky factorization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lipcert/errors.hpp"

namespace lipcert {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, Vector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("matrix data length does not match its shape");
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw ValidationError("matrix entry is not finite");
    }
  }
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ValidationError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  const Vector& data() const noexcept { return data_; }
  Vector& data() noexcept { return data_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

/// Square symmetric matrix. Every constructor symmetrizes its input as
/// (S + S^T) / 2, so the stored entries are exactly symmetric.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t dim) : m_(dim, dim) {}

  /// Symmetrizes `m`; throws if `m` is not square.
  explicit SymMatrix(const DenseMatrix& m) : m_(m) {
    if (m.rows() != m.cols()) throw ValidationError("symmetric matrix must be square");
    symmetrize();
  }
  SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
      : SymMatrix(DenseMatrix(rows)) {}

  static SymMatrix identity(std::size_t n) { return SymMatrix(DenseMatrix::identity(n)); }
  static SymMatrix diagonal(std::span<const double> d) {
    SymMatrix s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s.m_(i, i) = d[i];
    return s;
  }

  std::size_t dim() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }

  /// Writes both (i, j) and (j, i).
  void set(std::size_t i, std::size_t j, double v) {
    m_(i, j) = v;
    m_(j, i) = v;
  }
  void add(std::size_t i, std::size_t j, double v) {
    m_(i, j) += v;
    if (i != j) m_(j, i) += v;
  }

  const DenseMatrix& dense() const noexcept { return m_; }
  std::span<const double> row(std::size_t i) const { return m_.row(i); }

  /// Raw mutable access for in-place kernels; callers must keep symmetry.
  DenseMatrix& mutable_dense() noexcept { return m_; }
  void symmetrize() {
    const std::size_t n = m_.rows();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = 0.5 * (m_(i, j) + m_(j, i));
        m_(i, j) = v;
        m_(j, i) = v;
      }
    }
  }

  bool operator==(const SymMatrix&) const = default;

 private:
  DenseMatrix m_;
};

// ---------------------------------------------------------------------------
// Basic kernels

inline DenseMatrix transpose(const DenseMatrix& m) {
  DenseMatrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ValidationError("matrix product shape mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

/// a^T * b without forming the transpose.
inline DenseMatrix multiply_transposed(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw ValidationError("matrix product shape mismatch");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ak = a.row(k);
    auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      auto ci = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

inline Vector matvec(const DenseMatrix& m, std::span<const double> x) {
  if (x.size() != m.cols()) throw ValidationError("matrix-vector shape mismatch");
  Vector y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

inline Vector matvec_transposed(const DenseMatrix& m, std::span<const double> x) {
  if (x.size() != m.rows()) throw ValidationError("matrix-vector shape mismatch");
  Vector y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double xi = x[i];
    for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

inline Vector matvec(const SymMatrix& s, std::span<const double> x) {
  return matvec(s.dense(), x);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

/// Induced infinity norm (max absolute row sum).
inline double norm_inf(const DenseMatrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}
inline double norm_inf(const SymMatrix& s) { return norm_inf(s.dense()); }

inline double max_abs(const DenseMatrix& m) {
  double best = 0.0;
  for (double v : m.data()) best = std::max(best, std::abs(v));
  return best;
}

inline bool is_zero(const DenseMatrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return v == 0.0; });
}

// ---------------------------------------------------------------------------
// Spectral norm

struct PowerIterationResult {
  double value = 0.0;     // estimate of the largest singular value
  double residual = 0.0;  // ||G v - r v|| for the Gram matrix G and unit v
  std::size_t iterations = 0;
  bool converged = false;
};

/// Power iteration on the smaller Gram matrix of `m` (m^T m or m m^T) from a
/// seeded Gaussian start. Never throws on non-convergence; the returned value
/// is a Rayleigh quotient and therefore never exceeds the true norm.
inline PowerIterationResult estimate_spectral_norm(const DenseMatrix& m, double rel_tol,
                                                   std::size_t max_iter,
                                                   std::uint64_t seed) {
  PowerIterationResult out;
  if (m.empty() || is_zero(m)) {
    out.converged = true;
    return out;
  }
  const bool right = m.cols() <= m.rows();
  const std::size_t n = right ? m.cols() : m.rows();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  double nv = norm2(v);
  for (auto& x : v) x /= nv;

  auto gram_apply = [&](const Vector& x) {
    return right ? matvec_transposed(m, matvec(m, x)) : matvec(m, matvec_transposed(m, x));
  };

  double prev = -1.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Vector w = gram_apply(v);
    const double rayleigh = dot(v, w);
    double res2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) res2 += (w[i] - rayleigh * v[i]) * (w[i] - rayleigh * v[i]);
    out.value = std::sqrt(std::max(rayleigh, 0.0));
    out.residual = std::sqrt(res2);
    out.iterations = it;
    const double nw = norm2(w);
    if (nw == 0.0) {
      // start vector landed in the null space of a nonzero matrix: restart
      for (auto& x : v) x = normal(rng);
      nv = norm2(v);
      for (auto& x : v) x /= nv;
      prev = -1.0;
      continue;
    }
    if (prev >= 0.0 && std::abs(rayleigh - prev) <= rel_tol * rayleigh) {
      out.converged = true;
      return out;
    }
    prev = rayleigh;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
  }
  return out;
}

/// Largest singular value of `m`. Throws ConvergenceError carrying the last
/// estimate and residual when `max_iter` iterations are not enough.
inline double spectral_norm(const DenseMatrix& m, double rel_tol = 1e-10,
                            std::size_t max_iter = 10000, std::uint64_t seed = 0) {
  if (!(rel_tol > 0.0)) throw ValidationError("spectral_norm: rel_tol must be positive");
  if (max_iter < 1) throw ValidationError("spectral_norm: max_iter must be at least 1");
  const auto r = estimate_spectral_norm(m, rel_tol, max_iter, seed);
  if (!r.converged) {
    throw ConvergenceError("power iteration did not converge", r.value, r.residual);
  }
  return r.value;
}

// ---------------------------------------------------------------------------
// Symmetric eigenvalues (cyclic Jacobi)

/// All eigenvalues of `s`, ascending.
inline Vector symmetric_eigenvalues(const SymMatrix& s) {
  const std::size_t n = s.dim();
  if (n == 0) throw ValidationError("eigenvalues of an empty matrix");
  DenseMatrix a = s.dense();
  double frob2 = 0.0;
  for (double v : a.data()) frob2 += v * v;

  constexpr std::size_t kMaxSweeps = 100;
  bool done = false;
  for (std::size_t sweep = 0; sweep < kMaxSweeps && !done; ++sweep) {
    double off2 = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off2 += a(p, q) * a(p, q);
    if (off2 <= 1e-32 * frob2 || off2 == 0.0) {
      done = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // skip rotations that cannot change the diagonal in floating point
        if (std::abs(apq) < 1e-300 ||
            (std::abs(app) + 1e3 * std::abs(apq) == std::abs(app) &&
             std::abs(aqq) + 1e3 * std::abs(apq) == std::abs(aqq) && sweep > 3)) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          const double np = c * akp - sn * akq;
          const double nq = sn * akp + c * akq;
          a(k, p) = np;
          a(p, k) = np;
          a(k, q) = nq;
          a(q, k) = nq;
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
      }
    }
  }
  if (!done) {
    double off2 = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off2 += a(p, q) * a(p, q);
    if (off2 > 1e-24 * frob2) {
      throw ConvergenceError("Jacobi eigenvalue iteration did not converge", 0.0,
                             std::sqrt(off2));
    }
  }
  Vector eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

inline double max_eigenvalue(const SymMatrix& s) { return symmetric_eigenvalues(s).back(); }

/// True iff lambda_max(s) <= slack.
inline bool is_neg_semidefinite(const SymMatrix& s, double slack = 0.0) {
  if (!(slack >= 0.0)) throw ValidationError("is_neg_semidefinite: slack must be >= 0");
  return max_eigenvalue(s) <= slack;
}

// ---------------------------------------------------------------------------
// Cholesky

/// Lower-triangular factor L with S = L L^T.
class Cholesky {
 public:
  /// Returns the index of the failing pivot instead of throwing.
  static std::optional<Cholesky> try_factor(const SymMatrix& s, std::size_t* failed_pivot = nullptr) {
    return try_factor(s.dense(), failed_pivot);
  }
  static std::optional<Cholesky> try_factor(const DenseMatrix& s,
                                             std::size_t* failed_pivot = nullptr) {
    const std::size_t n = s.rows();
    Cholesky c;
    c.l_ = DenseMatrix(n, n);
    DenseMatrix& l = c.l_;
    for (std::size_t j = 0; j < n; ++j) {
      auto lj = l.row(j);
      double d = s(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
      if (!(d > 0.0) || !std::isfinite(d)) {
        if (failed_pivot) *failed_pivot = j;
        return std::nullopt;
      }
      const double djj = std::sqrt(d);
      lj[j] = djj;
      for (std::size_t i = j + 1; i < n; ++i) {
        auto li = l.row(i);
        double v = s(i, j);
        for (std::size_t k = 0; k < j; ++k) v -= li[k] * lj[k];
        li[j] = v / djj;
      }
    }
    return c;
  }

  /// Throws NotPositiveDefinite with the failing pivot.
  static Cholesky factor(const SymMatrix& s) {
    std::size_t pivot = 0;
    auto c = try_factor(s, &pivot);
    if (!c) throw NotPositiveDefinite(pivot);
    return std::move(*c);
  }

  std::size_t dim() const noexcept { return l_.rows(); }
  const DenseMatrix& lower() const noexcept { return l_; }

  double log_det() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) acc += std::log(l_(i, i));
    return 2.0 * acc;
  }

  Vector solve(std::span<const double> rhs) const {
    const std::size_t n = dim();
    if (rhs.size() != n) throw ValidationError("solve: right-hand side length mismatch");
    Vector y(rhs.begin(), rhs.end());
    for (std::size_t i = 0; i < n; ++i) {
      auto li = l_.row(i);
      double v = y[i];
      for (std::size_t k = 0; k < i; ++k) v -= li[k] * y[k];
      y[i] = v / li[i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double v = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) v -= l_(k, ii) * y[k];
      y[ii] = v / l_(ii, ii);
    }
    return y;
  }

  /// Solves L Z = B for a block of right-hand sides (B is dim x k).
  DenseMatrix solve_lower(DenseMatrix b) const {
    const std::size_t n = dim();
    if (b.rows() != n) throw ValidationError("solve_lower: shape mismatch");
    const std::size_t k = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
      auto bi = b.row(i);
      auto li = l_.row(i);
      for (std::size_t j = 0; j < i; ++j) {
        const double lij = li[j];
        if (lij == 0.0) continue;
        auto bj = b.row(j);
        for (std::size_t c = 0; c < k; ++c) bi[c] -= lij * bj[c];
      }
      const double inv = 1.0 / li[i];
      for (std::size_t c = 0; c < k; ++c) bi[c] *= inv;
    }
    return b;
  }

 private:
  DenseMatrix l_;
};

/// Solves s x = rhs for positive-definite s.
inline Vector solve_posdef(const SymMatrix& s, std::span<const double> rhs) {
  if (rhs.size() != s.dim()) throw ValidationError("solve_posdef: right-hand side length mismatch");
  return Cholesky::factor(s).solve(rhs);
}

}  // namespace lipcert
