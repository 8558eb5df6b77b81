#pragma once

// Log-barrier interior-point solver for
//
//   minimize  c^T z   subject to  G(z) = F_const + sum_k z_k F_k  <  0,
//                                  z_k > 0 for multiplier variables,
//
// plus a posteriori certificate verification and feasibility restoration.
//
// Each F_k is kept as L^T K_k L with a sparse K_k over lifted coordinates, so
// with Q = L S^{-1} L^T (S = -G) the barrier derivatives reduce to
//   grad_k = tr(K_k Q),   hess_kl = tr(K_k Q K_l Q),
// which are evaluated term by term from entries of Q.

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lipcert/errors.hpp"
#include "lipcert/lmi.hpp"
#include "lipcert/model.hpp"
#include "lipcert/numerics.hpp"

namespace lipcert {

struct SolverConfig {
  double gap_tol = 1e-8;
  double newton_tol = 1e-10;
  double mu_shrink = 0.2;
  std::size_t max_outer = 60;
  std::size_t max_newton = 50;
  double margin = 1e-9;
  std::size_t restore_bisection_iters = 60;

  void validate() const {
    if (!(gap_tol > 0.0) || !(newton_tol > 0.0) || !(margin > 0.0)) {
      throw ValidationError("solver tolerances must be positive");
    }
    if (!(mu_shrink > 0.0 && mu_shrink < 1.0)) throw ValidationError("mu_shrink must lie in (0, 1)");
    if (max_outer == 0 || max_newton == 0 || restore_bisection_iters == 0) {
      throw ValidationError("solver iteration limits must be positive");
    }
  }

  bool operator==(const SolverConfig&) const = default;
};

struct SolveStats {
  std::size_t outer_iters = 0;
  std::size_t newton_iters = 0;
  std::size_t phase1_iters = 0;
  double final_mu = 0.0;
  double phase1_tau = 0.0;  // 0 when the start point was already strictly feasible
  double wall_time = 0.0;   // seconds

  bool operator==(const SolveStats&) const = default;
};

struct SolveResult {
  double rho = 0.0;
  Vector lambdas;
  SolveStats stats;
  // Strictly feasible point, packed as (rho, lambdas...): the last central
  // point with lambda_max(G) <= -1e-6 (1 + ||G||_inf), else the Phase-I point.
  Vector anchor;
};

class SolverError : public NumericalError {
 public:
  SolverError(const std::string& what, Vector iterate, double mu, double decrement)
      : NumericalError(what + " (mu " + std::to_string(mu) + ", newton decrement " +
                       std::to_string(decrement) + ")"),
        iterate_(std::move(iterate)),
        mu_(mu),
        decrement_(decrement) {}

  const Vector& iterate() const noexcept { return iterate_; }
  double mu() const noexcept { return mu_; }
  double decrement() const noexcept { return decrement_; }

 private:
  Vector iterate_;
  double mu_;
  double decrement_;
};

struct LipschitzCertificate {
  double rho = 0.0;
  double l2 = 0.0;
  CouplingMode mode;
  Vector lambdas;
  double verified_margin = 0.0;  // lambda_max(M(rho, T)) from the Jacobi eigensolver
  double restore_theta = 0.0;    // blend weight toward the anchor (0: untouched)
  SolveStats stats;
  bool experimental = false;  // network-mode coupling

  bool operator==(const LipschitzCertificate&) const = default;
};

namespace detail {

inline double bilinear(const DenseMatrix& q, const SparseVector& x, const SparseVector& y) {
  double acc = 0.0;
  for (const auto& [i, xi] : x) {
    auto qi = q.row(i);
    for (const auto& [j, yj] : y) acc += xi * yj * qi[j];
  }
  return acc;
}

/// tr(sym(u,v) Q sym(u',v') Q) with sym(u,v) = (u v^T + v u^T) / 2.
inline double term_pair_trace(const DenseMatrix& q, const LiftedTerm& s, const LiftedTerm& t) {
  const double uu = bilinear(q, s.u, t.u);
  const double vv = bilinear(q, s.v, t.v);
  const double uv = bilinear(q, s.u, t.v);
  const double vu = bilinear(q, s.v, t.u);
  return 0.5 * (uu * vv + uv * vu);
}

/// Q = L S^{-1} L^T from the Cholesky factor of S.
inline DenseMatrix lifted_inverse(const LmiProgram& prog, const Cholesky& chol) {
  const DenseMatrix cinv = chol.solve_lower(DenseMatrix::identity(chol.dim()));
  const DenseMatrix sinv = multiply_transposed(cinv, cinv);
  const DenseMatrix y = multiply(prog.lift, sinv);
  return multiply(prog.lift, transpose(y));
}

struct BarrierDerivatives {
  Vector grad;      // of -log det(-G(z))
  DenseMatrix hess;
};

inline BarrierDerivatives barrier_derivatives(const LmiProgram& prog, const Cholesky& chol) {
  const DenseMatrix q = lifted_inverse(prog, chol);
  const std::size_t m = prog.num_variables();
  BarrierDerivatives d{Vector(m, 0.0), DenseMatrix(m, m)};
  for (std::size_t k = 0; k < m; ++k) {
    double g = 0.0;
    for (const auto& t : prog.variables[k].terms) g += t.weight * bilinear(q, t.u, t.v);
    d.grad[k] = g;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const auto& tk = prog.variables[k].terms;
    for (std::size_t l = k; l < m; ++l) {
      const auto& tl = prog.variables[l].terms;
      double h = 0.0;
      for (const auto& s : tk)
        for (const auto& t : tl) h += s.weight * t.weight * term_pair_trace(q, s, t);
      d.hess(k, l) = h;
      d.hess(l, k) = h;
    }
  }
  return d;
}

inline SymMatrix negated(const SymMatrix& g) {
  SymMatrix s = g;
  for (double& v : s.mutable_dense().data()) v = -v;
  return s;
}

/// Gershgorin upper bound on lambda_max.
inline double gershgorin_upper(const SymMatrix& s) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.dim(); ++i) {
    double r = 0.0;
    auto row = s.row(i);
    for (std::size_t j = 0; j < row.size(); ++j)
      if (j != i) r += std::abs(row[j]);
    best = std::max(best, row[i] + r);
  }
  return best;
}

/// Solves H x = rhs, adding a tiny ridge if H is numerically singular.
/// Solves H x = rhs after symmetric diagonal equilibration, adding a growing
/// ridge when the equilibrated matrix is numerically indefinite.
inline Vector solve_newton_system(DenseMatrix h, const Vector& rhs) {
  const std::size_t n = h.rows();
  Vector d(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    if (h(i, i) > 0.0) d[i] = 1.0 / std::sqrt(h(i, i));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h(i, j) *= d[i] * d[j];
  Vector b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = rhs[i] * d[i];
  double ridge = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    DenseMatrix hr = h;
    for (std::size_t i = 0; i < n; ++i) hr(i, i) += ridge;
    if (auto c = Cholesky::try_factor(hr)) {
      Vector x = c->solve(b);
      for (std::size_t i = 0; i < n; ++i) x[i] *= d[i];
      return x;
    }
    ridge = ridge == 0.0 ? 1e-14 : ridge * 100.0;
  }
  throw NotPositiveDefinite(0);
}

enum class CenterOutcome { kCentered, kEarlyExit };

/// Damped Newton on  t c^T z - log det(-G(z)) - sum_{nonneg} log z_k.
/// `early_exit(z, s_factor)` is consulted after every accepted step.
template <class EarlyExit>
CenterOutcome newton_center(const LmiProgram& prog, Vector& z, double t, const SolverConfig& cfg,
                            SolveStats& stats, std::size_t& newton_counter, EarlyExit&& early_exit) {
  const std::size_t m = prog.num_variables();
  SymMatrix slack = negated(prog.evaluate(z));
  std::optional<Cholesky> chol = Cholesky::try_factor(slack);
  if (!chol) throw SolverError("iterate is not strictly feasible", z, 1.0 / t, 0.0);

  double decrement2 = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < cfg.max_newton; ++it) {
    BarrierDerivatives d = barrier_derivatives(prog, *chol);
    Vector g(m);
    for (std::size_t k = 0; k < m; ++k) {
      g[k] = t * prog.cost[k] + d.grad[k];
      if (prog.variables[k].nonneg) {
        g[k] -= 1.0 / z[k];
        d.hess(k, k) += 1.0 / (z[k] * z[k]);
      }
    }
    Vector rhs(m);
    for (std::size_t k = 0; k < m; ++k) rhs[k] = -g[k];
    const Vector step = solve_newton_system(std::move(d.hess), rhs);
    const double slope = dot(g, step);  // negative
    decrement2 = -slope;
    if (decrement2 / 2.0 <= cfg.newton_tol) return CenterOutcome::kCentered;
    // Roundoff floor near the boundary: the decrement stops shrinking.
    if (it >= 10 && decrement2 < 1e-6) return CenterOutcome::kCentered;

    double s = 1.0;
    for (std::size_t k = 0; k < m; ++k)
      if (prog.variables[k].nonneg && step[k] < 0.0) s = std::min(s, -0.99 * z[k] / step[k]);

    const SymMatrix dg = prog.linear_part(step);
    const double logdet0 = chol->log_det();
    double cost_slope = 0.0;
    for (std::size_t k = 0; k < m; ++k) cost_slope += prog.cost[k] * step[k];

    bool accepted = false;
    SymMatrix trial(slack.dim());
    for (; s > 1e-14; s *= 0.5) {
      auto& td = trial.mutable_dense().data();
      const auto& sd = slack.dense().data();
      const auto& dd = dg.dense().data();
      for (std::size_t i = 0; i < td.size(); ++i) td[i] = sd[i] - s * dd[i];
      auto trial_chol = Cholesky::try_factor(trial);
      if (!trial_chol) continue;
      double change = t * s * cost_slope - (trial_chol->log_det() - logdet0);
      for (std::size_t k = 0; k < m; ++k)
        if (prog.variables[k].nonneg) change -= std::log1p(s * step[k] / z[k]);
      if (change <= 0.01 * s * slope) {
        assert(change <= 0.0);
        for (std::size_t k = 0; k < m; ++k) z[k] += s * step[k];
        slack = trial;
        chol = std::move(trial_chol);
        accepted = true;
        break;
      }
    }
    ++stats.newton_iters;
    ++newton_counter;
    if (!accepted) {
      // Numerical floor: the model predicts almost no further decrease.
      if (decrement2 < 1e-3) return CenterOutcome::kCentered;
      throw SolverError("line search failed", z, 1.0 / t, decrement2);
    }
    if (early_exit(z, slack)) return CenterOutcome::kEarlyExit;
  }
  if (decrement2 < 1e-3) return CenterOutcome::kCentered;
  throw SolverError("Newton centering did not converge", z, 1.0 / t, decrement2);
}

inline std::size_t count_nonneg(const LmiProgram& prog) {
  std::size_t c = 0;
  for (const auto& v : prog.variables) c += v.nonneg ? 1 : 0;
  return c;
}

/// Required strict-feasibility depth of the Phase-I output.
inline double phase1_depth(const SymMatrix& g) { return 1e-6 * (1.0 + norm_inf(g)); }

}  // namespace detail

/// Finds (rho, lambda) with lambda_max(G) < 0 and lambda > 0 by minimizing the
/// slack tau in G(rho, lambda) <= tau I. Returns the start point unchanged when
/// it is already strictly feasible. The result is packed as (rho, lambdas...).
inline Vector phase1_feasible_point(const LmiProgram& prog, double rho_init,
                                    std::span<const double> lambda_init,
                                    const SolverConfig& cfg = {}, SolveStats* stats_out = nullptr) {
  cfg.validate();
  if (lambda_init.size() + 1 != prog.num_variables()) {
    throw ValidationError("phase 1: wrong number of initial multipliers");
  }
  if (!std::isfinite(rho_init)) throw ValidationError("phase 1: rho_init must be finite");
  for (double l : lambda_init)
    if (!(l > 0.0) || !std::isfinite(l)) throw ValidationError("phase 1: initial multipliers must be positive");

  SolveStats local;
  SolveStats& stats = stats_out ? *stats_out : local;
  Vector z = pack_variables(rho_init, lambda_init);
  const SymMatrix g0 = prog.evaluate(z);
  {
    SymMatrix shifted = detail::negated(g0);
    const double depth = detail::phase1_depth(g0);
    for (std::size_t i = 0; i < shifted.dim(); ++i) shifted.add(i, i, -depth);
    if (Cholesky::try_factor(shifted)) {
      stats.phase1_tau = 0.0;
      return z;
    }
  }

  // Minimize tau over (lambda, tau) with rho held fixed:
  //   G(rho_fix, lambda) - tau I < 0.
  // rho alone only improves feasibility, so leaving it free would make the
  // centering problems unbounded. When the optimal tau is provably positive,
  // rho_fix grows tenfold and the search resumes from the current multipliers.
  const std::size_t p = prog.lifted_dim();
  const std::size_t dim = prog.dim;
  const SymMatrix f_rho = prog.basis(0);
  // Either the optimal tau is provably positive or it sits on zero, where
  // the centering problems degenerate. Both call for a larger rho.
  auto give_up_on_rho = [&](double tau, double theta, double mu) {
    return tau - theta * mu > 0.0 || theta * mu <= 1e-6 * (1.0 + std::abs(tau));
  };

  double rho_fix = rho_init;
  Vector lam(lambda_init.begin(), lambda_init.end());
  constexpr int kMaxRhoIncreases = 24;
  for (int attempt = 0; attempt <= kMaxRhoIncreases; ++attempt) {
    LmiProgram aug;
    aug.dim = dim;
    aug.lift = DenseMatrix(p + dim, dim);
    for (std::size_t i = 0; i < p; ++i) {
      auto src = prog.lift.row(i);
      std::copy(src.begin(), src.end(), aug.lift.row(i).begin());
    }
    for (std::size_t i = 0; i < dim; ++i) aug.lift(p + i, i) = 1.0;
    aug.constant = prog.constant;
    {
      auto& c = aug.constant.mutable_dense().data();
      const auto& f = f_rho.dense().data();
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += rho_fix * f[i];
    }
    aug.variables.assign(prog.variables.begin() + 1, prog.variables.end());
    LmiVariable tau_var;
    for (std::size_t i = 0; i < dim; ++i) tau_var.terms.push_back({-1.0, {{p + i, 1.0}}, {{p + i, 1.0}}});
    aug.variables.push_back(std::move(tau_var));
    aug.cost.assign(aug.variables.size(), 0.0);
    aug.cost.back() = 1.0;

    const SymMatrix g_start = prog.evaluate(pack_variables(rho_fix, lam));
    const double tau0 = std::max(detail::gershgorin_upper(g_start), 0.0) + 1.0;
    Vector w = lam;
    w.push_back(tau0);
    const std::size_t tau_idx = w.size() - 1;
    const double theta = static_cast<double>(dim + detail::count_nonneg(aug));
    double mu = std::max(1.0, std::abs(tau0)) / theta;

    auto feasible = [&](const Vector& cur) {
      if (cur[tau_idx] >= 0.0) return false;
      const SymMatrix g = prog.evaluate(pack_variables(rho_fix, {cur.data(), tau_idx}));
      SymMatrix shifted = detail::negated(g);
      const double depth = detail::phase1_depth(g);
      for (std::size_t i = 0; i < shifted.dim(); ++i) shifted.add(i, i, -depth);
      return Cholesky::try_factor(shifted).has_value();
    };
    auto done = [&](const Vector& cur, const SymMatrix&) { return feasible(cur); };

    for (std::size_t outer = 0; outer < cfg.max_outer; ++outer) {
      detail::CenterOutcome outcome;
      try {
        outcome = detail::newton_center(aug, w, 1.0 / mu, cfg, stats, stats.phase1_iters, done);
      } catch (const SolverError&) {
        break;
      }
      if (outcome == detail::CenterOutcome::kEarlyExit || feasible(w)) {
        stats.phase1_tau = w[tau_idx];
        return pack_variables(rho_fix, {w.data(), tau_idx});
      }
      if (give_up_on_rho(w[tau_idx], theta, mu)) break;
      mu *= cfg.mu_shrink;
    }
    lam.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(tau_idx));
    for (double& l : lam) l = std::max(l, 1e-8);
    rho_fix = std::max(10.0 * rho_fix, 1.0);
  }
  throw SolverError("phase 1 could not find a strictly feasible point", lam, 0.0, 0.0);
}

/// Minimizes rho subject to G(rho, lambda) <= 0, lambda >= 0 by following the
/// central path of  rho - mu log det(-G) - mu sum log lambda  until the barrier
/// gap bound theta * mu <= gap_tol * (1 + |rho|).
inline SolveResult solve(const LmiProgram& prog, const SolverConfig& cfg = {},
                         double rho_init = 4.0, double lambda_init = 1.0) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  SolveResult res;
  const Vector lam0(prog.num_variables() - 1, lambda_init);
  Vector z = phase1_feasible_point(prog, rho_init, lam0, cfg, &res.stats);
  res.anchor = z;

  const double theta = static_cast<double>(prog.dim + detail::count_nonneg(prog));
  double mu = std::max(1.0, std::abs(z[0])) / static_cast<double>(prog.dim);
  auto never = [](const Vector&, const SymMatrix&) { return false; };
  bool converged = false;
  std::size_t newton_counter = 0;
  // A centering that exhausts max_newton restarts from the last central point
  // with a milder reduction of mu. Before the first central point it resumes
  // from its last accepted iterate, which is still strictly feasible.
  double shrink = cfg.mu_shrink;
  std::optional<Vector> last_central;
  double last_mu = mu;
  for (std::size_t outer = 0; outer < cfg.max_outer; ++outer) {
    const Vector before = z;
    try {
      detail::newton_center(prog, z, 1.0 / mu, cfg, res.stats, newton_counter, never);
    } catch (const SolverError&) {
      if (z == before || shrink > 0.95) throw;
      if (last_central) {
        shrink = std::sqrt(shrink);
        z = *last_central;
        mu = last_mu * shrink;
      }
      continue;
    }
    last_central = z;
    last_mu = mu;
    ++res.stats.outer_iters;
    res.stats.final_mu = mu;
    {
      const SymMatrix g = prog.evaluate(z);
      SymMatrix shifted = detail::negated(g);
      const double depth = detail::phase1_depth(g);
      for (std::size_t i = 0; i < shifted.dim(); ++i) shifted.add(i, i, -depth);
      if (Cholesky::try_factor(shifted)) res.anchor = z;
    }
    if (theta * mu <= cfg.gap_tol * (1.0 + std::abs(z[0]))) {
      converged = true;
      break;
    }
    mu *= shrink;
    shrink = std::max(cfg.mu_shrink, shrink * shrink);
  }
  if (!converged) throw SolverError("barrier gap not reached within max_outer", z, mu, 0.0);

  res.rho = z[0];
  res.lambdas.assign(z.begin() + 1, z.end());
  res.stats.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Pluggable solver backend; the embedded barrier method is the default.
class SdpBackend {
 public:
  virtual ~SdpBackend() = default;
  virtual SolveResult solve(const LmiProgram& prog, const SolverConfig& cfg) const = 0;
};

class BarrierBackend final : public SdpBackend {
 public:
  SolveResult solve(const LmiProgram& prog, const SolverConfig& cfg) const override {
    return lipcert::solve(prog, cfg);
  }
};

// ---------------------------------------------------------------------------
// Verification

/// Absolute slack used when testing lambda_max(M) <= -margin.
inline double required_margin(const SymMatrix& m, const SolverConfig& cfg) {
  return cfg.margin * (1.0 + norm_inf(m));
}

/// True when lambda_max(m) <= -margin, by attempted Cholesky of -m - margin I.
inline bool strictly_negative(const SymMatrix& m, double margin) {
  SymMatrix s = detail::negated(m);
  for (std::size_t i = 0; i < s.dim(); ++i) s.add(i, i, -margin);
  return Cholesky::try_factor(s).has_value();
}

inline SymMatrix certificate_matrix(const FeedForwardNetwork& net, const CouplingMode& mode,
                                    double rho, std::span<const double> lambdas) {
  const auto spec = make_multiplier_spec(net, mode, Vector(lambdas.begin(), lambdas.end()),
                                         std::numeric_limits<std::size_t>::max());
  return assemble_M(net, build_T(spec, net.hidden_total()), rho);
}

/// Accepts (rho*, lambda*) when lambda_max(M) <= -margin. Otherwise blends it
/// toward the strictly feasible anchor, bisecting for the smallest blend that
/// passes. The reported margin comes from the Jacobi eigensolver.
inline LipschitzCertificate verify_and_restore(const FeedForwardNetwork& net,
                                               const CouplingMode& mode, double rho_star,
                                               std::span<const double> lambda_star,
                                               double anchor_rho,
                                               std::span<const double> anchor_lambdas,
                                               const SolverConfig& cfg = {}) {
  cfg.validate();
  if (lambda_star.size() != anchor_lambdas.size()) {
    throw ValidationError("anchor and candidate have different multiplier counts");
  }
  const SymMatrix m_anchor = certificate_matrix(net, mode, anchor_rho, anchor_lambdas);
  if (!strictly_negative(m_anchor, required_margin(m_anchor, cfg))) {
    throw NumericalError("restoration anchor is not strictly feasible");
  }

  // Clip tiny negative multipliers produced by floating point.
  Vector lam(lambda_star.begin(), lambda_star.end());
  for (double& l : lam) l = std::max(l, 0.0);
  const SymMatrix m_star = certificate_matrix(net, mode, rho_star, lam);

  LipschitzCertificate cert;
  cert.mode = mode;
  cert.experimental = mode.kind == CouplingKind::kNetwork;

  double theta = 0.0;
  if (!strictly_negative(m_star, required_margin(m_star, cfg))) {
    const auto blend = [&](double th) {
      SymMatrix m = m_star;
      auto& d = m.mutable_dense().data();
      const auto& a = m_anchor.dense().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = (1.0 - th) * d[i] + th * a[i];
      return m;
    };
    double lo = 0.0;
    double hi = 1.0;
    for (std::size_t it = 0; it < cfg.restore_bisection_iters; ++it) {
      const double mid = 0.5 * (lo + hi);
      const SymMatrix m = blend(mid);
      if (strictly_negative(m, required_margin(m, cfg))) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    theta = hi;
  }

  auto point = [&](double th) {
    cert.rho = (1.0 - th) * rho_star + th * anchor_rho;
    cert.lambdas.resize(lam.size());
    for (std::size_t i = 0; i < lam.size(); ++i)
      cert.lambdas[i] = (1.0 - th) * lam[i] + th * anchor_lambdas[i];
    cert.restore_theta = th;
    cert.verified_margin = max_eigenvalue(certificate_matrix(net, mode, cert.rho, cert.lambdas));
  };
  point(theta);
  if (cert.verified_margin > 0.0 && theta < 1.0) point(1.0);
  if (cert.verified_margin > 0.0) throw NumericalError("certificate failed independent verification");
  cert.rho = std::max(cert.rho, 0.0);
  cert.l2 = std::sqrt(cert.rho);
  return cert;
}

/// Full LMI pipeline for a network with at least one hidden layer: scale the
/// output layer so the naive upper bound is one, solve, undo the scaling
/// (M(c^2 rho, c^2 T) = c^2 M(rho, T) for output weights c W) and verify on the
/// original network.
inline LipschitzCertificate solve_lipschitz_sdp(const FeedForwardNetwork& net,
                                                const CouplingMode& mode,
                                                const SolverConfig& cfg = {},
                                                const SdpBackend& backend = BarrierBackend{},
                                                std::size_t max_pairs = kDefaultMaxPairs) {
  const auto start = std::chrono::steady_clock::now();
  double upper = 1.0;
  for (const auto& L : net.layers()) upper *= spectral_norm(L.weight);
  const double c = upper > 0.0 ? 1.0 / upper : 1.0;
  const FeedForwardNetwork scaled = with_scaled_output(net, c);
  const LmiProgram prog = build_program(scaled, mode, max_pairs);
  const SolveResult res = backend.solve(prog, cfg);

  const double inv = 1.0 / (c * c);
  Vector lam(res.lambdas.size());
  for (std::size_t i = 0; i < lam.size(); ++i) lam[i] = res.lambdas[i] * inv;
  const double anchor_rho = res.anchor[0] * inv;
  Vector anchor_lam(res.anchor.begin() + 1, res.anchor.end());
  for (double& v : anchor_lam) v *= inv;

  LipschitzCertificate cert =
      verify_and_restore(net, prog.mode, res.rho * inv, lam, anchor_rho, anchor_lam, cfg);
  cert.stats = res.stats;
  cert.stats.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return cert;
}

}  // namespace lipcert
