#pragma once

// User-facing bounds: naive bounds, LMI certificates (optionally split into
// sub-networks solved in parallel), norm conversion, sampled lower bounds and
// certified robustness radii.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "lipcert/errors.hpp"
#include "lipcert/lmi.hpp"
#include "lipcert/model.hpp"
#include "lipcert/numerics.hpp"
#include "lipcert/sdp.hpp"

namespace lipcert {

struct NaiveBounds {
  double lower = 0.0;  // ||W^l ... W^0||_2
  double upper = 0.0;  // prod ||W^i||_2
};

/// Output/input norm orders used when converting an l2 bound; infinity is
/// represented by std::numeric_limits<double>::infinity().
struct NormProfile {
  double p = 2.0;  // output norm
  double q = 2.0;  // input norm
  double factor = 1.0;

  bool operator==(const NormProfile&) const = default;
};

struct BoundReport {
  double naive_lower = 0.0;
  double naive_upper = 0.0;
  std::optional<LipschitzCertificate> lipsdp;
  CouplingMode mode;
  std::optional<std::size_t> split_chunk;
  std::vector<LipschitzCertificate> per_subnet;
  std::optional<double> empirical_lower;
  NormProfile norm_profile;

  bool operator==(const BoundReport&) const = default;
};

struct RadiusCertificate {
  Vector x_star;
  std::size_t predicted_class = 0;
  double epsilon = 0.0;
  double l2_used = 0.0;
  double score_gap = 0.0;

  bool operator==(const RadiusCertificate&) const = default;
};

inline NaiveBounds naive_bounds(const FeedForwardNetwork& net) {
  NaiveBounds b;
  b.upper = 1.0;
  for (const auto& L : net.layers()) b.upper *= spectral_norm(L.weight);
  DenseMatrix product = net.layer(0).weight;
  for (std::size_t k = 1; k < net.layers().size(); ++k) product = multiply(net.layer(k).weight, product);
  b.lower = spectral_norm(product);
  return b;
}

/// Certified l2 Lipschitz bound. Networks without hidden layers are affine
/// and get their exact spectral norm.
inline LipschitzCertificate lipschitz_bound(const FeedForwardNetwork& net,
                                            const CouplingMode& mode = CouplingMode::neuron(),
                                            const SolverConfig& cfg = {},
                                            std::size_t max_pairs = kDefaultMaxPairs) {
  cfg.validate();
  if (net.hidden_layers() == 0) {
    LipschitzCertificate cert;
    cert.mode = mode;
    const DenseMatrix& w = net.layer(0).weight;
    const DenseMatrix gram = w.rows() < w.cols() ? multiply_transposed(transpose(w), transpose(w))
                                                 : multiply_transposed(w, w);
    cert.rho = std::max(0.0, max_eigenvalue(SymMatrix(gram)));
    cert.l2 = std::sqrt(cert.rho);
    cert.experimental = mode.kind == CouplingKind::kNetwork;
    return cert;
  }
  if (is_zero(net.layers().back().weight)) {
    // rho = 0 is forced: M(0, 0) = 0.
    LipschitzCertificate cert;
    cert.mode = mode;
    cert.lambdas.assign(multiplier_layout(net.hidden_widths(), mode, max_pairs).size(), 0.0);
    cert.verified_margin = max_eigenvalue(certificate_matrix(net, mode, 0.0, cert.lambdas));
    cert.experimental = mode.kind == CouplingKind::kNetwork;
    return cert;
  }
  return solve_lipschitz_sdp(net, mode, cfg, BarrierBackend{}, max_pairs);
}

/// Splits the network into pieces of `chunk` hidden layers, certifies each
/// piece (on up to `workers` threads) and multiplies the verified bounds in
/// piece order.
inline BoundReport lipschitz_bound_split(const FeedForwardNetwork& net, std::size_t chunk,
                                         const CouplingMode& mode = CouplingMode::neuron(),
                                         const SolverConfig& cfg = {}, std::size_t workers = 1,
                                         std::size_t max_pairs = kDefaultMaxPairs) {
  if (chunk < 1) throw ValidationError("split chunk must be at least 1");
  if (workers < 1) throw ValidationError("workers must be at least 1");
  cfg.validate();
  BoundReport report;
  report.mode = mode;
  report.split_chunk = chunk;

  if (net.hidden_layers() == 0) {
    report.lipsdp = lipschitz_bound(net, mode, cfg, max_pairs);
    report.per_subnet.push_back(*report.lipsdp);
    return report;
  }
  // Explicit pair lists refer to global neuron indices and do not survive a split.
  if (mode.pairs && chunk < net.hidden_layers()) {
    throw ValidationError("explicit network-mode pairs cannot be combined with splitting");
  }

  const auto parts = split_network(net, chunk);
  std::vector<std::optional<LipschitzCertificate>> certs(parts.size());
  std::vector<std::exception_ptr> errors(parts.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < parts.size(); i = next++) {
      try {
        certs[i] = lipschitz_bound(parts[i], mode, cfg, max_pairs);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(workers, parts.size());
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (parts.size() == 1) {
    report.lipsdp = *certs.front();
    report.per_subnet.push_back(*certs.front());
    return report;
  }

  LipschitzCertificate combined;
  combined.mode = mode;
  combined.experimental = mode.kind == CouplingKind::kNetwork;
  combined.l2 = 1.0;
  combined.verified_margin = -std::numeric_limits<double>::infinity();
  for (const auto& c : certs) {
    combined.l2 *= c->l2;
    combined.verified_margin = std::max(combined.verified_margin, c->verified_margin);
    combined.stats.outer_iters += c->stats.outer_iters;
    combined.stats.newton_iters += c->stats.newton_iters;
    combined.stats.phase1_iters += c->stats.phase1_iters;
    combined.stats.wall_time += c->stats.wall_time;
    report.per_subnet.push_back(*c);
  }
  combined.rho = combined.l2 * combined.l2;
  report.lipsdp = combined;
  return report;
}

/// Converts an l2 -> l2 bound into an lq -> lp bound using
/// ||y||_p <= m^{max(0, 1/p - 1/2)} ||y||_2 and ||x||_2 <= n0^{max(0, 1/2 - 1/q)} ||x||_q.
inline double convert_norm(double l2, double p, double q, std::size_t in_dim, std::size_t out_dim) {
  if (!(l2 >= 0.0)) throw ValidationError("convert_norm: l2 must be nonnegative");
  if (!(p >= 1.0) || !(q >= 1.0)) throw ValidationError("norm orders must be >= 1");
  const double inv_p = std::isinf(p) ? 0.0 : 1.0 / p;
  const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;
  const double c_out = std::pow(static_cast<double>(out_dim), std::max(0.0, inv_p - 0.5));
  const double c_in = std::pow(static_cast<double>(in_dim), std::max(0.0, 0.5 - inv_q));
  return c_out * c_in * l2;
}

/// The argmax class of f cannot change within ||x - x*||_2 < epsilon, with
/// epsilon = min_{j != i*} (f_{i*}(x*) - f_j(x*)) / (sqrt(2) l2).
inline RadiusCertificate certify_radius(const FeedForwardNetwork& net, double l2,
                                        std::span<const double> x_star) {
  if (!(l2 > 0.0) || !std::isfinite(l2)) throw ValidationError("certify_radius: l2 must be positive");
  if (net.output_dim() < 2) throw ValidationError("certify_radius: need at least two classes");
  const Vector scores = forward(net, x_star);
  RadiusCertificate rc;
  rc.x_star.assign(x_star.begin(), x_star.end());
  rc.l2_used = l2;
  rc.predicted_class = static_cast<std::size_t>(
      std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != rc.predicted_class) gap = std::min(gap, scores[rc.predicted_class] - scores[j]);
  rc.score_gap = gap;
  rc.epsilon = gap / (std::sqrt(2.0) * l2);
  return rc;
}

/// Sampled lower bound on the Lipschitz constant: the best difference quotient
/// over Gaussian input pairs and, for piecewise-linear activations, the best
/// spectral norm over sampled activation-pattern Jacobians.
inline double empirical_lower_bound(const FeedForwardNetwork& net, std::size_t samples,
                                    std::uint64_t seed) {
  if (samples < 1) throw ValidationError("empirical_lower_bound: samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const std::size_t n0 = net.input_dim();
  auto draw = [&] {
    Vector v(n0);
    for (double& e : v) e = normal(rng);
    return v;
  };

  double best = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector x = draw();
    const Vector y = draw();
    const Vector fx = forward(net, x);
    const Vector fy = forward(net, y);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < fx.size(); ++i) num += (fx[i] - fy[i]) * (fx[i] - fy[i]);
    for (std::size_t i = 0; i < n0; ++i) den += (x[i] - y[i]) * (x[i] - y[i]);
    if (den > 0.0) best = std::max(best, std::sqrt(num / den));
  }

  const bool jacobians = net.hidden_layers() == 0 || net.activation().piecewise_linear();
  if (jacobians) {
    const std::size_t count = net.hidden_layers() == 0 ? 1 : samples;
    for (std::size_t s = 0; s < count; ++s) {
      const Vector x = draw();
      const ForwardTrace tr = forward_trace(net, x);
      DenseMatrix jac = net.layer(0).weight;
      for (std::size_t k = 0; k < net.hidden_layers(); ++k) {
        for (std::size_t i = 0; i < jac.rows(); ++i) {
          const double d = net.activation().derivative(tr.preactivations[k][i]);
          for (double& v : jac.row(i)) v *= d;
        }
        jac = multiply(net.layer(k + 1).weight, jac);
      }
      // A Rayleigh quotient never exceeds the true norm, converged or not.
      best = std::max(best, estimate_spectral_norm(jac, 1e-10, 10000, seed + s).value);
    }
  }
  return best;
}

}  // namespace lipcert
