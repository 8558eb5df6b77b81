#pragma once

// Multiplier matrices, the stacked structure blocks A and B, the Lipschitz
// LMI M(rho, T), and its basis decomposition for the SDP solver.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lipcert/errors.hpp"
#include "lipcert/model.hpp"
#include "lipcert/numerics.hpp"

namespace lipcert {

enum class CouplingKind { kLayer, kNeuron, kNetwork };

inline std::string_view to_string(CouplingKind k) {
  switch (k) {
    case CouplingKind::kLayer: return "layer";
    case CouplingKind::kNeuron: return "neuron";
    case CouplingKind::kNetwork: return "network";
  }
  return "?";
}

inline CouplingKind parse_coupling_kind(std::string_view s) {
  if (s == "layer") return CouplingKind::kLayer;
  if (s == "neuron") return CouplingKind::kNeuron;
  if (s == "network") return CouplingKind::kNetwork;
  throw ValidationError("unknown coupling mode '" + std::string(s) + "'");
}

/// Pair of global hidden-neuron indices, first < second.
using NeuronPair = std::pair<std::size_t, std::size_t>;

/// How the multiplier matrix T couples hidden neurons. For kNetwork, `pairs`
/// selects the coupled pairs; when absent every pair is coupled.
struct CouplingMode {
  CouplingKind kind = CouplingKind::kNeuron;
  std::optional<std::vector<NeuronPair>> pairs;

  static CouplingMode layer() { return {CouplingKind::kLayer, std::nullopt}; }
  static CouplingMode neuron() { return {CouplingKind::kNeuron, std::nullopt}; }
  static CouplingMode network(std::optional<std::vector<NeuronPair>> pairs = std::nullopt) {
    return {CouplingKind::kNetwork, std::move(pairs)};
  }

  bool operator==(const CouplingMode&) const = default;
};

/// What a single multiplier lambda controls in T.
struct MultiplierSlot {
  enum class Kind { kNeuron, kPair, kLayer };
  Kind kind = Kind::kNeuron;
  // kNeuron: neuron `first` (== second); kPair: neurons (first, second);
  // kLayer: neuron range [first, second).
  std::size_t first = 0;
  std::size_t second = 0;

  bool operator==(const MultiplierSlot&) const = default;
};

struct MultiplierSpec {
  CouplingMode mode;
  Vector lambdas;
  std::vector<MultiplierSlot> index_map;
};

inline constexpr std::size_t kDefaultMaxPairs = 20000;

/// Slot layout for `mode` over hidden layers of the given widths. Network
/// mode lists the n diagonal slots first, then the pairs.
inline std::vector<MultiplierSlot> multiplier_layout(std::span<const std::size_t> hidden_widths,
                                                     const CouplingMode& mode,
                                                     std::size_t max_pairs = kDefaultMaxPairs) {
  std::size_t n = 0;
  for (std::size_t w : hidden_widths) n += w;
  std::vector<MultiplierSlot> slots;
  switch (mode.kind) {
    case CouplingKind::kLayer: {
      std::size_t start = 0;
      for (std::size_t w : hidden_widths) {
        slots.push_back({MultiplierSlot::Kind::kLayer, start, start + w});
        start += w;
      }
      break;
    }
    case CouplingKind::kNeuron:
      for (std::size_t i = 0; i < n; ++i) slots.push_back({MultiplierSlot::Kind::kNeuron, i, i});
      break;
    case CouplingKind::kNetwork: {
      for (std::size_t i = 0; i < n; ++i) slots.push_back({MultiplierSlot::Kind::kNeuron, i, i});
      if (mode.pairs) {
        std::set<NeuronPair> seen;
        for (const auto& [i, j] : *mode.pairs) {
          if (!(i < j) || j >= n) {
            throw ValidationError("invalid neuron pair (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ") for " + std::to_string(n) +
                                  " hidden neurons");
          }
          if (!seen.insert({i, j}).second) throw ValidationError("duplicate neuron pair");
        }
        if (mode.pairs->size() > max_pairs) {
          throw SizeError("network mode: " + std::to_string(mode.pairs->size()) +
                          " pairs exceed the cap of " + std::to_string(max_pairs));
        }
        for (const auto& [i, j] : *mode.pairs) slots.push_back({MultiplierSlot::Kind::kPair, i, j});
      } else {
        const std::size_t all = n * (n > 0 ? n - 1 : 0) / 2;
        if (all > max_pairs) {
          throw SizeError("network mode: all-pairs coupling needs " + std::to_string(all) +
                          " pairs, above the cap of " + std::to_string(max_pairs) +
                          "; pass an explicit pair list or use neuron mode");
        }
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j) slots.push_back({MultiplierSlot::Kind::kPair, i, j});
      }
      break;
    }
  }
  return slots;
}

inline MultiplierSpec make_multiplier_spec(const FeedForwardNetwork& net, CouplingMode mode,
                                           Vector lambdas,
                                           std::size_t max_pairs = kDefaultMaxPairs) {
  const auto widths = net.hidden_widths();
  auto slots = multiplier_layout(widths, mode, max_pairs);
  if (lambdas.size() != slots.size()) {
    throw ValidationError("expected " + std::to_string(slots.size()) + " multipliers, got " +
                          std::to_string(lambdas.size()));
  }
  return {std::move(mode), std::move(lambdas), std::move(slots)};
}

/// T = sum lambda_ii e_i e_i^T + sum lambda_ij (e_i - e_j)(e_i - e_j)^T.
inline SymMatrix build_T(const MultiplierSpec& spec, std::size_t hidden_total) {
  if (spec.lambdas.size() != spec.index_map.size()) {
    throw ValidationError("multiplier count does not match its index map");
  }
  SymMatrix t(hidden_total);
  for (std::size_t k = 0; k < spec.lambdas.size(); ++k) {
    const double lam = spec.lambdas[k];
    if (!(lam >= 0.0)) throw ValidationError("multipliers must be nonnegative");
    const auto& s = spec.index_map[k];
    switch (s.kind) {
      case MultiplierSlot::Kind::kNeuron:
        if (s.first >= hidden_total) throw ValidationError("multiplier index out of range");
        t.add(s.first, s.first, lam);
        break;
      case MultiplierSlot::Kind::kLayer:
        if (s.second > hidden_total) throw ValidationError("multiplier range out of range");
        for (std::size_t i = s.first; i < s.second; ++i) t.add(i, i, lam);
        break;
      case MultiplierSlot::Kind::kPair:
        if (s.second >= hidden_total || s.first >= s.second) {
          throw ValidationError("invalid multiplier pair");
        }
        t.add(s.first, s.first, lam);
        t.add(s.second, s.second, lam);
        t.add(s.first, s.second, -lam);
        break;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Structure blocks and the LMI matrix

/// A and B with B x = phi(A x + b) for the stacked signal x = (x^0, ..., x^l).
struct StructureBlocks {
  DenseMatrix a;  // n x N
  DenseMatrix b;  // n x N
};

inline StructureBlocks build_structure(const FeedForwardNetwork& net) {
  const std::size_t ell = net.hidden_layers();
  if (ell < 1) throw ValidationError("structure blocks need at least one hidden layer");
  const std::size_t n0 = net.input_dim();
  const std::size_t n = net.hidden_total();
  StructureBlocks s{DenseMatrix(n, n0 + n), DenseMatrix(n, n0 + n)};
  std::size_t row = 0;
  std::size_t col = 0;
  for (std::size_t k = 0; k < ell; ++k) {
    const DenseMatrix& w = net.layer(k).weight;
    for (std::size_t i = 0; i < w.rows(); ++i) {
      for (std::size_t j = 0; j < w.cols(); ++j) s.a(row + i, col + j) = w(i, j);
      s.b(row + i, n0 + row + i) = 1.0;
    }
    row += w.rows();
    col += w.cols();
  }
  return s;
}

/// Coefficients of the sector quadratic form [[-2ab T, (a+b) T], [(a+b) T, -2 T]].
struct SectorCoefficients {
  double aa;
  double ab;
  double bb;
};

inline SectorCoefficients sector_coefficients(const SectorBounds& s) {
  return {-2.0 * s.alpha * s.beta, s.alpha + s.beta, -2.0};
}

/// M(rho, T) = [A; B]^T (sector form in T) [A; B] + blkdiag(-rho I, 0, ..., W_l^T W_l).
inline SymMatrix assemble_M(const FeedForwardNetwork& net, const SymMatrix& t, double rho) {
  const std::size_t n = net.hidden_total();
  if (t.dim() != n) throw ValidationError("T has the wrong dimension");
  if (!std::isfinite(rho)) throw ValidationError("rho must be finite");
  const std::size_t n0 = net.input_dim();
  const std::size_t dim = n0 + n;
  const auto blocks = build_structure(net);
  const auto c = sector_coefficients(net.sector());

  DenseMatrix stacked(2 * n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      stacked(i, j) = blocks.a(i, j);
      stacked(n + i, j) = blocks.b(i, j);
    }
  }
  DenseMatrix form(2 * n, 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double tij = t(i, j);
      form(i, j) = c.aa * tij;
      form(i, n + j) = c.ab * tij;
      form(n + i, j) = c.ab * tij;
      form(n + i, n + j) = c.bb * tij;
    }
  }
  DenseMatrix m = multiply_transposed(stacked, multiply(form, stacked));
  for (std::size_t i = 0; i < n0; ++i) m(i, i) -= rho;
  const DenseMatrix& wl = net.layers().back().weight;
  const DenseMatrix corner = multiply_transposed(wl, wl);
  const std::size_t off = dim - corner.rows();
  for (std::size_t i = 0; i < corner.rows(); ++i)
    for (std::size_t j = 0; j < corner.cols(); ++j) m(off + i, off + j) += corner(i, j);
  return SymMatrix(m);
}

/// Single-hidden-layer form written directly in blocks:
/// [[-2ab W0^T T W0 - rho I, (a+b) W0^T T], [(a+b) T W0, -2T + W1^T W1]].
inline SymMatrix assemble_single_layer_M(const FeedForwardNetwork& net, const SymMatrix& t,
                                         double rho) {
  if (net.hidden_layers() != 1) throw ValidationError("single-layer form needs exactly one hidden layer");
  const DenseMatrix& w0 = net.layer(0).weight;
  const DenseMatrix& w1 = net.layer(1).weight;
  const std::size_t n0 = w0.cols();
  const std::size_t n = w0.rows();
  if (t.dim() != n) throw ValidationError("T has the wrong dimension");
  const auto c = sector_coefficients(net.sector());

  const DenseMatrix tw0 = multiply(t.dense(), w0);
  const DenseMatrix w0ttw0 = multiply_transposed(w0, tw0);
  const DenseMatrix w1tw1 = multiply_transposed(w1, w1);
  DenseMatrix m(n0 + n, n0 + n);
  for (std::size_t i = 0; i < n0; ++i) {
    for (std::size_t j = 0; j < n0; ++j) m(i, j) = c.aa * w0ttw0(i, j);
    m(i, i) -= rho;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n0; ++j) {
      m(n0 + i, j) = c.ab * tw0(i, j);
      m(j, n0 + i) = c.ab * tw0(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) m(n0 + i, n0 + j) = c.bb * t(i, j) + w1tw1(i, j);
  }
  return SymMatrix(m);
}

// ---------------------------------------------------------------------------
// Basis decomposition

/// Sparse vector as (index, value) pairs.
using SparseVector = std::vector<std::pair<std::size_t, double>>;

/// weight * (u v^T + v u^T) / 2 in lifted coordinates.
struct LiftedTerm {
  double weight = 0.0;
  SparseVector u;
  SparseVector v;
};

/// One decision variable. Its basis matrix is F = L^T K L with
/// K = sum of the variable's lifted terms and L the program's lift.
struct LmiVariable {
  std::vector<LiftedTerm> terms;
  bool nonneg = false;
};

/// G(z) = F_const + sum_k z_k F_k with every F_k stored in factored form over
/// a shared lift L (rows: input identity, A, B). Variable 0 is rho; variables
/// 1.. are the multipliers in the order of `slots`.
struct LmiProgram {
  std::size_t dim = 0;
  DenseMatrix lift;
  SymMatrix constant;
  std::vector<LmiVariable> variables;
  Vector cost;

  std::size_t input_dim = 0;
  std::size_t hidden_total = 0;
  CouplingMode mode;
  std::vector<MultiplierSlot> slots;

  std::size_t num_variables() const noexcept { return variables.size(); }
  std::size_t lifted_dim() const noexcept { return lift.rows(); }

  std::vector<bool> nonneg_mask() const {
    std::vector<bool> mask;
    for (const auto& v : variables) mask.push_back(v.nonneg);
    return mask;
  }

  /// Dense K(z) = sum_k z_k K_k over lifted coordinates.
  DenseMatrix lifted_coefficients(std::span<const double> z) const {
    if (z.size() != variables.size()) throw ValidationError("variable vector has the wrong length");
    DenseMatrix k(lifted_dim(), lifted_dim());
    for (std::size_t var = 0; var < variables.size(); ++var) {
      if (z[var] == 0.0) continue;
      for (const auto& term : variables[var].terms) {
        const double w = 0.5 * z[var] * term.weight;
        for (const auto& [i, ui] : term.u)
          for (const auto& [j, vj] : term.v) {
            k(i, j) += w * ui * vj;
            k(j, i) += w * ui * vj;
          }
      }
    }
    return k;
  }

  /// sum_k z_k F_k.
  SymMatrix linear_part(std::span<const double> z) const {
    const DenseMatrix k = lifted_coefficients(z);
    return SymMatrix(multiply_transposed(lift, multiply(k, lift)));
  }

  SymMatrix evaluate(std::span<const double> z) const {
    SymMatrix g = linear_part(z);
    auto& d = g.mutable_dense().data();
    const auto& c = constant.dense().data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c[i];
    return g;
  }

  /// Dense basis matrix F_k.
  SymMatrix basis(std::size_t k) const {
    Vector e(variables.size(), 0.0);
    e.at(k) = 1.0;
    return linear_part(e);
  }
  SymMatrix f_rho() const { return basis(0); }
  SymMatrix f_lambda(std::size_t i) const { return basis(i + 1); }
};

namespace detail {

/// Terms of the sector form (aa, ab, bb) applied to d d^T, where d lives in
/// hidden coordinates. `a_off`/`b_off` place d in the A and B blocks.
inline void append_sector_terms(std::vector<LiftedTerm>& out, const SparseVector& d, double w,
                                const SectorCoefficients& c, std::size_t a_off,
                                std::size_t b_off) {
  auto shift = [&](std::size_t off) {
    SparseVector s = d;
    for (auto& e : s) e.first += off;
    return s;
  };
  const SparseVector da = shift(a_off);
  const SparseVector db = shift(b_off);
  if (c.aa != 0.0) out.push_back({c.aa * w, da, da});
  if (c.ab != 0.0) out.push_back({2.0 * c.ab * w, da, db});
  if (c.bb != 0.0) out.push_back({c.bb * w, db, db});
}

}  // namespace detail

/// Basis decomposition of M(rho, T) for the given coupling mode.
inline LmiProgram build_program(const FeedForwardNetwork& net, const CouplingMode& mode,
                                std::size_t max_pairs = kDefaultMaxPairs) {
  if (net.hidden_layers() < 1) throw ValidationError("LMI program needs at least one hidden layer");
  const std::size_t n0 = net.input_dim();
  const std::size_t n = net.hidden_total();
  const std::size_t dim = n0 + n;

  LmiProgram prog;
  prog.dim = dim;
  prog.input_dim = n0;
  prog.hidden_total = n;
  prog.mode = mode;
  const auto widths = net.hidden_widths();
  prog.slots = multiplier_layout(widths, mode, max_pairs);

  const auto blocks = build_structure(net);
  prog.lift = DenseMatrix(n0 + 2 * n, dim);
  for (std::size_t i = 0; i < n0; ++i) prog.lift(i, i) = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      prog.lift(n0 + i, j) = blocks.a(i, j);
      prog.lift(n0 + n + i, j) = blocks.b(i, j);
    }

  prog.constant = SymMatrix(dim);
  {
    const DenseMatrix& wl = net.layers().back().weight;
    const DenseMatrix corner = multiply_transposed(wl, wl);
    const std::size_t off = dim - corner.rows();
    auto& m = prog.constant.mutable_dense();
    for (std::size_t i = 0; i < corner.rows(); ++i)
      for (std::size_t j = 0; j < corner.cols(); ++j) m(off + i, off + j) = corner(i, j);
    prog.constant.symmetrize();
  }

  LmiVariable rho;
  for (std::size_t i = 0; i < n0; ++i) rho.terms.push_back({-1.0, {{i, 1.0}}, {{i, 1.0}}});
  prog.variables.push_back(std::move(rho));

  const auto c = sector_coefficients(net.sector());
  const std::size_t a_off = n0;
  const std::size_t b_off = n0 + n;
  for (const auto& slot : prog.slots) {
    LmiVariable var;
    var.nonneg = true;
    switch (slot.kind) {
      case MultiplierSlot::Kind::kNeuron:
        detail::append_sector_terms(var.terms, {{slot.first, 1.0}}, 1.0, c, a_off, b_off);
        break;
      case MultiplierSlot::Kind::kLayer:
        for (std::size_t i = slot.first; i < slot.second; ++i)
          detail::append_sector_terms(var.terms, {{i, 1.0}}, 1.0, c, a_off, b_off);
        break;
      case MultiplierSlot::Kind::kPair:
        detail::append_sector_terms(var.terms, {{slot.first, 1.0}, {slot.second, -1.0}}, 1.0, c,
                                    a_off, b_off);
        break;
    }
    prog.variables.push_back(std::move(var));
  }

  prog.cost.assign(prog.variables.size(), 0.0);
  prog.cost[0] = 1.0;
  return prog;
}

/// Packs (rho, lambdas) into the program's variable vector.
inline Vector pack_variables(double rho, std::span<const double> lambdas) {
  Vector z;
  z.reserve(lambdas.size() + 1);
  z.push_back(rho);
  z.insert(z.end(), lambdas.begin(), lambdas.end());
  return z;
}

}  // namespace lipcert
