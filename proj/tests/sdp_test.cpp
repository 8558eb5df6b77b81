#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lipcert/errors.hpp"
#include "lipcert/lmi.hpp"
#include "lipcert/model.hpp"
#include "lipcert/sdp.hpp"
#include "oracles.hpp"

namespace lipcert {
namespace {

FeedForwardNetwork scalar_net(double a, double b) {
  return FeedForwardNetwork({Layer{DenseMatrix{{a}}, Vector{0.0}}, Layer{DenseMatrix{{b}}, Vector{0.0}}},
                            Activation{});
}

double independent_margin(const FeedForwardNetwork& net, const LipschitzCertificate& c) {
  const auto t = build_T(make_multiplier_spec(net, c.mode, c.lambdas, 1u << 30), net.hidden_total());
  return oracle::max_eigenvalue(oracle::lipschitz_matrix(net, oracle::to_eigen(t), c.rho));
}

TEST(SolverConfigTest, Validation) {
  SolverConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.mu_shrink = 1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.gap_tol = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.max_newton = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Phase1Test, FeasibleStartReturnedUnchanged) {
  const auto prog = build_program(scalar_net(1, 1), CouplingMode::neuron());
  // lambda_max([[-4, 1], [1, -1]]) < 0.
  EXPECT_LT(oracle::max_eig_2x2(-4, 1, -1), 0.0);
  SolveStats stats;
  const Vector lam{1.0};
  const Vector z = phase1_feasible_point(prog, 4.0, lam, {}, &stats);
  EXPECT_EQ(z, (Vector{4.0, 1.0}));
  EXPECT_EQ(stats.phase1_tau, 0.0);
}

TEST(Phase1Test, DegenerateProgramReturnsStart) {
  LmiProgram prog;
  prog.dim = 2;
  prog.lift = DenseMatrix::identity(2);
  prog.constant = SymMatrix::diagonal(Vector{-1, -1});
  LmiVariable rho;
  rho.terms.push_back({-1.0, {{0, 1.0}}, {{0, 1.0}}});
  LmiVariable lam;
  lam.nonneg = true;
  prog.variables = {rho, lam};
  prog.cost = {1.0, 0.0};
  const Vector lam0{0.5};
  EXPECT_EQ(phase1_feasible_point(prog, 2.0, lam0, {}, nullptr), (Vector{2.0, 0.5}));
}

TEST(Phase1Test, FindsInteriorPointFromBadStart) {
  const auto net = random_network({3, 5, 4, 2}, 21);
  const auto prog = build_program(net, CouplingMode::neuron());
  const Vector lam(prog.num_variables() - 1, 1e-3);
  SolveStats stats;
  const Vector z = phase1_feasible_point(prog, 1e-3, lam, {}, &stats);
  EXPECT_LT(max_eigenvalue(prog.evaluate(z)), 0.0);
  for (std::size_t i = 1; i < z.size(); ++i) EXPECT_GT(z[i], 0.0);
  EXPECT_GT(stats.phase1_iters, 0u);

  const Vector huge = phase1_feasible_point(prog, 1e8, Vector(prog.num_variables() - 1, 1.0), {}, &stats);
  EXPECT_LT(max_eigenvalue(prog.evaluate(huge)), 0.0);
}

TEST(Phase1Test, RejectsBadStart) {
  const auto prog = build_program(scalar_net(1, 1), CouplingMode::neuron());
  EXPECT_THROW(phase1_feasible_point(prog, 1.0, Vector{-1.0}, {}, nullptr), ValidationError);
  EXPECT_THROW(phase1_feasible_point(prog, 1.0, Vector{1.0, 1.0}, {}, nullptr), ValidationError);
}

TEST(SolveTest, ScalarAnalyticOptimum) {
  // min over t of a^2 t^2 / (2t - b^2) is attained at t = b^2 with value a^2 b^2.
  const auto r11 = solve(build_program(scalar_net(1, 1), CouplingMode::neuron()));
  EXPECT_NEAR(r11.rho, 1.0, 1e-6);
  EXPECT_NEAR(r11.lambdas[0], 1.0, 1e-3);
  const auto r23 = solve(build_program(scalar_net(2, 3), CouplingMode::neuron()));
  EXPECT_NEAR(r23.rho, 36.0, 1e-4);
}

TEST(SolveTest, ZeroFinalWeightDrivesRhoToZero) {
  const auto net = FeedForwardNetwork(
      {Layer{DenseMatrix{{1.0, -2.0}, {0.5, 1.0}}, Vector{0, 0}}, Layer{DenseMatrix(1, 2), Vector{0}}},
      Activation{});
  const auto r = solve(build_program(net, CouplingMode::neuron()));
  EXPECT_LE(std::abs(r.rho), 1e-8);
}

TEST(SolveTest, DeterministicAndWithinLimits) {
  const auto net = random_network({4, 6, 3}, 30);
  const auto prog = build_program(net, CouplingMode::neuron());
  SolverConfig cfg;
  const auto a = solve(prog, cfg);
  const auto b = solve(prog, cfg);
  EXPECT_EQ(a.rho, b.rho);
  EXPECT_EQ(a.lambdas, b.lambdas);
  EXPECT_LE(a.stats.outer_iters, cfg.max_outer);
  EXPECT_GT(a.stats.newton_iters, 0u);
  EXPECT_LT(max_eigenvalue(prog.evaluate(a.anchor)), 0.0);
}

TEST(SolveTest, TightNewtonBudgetStillConverges) {
  const auto net = random_network({4, 8, 6, 3}, 33);
  const auto prog = build_program(net, CouplingMode::neuron());
  const auto reference = solve(prog);
  SolverConfig cfg;
  cfg.max_newton = 6;
  const auto tight = solve(prog, cfg);
  EXPECT_NEAR(tight.rho, reference.rho, 1e-6 * reference.rho);
  EXPECT_LT(max_eigenvalue(prog.evaluate(tight.anchor)), 0.0);
}

TEST(SolveTest, NeuronAgreesWithBruteForce) {
  for (std::uint64_t seed = 100; seed < 104; ++seed) {
    const auto net = random_network({2, 2, 1}, seed);
    const auto cert = solve_lipschitz_sdp(net, CouplingMode::neuron());
    const double ref = oracle::neuron_rho_two_hidden(net);
    EXPECT_NEAR(cert.rho, ref, 1e-4 * ref) << "seed " << seed;
  }
}

TEST(VerifyTest, AcceptsStrictlyFeasiblePoint) {
  const auto net = scalar_net(1, 1);
  // M(1.01, 1.0) = [[-1.01, 1], [1, -1]] has lambda_max about -5e-3.
  const auto c = verify_and_restore(net, CouplingMode::neuron(), 1.01, Vector{1.0}, 4.0, Vector{1.0});
  EXPECT_EQ(c.restore_theta, 0.0);
  EXPECT_EQ(c.rho, 1.01);
  EXPECT_LT(c.verified_margin, -1e-3);
}

TEST(VerifyTest, BlendsSlightlyInfeasiblePoint) {
  const auto net = scalar_net(1, 1);
  // At (rho, t) = (1, 1) M has eigenvalues {0, -2}; nudge rho below 1 so that
  // lambda_max is about +1e-8.
  const double rho_star = 1.0 - 2e-8;
  EXPECT_GT(oracle::max_eig_2x2(-rho_star, 1, -1), 0.0);
  const double anchor_rho = 4.0;
  const auto c = verify_and_restore(net, CouplingMode::neuron(), rho_star, Vector{1.0}, anchor_rho, Vector{1.0});
  EXPECT_GT(c.restore_theta, 0.0);
  EXPECT_LT(c.restore_theta, 1e-6);
  EXPECT_NEAR(c.rho, rho_star + c.restore_theta * (anchor_rho - rho_star), 1e-15);
  EXPECT_LE(c.verified_margin, 0.0);
  EXPECT_LE(oracle::max_eig_2x2(-c.rho, 1, -1), 0.0);
}

TEST(VerifyTest, FarPointFallsBackTowardAnchor) {
  const auto net = scalar_net(1, 1);
  const auto c = verify_and_restore(net, CouplingMode::neuron(), 0.0, Vector{0.0}, 4.0, Vector{1.0});
  EXPECT_GT(c.restore_theta, 0.0);
  EXPECT_LE(c.verified_margin, 0.0);
  EXPECT_GE(c.rho, 1.0);
}

TEST(VerifyTest, RejectsInfeasibleAnchor) {
  const auto net = scalar_net(1, 1);
  EXPECT_THROW(verify_and_restore(net, CouplingMode::neuron(), 1.0, Vector{1.0}, 0.5, Vector{1.0}),
               NumericalError);
}

TEST(VerifyTest, LambdaMaxConvexAlongSegments) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto net = random_network({3, 4, 2}, 31);
  const auto prog = build_program(net, CouplingMode::neuron());
  for (int trial = 0; trial < 30; ++trial) {
    Vector z1(prog.num_variables()), z2(prog.num_variables());
    for (std::size_t i = 0; i < z1.size(); ++i) {
      z1[i] = 5 * u(rng);
      z2[i] = 5 * u(rng);
    }
    const double e1 = max_eigenvalue(prog.evaluate(z1));
    const double e2 = max_eigenvalue(prog.evaluate(z2));
    const double th = u(rng);
    Vector zm(z1.size());
    for (std::size_t i = 0; i < zm.size(); ++i) zm[i] = th * z1[i] + (1 - th) * z2[i];
    EXPECT_LE(max_eigenvalue(prog.evaluate(zm)), std::max(e1, e2) + 1e-12);
  }
}

TEST(PipelineTest, CertificatesVerifyIndependently) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto net = random_network({3, 5, 4, 2}, seed);
    for (const auto& mode : {CouplingMode::layer(), CouplingMode::neuron(), CouplingMode::network()}) {
      const auto c = solve_lipschitz_sdp(net, mode);
      EXPECT_NEAR(c.l2 * c.l2, c.rho, 1e-12 * c.rho);
      EXPECT_LE(c.verified_margin, 0.0);
      for (double l : c.lambdas) EXPECT_GE(l, 0.0);
      const auto t = build_T(make_multiplier_spec(net, mode, c.lambdas), net.hidden_total());
      const auto m = assemble_M(net, t, c.rho);
      EXPECT_LE(independent_margin(net, c), 1e-9 * (1.0 + norm_inf(m)));
      EXPECT_EQ(c.experimental, mode.kind == CouplingKind::kNetwork);
    }
  }
}

}  // namespace
}  // namespace lipcert
