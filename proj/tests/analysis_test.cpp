#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "lipcert/analysis.hpp"
#include "lipcert/errors.hpp"
#include "oracles.hpp"

namespace lipcert {
namespace {

FeedForwardNetwork chain(std::initializer_list<double> ws) {
  std::vector<Layer> layers;
  for (double w : ws) layers.push_back(Layer{DenseMatrix{{w}}, Vector{0.0}});
  return FeedForwardNetwork(std::move(layers), Activation{});
}

/// Network whose outputs at x* = 0 are exactly `bias` (all weights applied to
/// zero inputs contribute nothing).
FeedForwardNetwork with_output_bias(const FeedForwardNetwork& net, const Vector& bias) {
  std::vector<Vector> biases;
  for (const auto& l : net.layers()) biases.push_back(Vector(l.bias.size(), 0.0));
  biases.back() = bias;
  return with_biases(net, biases);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(NaiveBoundsTest, Examples) {
  const auto diag = FeedForwardNetwork({Layer{DenseMatrix{{2, 0}, {0, 1}}, Vector{0, 0}},
                                       Layer{DenseMatrix{{1, 0}, {0, 3}}, Vector{0, 0}}},
                                      Activation{});
  auto b = naive_bounds(diag);
  EXPECT_NEAR(b.upper, 6.0, 1e-9);
  EXPECT_NEAR(b.lower, 3.0, 1e-9);

  const auto ident = FeedForwardNetwork({Layer{DenseMatrix::identity(3), Vector(3, 0.0)},
                                        Layer{DenseMatrix::identity(3), Vector(3, 0.0)}},
                                       Activation{});
  b = naive_bounds(ident);
  EXPECT_NEAR(b.lower, 1.0, 1e-12);
  EXPECT_NEAR(b.upper, 1.0, 1e-12);

  b = naive_bounds(chain({2, 3}));
  EXPECT_NEAR(b.lower, 6.0, 1e-12);
  EXPECT_NEAR(b.upper, 6.0, 1e-12);
}

TEST(NaiveBoundsTest, LowerNeverExceedsUpper) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = naive_bounds(random_network({4, 7, 5, 3}, seed));
    EXPECT_LE(b.lower, b.upper * (1 + 1e-9));
  }
}

TEST(LipschitzBoundTest, ScalarAndAffine) {
  EXPECT_NEAR(lipschitz_bound(chain({1, 1})).l2, 1.0, 1e-6);
  const auto affine = FeedForwardNetwork({Layer{DenseMatrix{{3, 0}, {0, 4}}, Vector{0, 0}}}, Activation{});
  const auto c = lipschitz_bound(affine);
  EXPECT_EQ(c.l2, 4.0);
  EXPECT_EQ(c.rho, 16.0);
}

TEST(LipschitzBoundTest, ZeroFinalWeight) {
  const auto net = FeedForwardNetwork(
      {Layer{DenseMatrix{{1, 2}, {3, 4}}, Vector{0, 0}}, Layer{DenseMatrix(2, 2), Vector{0, 0}}}, Activation{});
  const auto c = lipschitz_bound(net);
  EXPECT_EQ(c.rho, 0.0);
  EXPECT_EQ(c.l2, 0.0);
  EXPECT_LE(c.verified_margin, 0.0);
}

TEST(LipschitzBoundTest, ModesAreOrdered) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto net = random_network({3, 6, 2}, seed);
    const double layer = lipschitz_bound(net, CouplingMode::layer()).l2;
    const double neuron = lipschitz_bound(net, CouplingMode::neuron()).l2;
    const double network = lipschitz_bound(net, CouplingMode::network()).l2;
    const auto naive = naive_bounds(net);
    EXPECT_LE(network, neuron * (1 + 1e-6));
    EXPECT_LE(neuron, layer * (1 + 1e-6));
    EXPECT_LE(layer, naive.upper * (1 + 1e-6));
    EXPECT_GE(network, naive.lower * (1 - 1e-6));
  }
}

TEST(LipschitzBoundTest, OutputScalingAndBiasInvariance) {
  const auto net = random_network({3, 5, 4, 2}, 44);
  const auto base = lipschitz_bound(net);
  for (double c : {0.5, 2.0, -3.0}) {
    EXPECT_NEAR(lipschitz_bound(with_scaled_output(net, c)).l2, std::abs(c) * base.l2, 1e-5 * std::abs(c) * base.l2);
  }
  std::vector<Vector> biases;
  for (const auto& l : net.layers()) biases.push_back(Vector(l.bias.size(), 17.0));
  EXPECT_EQ(lipschitz_bound(with_biases(net, biases)).l2, base.l2);
}

TEST(SplitBoundTest, LargeChunkMatchesUnsplit) {
  const auto net = random_network({3, 4, 4, 4, 2}, 9);
  const auto split = lipschitz_bound_split(net, 99);
  ASSERT_TRUE(split.lipsdp.has_value());
  EXPECT_EQ(split.lipsdp->l2, lipschitz_bound(net).l2);
  EXPECT_EQ(split.per_subnet.size(), 1u);
}

TEST(SplitBoundTest, ScalarChainPieces) {
  const auto r = lipschitz_bound_split(chain({2, -3, 0.5}), 1);
  ASSERT_EQ(r.per_subnet.size(), 2u);
  EXPECT_NEAR(r.per_subnet[0].l2, 2.0, 1e-6);
  EXPECT_NEAR(r.per_subnet[1].l2, 1.5, 1e-6);
  EXPECT_NEAR(r.lipsdp->l2, 3.0, 1e-5);
}

TEST(SplitBoundTest, WorkerCountDoesNotMatter) {
  const auto net = random_network({3, 4, 4, 4, 4, 2}, 10);
  const auto one = lipschitz_bound_split(net, 1, CouplingMode::neuron(), {}, 1);
  const auto three = lipschitz_bound_split(net, 1, CouplingMode::neuron(), {}, 3);
  EXPECT_EQ(one.lipsdp->l2, three.lipsdp->l2);
  ASSERT_EQ(one.per_subnet.size(), 4u);
  EXPECT_GE(one.lipsdp->l2, lipschitz_bound(net).l2 * (1 - 1e-6));
}

TEST(SplitBoundTest, RejectsBadArguments) {
  const auto net = random_network({2, 2, 2, 1}, 1);
  EXPECT_THROW(lipschitz_bound_split(net, 0), ValidationError);
  EXPECT_THROW(lipschitz_bound_split(net, 1, CouplingMode::neuron(), {}, 0), ValidationError);
  EXPECT_THROW(lipschitz_bound_split(net, 1, CouplingMode::network(std::vector<NeuronPair>{{0, 1}})),
               ValidationError);
}

TEST(ConvertNormTest, Examples) {
  EXPECT_EQ(convert_norm(3.0, 2, 2, 5, 7), 3.0);
  EXPECT_EQ(convert_norm(5.0, kInf, 2, 4, 3), 5.0);
  EXPECT_NEAR(convert_norm(1.0, 2, kInf, 4, 3), 2.0, 1e-15);
  EXPECT_NEAR(convert_norm(1.0, 1, 2, 4, 9), 3.0, 1e-15);
  EXPECT_THROW(convert_norm(1.0, 0.5, 2, 1, 1), ValidationError);
  EXPECT_THROW(convert_norm(1.0, 2, 0.0, 1, 1), ValidationError);
  EXPECT_THROW(convert_norm(-1.0, 2, 2, 1, 1), ValidationError);
}

TEST(ConvertNormTest, BoundHoldsOnSamples) {
  // |f(x) - f(y)|_1 <= convert_norm(L, 1, inf) |x - y|_inf on sampled pairs.
  const auto net = random_network({4, 6, 3}, 2);
  const double l2 = lipschitz_bound(net).l2;
  const double l1inf = convert_norm(l2, 1, kInf, 4, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 500; ++i) {
    Vector x(4), y(4);
    double dinf = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      x[k] = normal(rng);
      y[k] = normal(rng);
      dinf = std::max(dinf, std::abs(x[k] - y[k]));
    }
    const Vector fx = forward(net, x), fy = forward(net, y);
    double d1 = 0.0;
    for (std::size_t k = 0; k < 3; ++k) d1 += std::abs(fx[k] - fy[k]);
    EXPECT_LE(d1, l1inf * dinf * (1 + 1e-9));
  }
}

TEST(CertifyRadiusTest, Examples) {
  const auto base = random_network({2, 3, 3}, 5);
  const Vector x0{0.0, 0.0};
  const auto net = with_output_bias(base, Vector{3, 1, 0});
  auto r = certify_radius(net, 1.0, x0);
  EXPECT_EQ(r.predicted_class, 0u);
  EXPECT_NEAR(r.epsilon, 2.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(r.epsilon, 1.414214, 1e-6);
  EXPECT_NEAR(certify_radius(net, 2.0, x0).epsilon, r.epsilon / 2.0, 1e-15);

  const auto tied = with_output_bias(base, Vector{1, 4, 4});
  r = certify_radius(tied, 1.0, x0);
  EXPECT_EQ(r.predicted_class, 1u);
  EXPECT_EQ(r.epsilon, 0.0);

  EXPECT_THROW(certify_radius(net, 0.0, x0), ValidationError);
  EXPECT_THROW(certify_radius(random_network({2, 3, 1}, 1), 1.0, x0), ValidationError);
  EXPECT_THROW(certify_radius(net, 1.0, Vector{1.0}), ValidationError);
}

TEST(CertifyRadiusTest, SampledPerturbationsKeepClass) {
  const auto net = random_network({3, 8, 3}, 77);
  const double l2 = lipschitz_bound(net).l2;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;
  for (int p = 0; p < 5; ++p) {
    Vector x(3);
    for (double& v : x) v = normal(rng);
    const auto r = certify_radius(net, l2, x);
    EXPECT_NEAR(r.epsilon, r.score_gap / (std::sqrt(2.0) * l2), 1e-12 * r.epsilon);
    for (int i = 0; i < 300; ++i) {
      Vector d(3);
      for (double& v : d) v = normal(rng);
      const double nd = norm2(d);
      Vector y = x;
      for (std::size_t k = 0; k < 3; ++k) y[k] += 0.99 * r.epsilon * d[k] / nd;
      const Vector f = forward(net, y);
      const auto arg = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
      EXPECT_EQ(arg, r.predicted_class);
    }
  }
}

TEST(EmpiricalLowerBoundTest, Examples) {
  const auto affine = FeedForwardNetwork({Layer{DenseMatrix{{1, 2}, {3, 4}}, Vector{0, 0}}}, Activation{});
  EXPECT_NEAR(empirical_lower_bound(affine, 10, 1), oracle::svd_norm(affine.layer(0).weight), 1e-6);
  EXPECT_GE(empirical_lower_bound(chain({1, 1}), 10000, 3), 0.999);
  EXPECT_THROW(empirical_lower_bound(affine, 0, 1), ValidationError);
}

TEST(EmpiricalLowerBoundTest, DeterministicAndBelowBounds) {
  Activation tanh_act;
  tanh_act.name = ActivationName::kTanh;
  for (const auto& act : {Activation{}, tanh_act}) {
    const auto net = random_network({3, 6, 5, 2}, 4, std::nullopt, act);
    const double e = empirical_lower_bound(net, 2000, 9);
    EXPECT_EQ(e, empirical_lower_bound(net, 2000, 9));
    EXPECT_LE(e, naive_bounds(net).upper * (1 + 1e-9));
    EXPECT_LE(e, lipschitz_bound(net).l2 * (1 + 1e-6));
  }
}

}  // namespace
}  // namespace lipcert
