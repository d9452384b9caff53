#include <gtest/gtest.h>

#include <cmath>

#include "fedmix/error.hpp"
#include "fedmix/linalg.hpp"
#include "fedmix/model.hpp"
#include "fedmix/rng.hpp"
#include "fedmix/subspace.hpp"
#include "oracles.hpp"

using namespace fedmix;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Splits one pair multiset into clients of the given sizes.
std::vector<ClientPairs> partition(const Matrix& a, const Matrix& b,
                                   const std::vector<Eigen::Index>& sizes) {
  std::vector<ClientPairs> out;
  Eigen::Index start = 0;
  for (auto n : sizes) {
    out.push_back({a.middleCols(start, n), b.middleCols(start, n)});
    start += n;
  }
  return out;
}

GroundTruth two_cluster_truth(std::size_t d) {
  GroundTruth t;
  Vector a = Vector::Zero(static_cast<Eigen::Index>(d)), b = a;
  a(0) = 2.0;
  b(1) = -1.5;
  t.thetas = {a, b};
  t.p = {0.5, 0.5};
  t.covariances = {Vector::Ones(a.size()), Vector::Ones(a.size())};
  t.delta = (a - b).norm();
  t.p_min = 0.5;
  return t;
}

}  // namespace

TEST(ResidualPair, Examples) {
  EXPECT_TRUE(residual_pair(vec({1, 0}), 2.0, vec({0.5, 0})) == vec({1.5, 0}));
  EXPECT_TRUE(residual_pair(vec({1, 2}), 5.0, vec({1, 2})) == vec({0, 0}));
  EXPECT_TRUE(residual_pair(vec({2, 1}), 3.0, vec({0, 0})) == vec({6, 3}));
  EXPECT_THROW(residual_pair(vec({2, 1}), 3.0, vec({0, 0, 0})), DimensionError);
}

TEST(ResidualPairProvider, WeightsProportionalToCounts) {
  Rng rng = make_stream(1, Stream::kClient);
  const Matrix a = normal_matrix(rng, 3, 10), b = normal_matrix(rng, 3, 10);
  const ResidualPairProvider p(partition(a, b, {1, 2, 7}));
  double sum = 0;
  for (double w : p.weights()) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(p.weights()[2], 0.7);
  // Y reduces to the plain pair average.
  EXPECT_LE((p.assemble() - a * b.transpose() / 10.0).norm(), 1e-12);
}

TEST(FederatedOI, SingleClientMatchesDenseOracle) {
  // Pairs with sum_j a_j b_j^T / n = 2 e1 e1^T + e2 e2^T.
  Matrix a = Matrix::Zero(3, 2), b = Matrix::Zero(3, 2);
  a(0, 0) = 2;
  b(0, 0) = 2;
  a(1, 1) = std::sqrt(2.0);
  b(1, 1) = std::sqrt(2.0);
  const ResidualPairProvider p({ClientPairs{a, b}});
  Matrix expected_y = Matrix::Zero(3, 3);
  expected_y(0, 0) = 2;
  expected_y(1, 1) = 1;
  ASSERT_LE((p.assemble() - expected_y).norm(), 1e-12);
  const auto res = federated_orthogonal_iteration(p, 1, 200, 3);
  EXPECT_LE(projector_distance(res.basis, dense_top_k_left_singular(p.assemble(), 1)), 1e-8);
  EXPECT_LE(projector_distance(res.basis, OrthonormalBasis(Matrix::Identity(3, 1))), 1e-8);
}

TEST(FederatedOI, SpanEquivalenceAcrossPartitions) {
  Rng rng = make_stream(2, Stream::kClient);
  const Matrix a = normal_matrix(rng, 6, 24), b = normal_matrix(rng, 6, 24);
  const OrthonormalBasis start = random_orthonormal(6, 2, 11);
  const Matrix y = ResidualPairProvider({ClientPairs{a, b}}).assemble();
  const OrthonormalBasis central = orthogonal_iteration(y, start, 40);
  for (const auto& sizes : std::vector<std::vector<Eigen::Index>>{
           {24}, {12, 12}, {1, 5, 18}, {3, 3, 3, 3, 3, 3, 3, 3}}) {
    // Equal per-pair weight: the pair multiset, not the partition, defines Y.
    const ResidualPairProvider p(partition(a, b, sizes));
    const auto res = federated_orthogonal_iteration(p, start, 40);
    EXPECT_LE(projector_distance(res.basis, central), 1e-8);
  }
}

TEST(FederatedOI, FullDimensionSpansEverything) {
  Rng rng = make_stream(3, Stream::kClient);
  const Matrix a = normal_matrix(rng, 4, 20), b = normal_matrix(rng, 4, 20);
  const auto res =
      federated_orthogonal_iteration(ResidualPairProvider({ClientPairs{a, b}}), 4, 6, 1);
  EXPECT_LE((res.basis.projector() - Matrix::Identity(4, 4)).norm(), 1e-10);
}

TEST(FederatedOI, ZeroPairsDegenerateAtFirstOddRound) {
  const ResidualPairProvider p({ClientPairs{Matrix::Zero(3, 2), Matrix::Zero(3, 2)}});
  try {
    federated_orthogonal_iteration(p, 1, 4, 5);
    FAIL() << "expected a degenerate round";
  } catch (const DegenerateRoundError& e) {
    EXPECT_EQ(e.round(), 1u);
  }
}

TEST(FederatedOI, CommunicationInventory) {
  Rng rng = make_stream(4, Stream::kClient);
  const Matrix a = normal_matrix(rng, 5, 9), b = normal_matrix(rng, 5, 9);
  const ResidualPairProvider p(partition(a, b, {2, 3, 4}));
  const std::size_t rounds = 6;
  const auto res = federated_orthogonal_iteration(p, 2, rounds, 1);
  EXPECT_EQ(res.comm.down, rounds * 5 * 2 * 8);
  EXPECT_EQ(res.comm.up, 3 * rounds * 5 * 2 * 8);
}

TEST(FederatedOI, RejectsOddRoundCount) {
  const ResidualPairProvider p({ClientPairs{Matrix::Identity(3, 3), Matrix::Identity(3, 3)}});
  EXPECT_THROW(federated_orthogonal_iteration(p, 1, 3, 1), DimensionError);
}

TEST(ExpectedMoment, Examples) {
  GroundTruth one;
  one.thetas = {vec({1, 2, 3})};
  one.p = {1.0};
  one.covariances = {Vector::Ones(3)};
  EXPECT_EQ(expected_moment_matrix(vec({1, 2, 3}), one).norm(), 0.0);
  const Matrix m = expected_moment_matrix(vec({0, 2, 3}), one);
  Matrix e1 = Matrix::Zero(3, 3);
  e1(0, 0) = 1;
  EXPECT_LE((m - e1).norm(), 1e-15);
}

TEST(ExpectedMoment, RankAtMostK) {
  GroundTruth t = two_cluster_truth(6);
  const Matrix m = expected_moment_matrix(vec({0.1, 0.2, -0.3, 0.4, 0, 1}), t);
  const auto [values, vectors] = oracle::jacobi_eigen(m);
  for (Eigen::Index i = 2; i < values.size(); ++i)
    EXPECT_LE(std::abs(values(i)), 1e-10 * values(0));
}

TEST(ExpectedMoment, MonteCarloAgreement) {
  // 2e5 residual pairs from two-point clients of a k=2, identity-covariance
  // mixture, evaluated at theta = 0.
  MixtureConfig cfg;
  cfg.k = 2;
  cfg.d = 4;
  cfg.M = 200000;
  cfg.sizes.kind = SizeSpec::Kind::kExplicit;
  cfg.sizes.sizes.assign(cfg.M, 2);
  cfg.R = 2.0;
  cfg.sigma = 0.1;
  cfg.feature_map = FeatureMap::identity(4);
  cfg.thetas = {vec({1.5, 0, 0, 0}), vec({0, -1, 1, 0})};
  cfg.seed = 8;
  const Instance inst = generate_instance(cfg);
  const Vector theta = Vector::Zero(4);
  Matrix y = Matrix::Zero(4, 4);
  for (const auto& c : inst.clients) {
    const ClientPairs pr = make_client_pairs(c, {0}, {1}, theta);
    y += pr.a * pr.b.transpose();
  }
  y /= static_cast<double>(cfg.M);
  const Matrix expected = expected_moment_matrix(theta, inst.truth);
  EXPECT_LE(oracle::spectral_norm(y - expected), 0.05 * oracle::spectral_norm(expected));
}
