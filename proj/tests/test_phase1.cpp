#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "fedmix/error.hpp"
#include "fedmix/metrics.hpp"
#include "fedmix/model.hpp"
#include "fedmix/phase1.hpp"
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

// A few data-rich clients followed by many two-point clients.
MixtureConfig anchor_mixture(std::size_t k, std::size_t d, std::size_t rich, std::size_t n_rich,
                             std::size_t poor, double sigma, std::uint64_t seed) {
  MixtureConfig cfg;
  cfg.k = k;
  cfg.d = d;
  cfg.M = rich + poor;
  cfg.sizes.kind = SizeSpec::Kind::kBlocks;
  cfg.sizes.blocks = {{rich, n_rich}, {poor, 2}};
  cfg.sigma = sigma;
  cfg.R = 3.0;
  cfg.radius = 2.0;
  cfg.delta_target = 2.0;
  cfg.feature_map = FeatureMap::identity(d);
  cfg.seed = seed;
  return cfg;
}

Phase1Config small_phase1(std::size_t k, double delta) {
  Phase1Config cfg;
  cfg.k = k;
  cfg.n_H = 6;
  cfg.m = 400;
  cfg.ell = 200;
  cfg.T = 6;
  cfg.T1 = 20;
  cfg.T2 = 30;
  cfg.epsilon = 0.2;
  cfg.delta_hint = delta;
  cfg.allow_data_reuse = true;
  return cfg;
}

}  // namespace

TEST(Phase1Config, Validation) {
  Phase1Config cfg = small_phase1(2, 1.0);
  EXPECT_NO_THROW(validate(cfg));
  cfg.epsilon = 0.3;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.epsilon = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = small_phase1(2, 1.0);
  cfg.T1 = 5;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = small_phase1(2, 1.0);
  EXPECT_EQ(cfg.resolved_min_local(), 400u);
  cfg.allow_data_reuse = false;
  EXPECT_EQ(cfg.resolved_min_local(), 2400u);
}

TEST(SelectAnchors, AllEligibleReturnsEligibleSet) {
  const std::vector<std::size_t> sizes{10, 2, 10, 10, 3};
  EXPECT_EQ(select_anchors(sizes, 3, 10, 1), (std::vector<std::size_t>{0, 2, 3}));
}

TEST(SelectAnchors, NoEligibleClientThrows) {
  EXPECT_THROW(select_anchors({2, 3, 4}, 1, 10, 1), InsufficientDataError);
}

TEST(SelectAnchors, UniformOverEligible) {
  const std::vector<std::size_t> sizes{50, 1, 50, 50, 2, 50};
  std::vector<double> freq(sizes.size(), 0.0);
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) freq[select_anchors(sizes, 1, 50, s)[0]] += 1.0 / trials;
  for (std::size_t i : {0u, 2u, 3u, 5u}) EXPECT_NEAR(freq[i], 0.25, 0.02);
  EXPECT_EQ(freq[1] + freq[4], 0.0);
}

TEST(AnchorPairRows, FreshAndReusedCursor) {
  const PairRows r = anchor_pair_rows(12, 2, 1, false);
  EXPECT_EQ(r.first, (std::vector<std::size_t>{4, 6}));
  EXPECT_EQ(r.second, (std::vector<std::size_t>{5, 7}));
  EXPECT_THROW(anchor_pair_rows(12, 2, 3, false), InsufficientDataError);
  const PairRows wrap = anchor_pair_rows(6, 2, 1, true);
  EXPECT_EQ(wrap.first, (std::vector<std::size_t>{4, 0}));
  EXPECT_EQ(wrap.second, (std::vector<std::size_t>{5, 1}));
}

TEST(FreshClientSampler, DisjointWithoutReuse) {
  std::vector<std::size_t> sizes(40, 2);
  sizes[3] = 100;
  FreshClientSampler sampler(sizes, {3}, false, 9);
  std::set<std::size_t> seen;
  for (std::size_t t = 0; t < 3; ++t) {
    const auto batch = sampler.draw(13, t);
    EXPECT_TRUE(std::is_sorted(batch.begin(), batch.end()));
    for (auto c : batch) {
      EXPECT_NE(c, 3u);
      EXPECT_TRUE(seen.insert(c).second);
    }
  }
  EXPECT_THROW(sampler.draw(1, 3), InsufficientDataError);
}

TEST(BuildA, ZeroAtTruthWithoutNoise) {
  Rng rng = make_stream(1, Stream::kClient);
  ClientDataset c;
  c.features = normal_matrix(rng, 8, 3);
  const Vector theta = vec({1, -1, 0.5});
  c.responses = c.features * theta;
  const Matrix a = build_A(c, theta, random_orthonormal(3, 2, 4), anchor_pair_rows(8, 4, 0, false));
  EXPECT_EQ(a.norm(), 0.0);
}

TEST(BuildA, SinglePairOuterProduct) {
  ClientDataset c;
  c.features.resize(2, 3);
  c.features << 1, 2, 0, 0, 1, -1;
  c.responses = vec({3, 2});
  const Vector theta = vec({0.5, 0, 1});
  const Matrix u = Matrix::Identity(3, 2);
  // eps1 = (3 - 0.5) * (1,2,0) = (2.5, 5, 0); eps2 = (2 - (-1)) * (0,1,-1) = (0, 3, -3)
  Matrix expected(2, 2);
  expected << 0, 7.5, 0, 15;
  const Matrix a = build_A(c, theta, OrthonormalBasis(u), anchor_pair_rows(2, 1, 0, false));
  EXPECT_LE((a - expected).norm(), 1e-14);
}

TEST(BuildA, LargeSampleMatchesExpectedMoment) {
  MixtureConfig cfg = anchor_mixture(1, 4, 1, 80000, 0, 0.1, 3);
  cfg.M = 1;
  cfg.sizes.blocks = {{1, 80000}};
  cfg.delta_target = 0.0;
  const Instance inst = generate_instance(cfg);
  const Vector theta = Vector::Zero(4);
  const OrthonormalBasis u(Matrix::Identity(4, 4));
  const Matrix a = build_A(inst.clients[0], theta, u, anchor_pair_rows(80000, 40000, 0, false));
  const Matrix expected = expected_moment_matrix(theta, inst.truth);
  EXPECT_LE(oracle::spectral_norm(a - expected), 0.05 * oracle::spectral_norm(expected));
}

TEST(GreedyCluster, Examples) {
  const auto two = greedy_cluster({vec({0, 0}), vec({0.01, 0}), vec({5, 0})}, 1.0, 2);
  ASSERT_EQ(two.centers.size(), 2u);
  EXPECT_LE((two.centers[0] - vec({0.005, 0})).norm(), 1e-15);
  EXPECT_LE((two.centers[1] - vec({5, 0})).norm(), 1e-15);
  EXPECT_EQ(two.assignment, (std::vector<std::size_t>{0, 0, 1}));

  const auto one = greedy_cluster({vec({1, 2}), vec({1, 2}), vec({1, 2})}, 0.5, 1);
  EXPECT_TRUE(one.centers[0] == vec({1, 2}));

  try {
    greedy_cluster({vec({0}), vec({1}), vec({2})}, 1.5, 2);
    FAIL() << "chain should give one component";
  } catch (const ClusteringError& e) {
    EXPECT_EQ(e.components(), 1u);
  }
}

TEST(GreedyCluster, WideComponentRejected) {
  // A chain 0, 0.9, 1.8 is one component at threshold 1 but spans 1.8 < 2;
  // extending to 2.7 exceeds twice the threshold.
  EXPECT_NO_THROW(greedy_cluster({vec({0}), vec({0.9}), vec({1.8})}, 1.0, 1));
  EXPECT_THROW(greedy_cluster({vec({0}), vec({0.9}), vec({1.8}), vec({2.7})}, 1.0, 1),
               ClusteringError);
}

TEST(GreedyCluster, OrderIndependent) {
  std::vector<Vector> pts{vec({0, 0}), vec({5, 5}), vec({0.2, 0}), vec({5, 5.3})};
  const auto a = greedy_cluster(pts, 1.0, 2);
  std::swap(pts[0], pts[3]);
  const auto b = greedy_cluster(pts, 1.0, 2);
  EXPECT_LE((a.centers[0] - b.centers[1]).norm(), 1e-15);
  EXPECT_LE((a.centers[1] - b.centers[0]).norm(), 1e-15);
}

TEST(FedmdRound, FrozenAnchorUntouched) {
  const Instance inst = generate_instance(anchor_mixture(2, 4, 2, 400, 50, 0.1, 5));
  Phase1Config cfg = small_phase1(2, inst.truth.delta);
  cfg.m = 50;
  AnchorState frozen;
  frozen.client_index = 0;
  frozen.theta = vec({0.3, -0.2, 0.1, 0.7});
  frozen.sigma_hat = 0.01;
  frozen.frozen = true;
  frozen.rounds_used = 2;
  std::vector<AnchorState> states{frozen};
  std::vector<std::size_t> fresh(50);
  std::iota(fresh.begin(), fresh.end(), 2);
  CommBytes running;
  const auto rows = fedmd_round(states, inst.clients, fresh, cfg, 3, 1, &inst.truth, running);
  EXPECT_TRUE(states[0].theta == frozen.theta);
  EXPECT_EQ(states[0].sigma_hat, frozen.sigma_hat);
  EXPECT_EQ(states[0].rounds_used, frozen.rounds_used);
  EXPECT_TRUE(states[0].frozen);
  EXPECT_EQ(running.up + running.down, 0u);
  EXPECT_FALSE(rows[0].updated);
}

TEST(FedmdRound, StepLengthAndCommunicationInventory) {
  const Instance inst = generate_instance(anchor_mixture(2, 5, 1, 400, 30, 0.1, 6));
  for (auto [alpha, beta] : {std::pair{1.0, 1.0}, std::pair{0.5, 2.0}}) {
    Phase1Config cfg = small_phase1(2, inst.truth.delta);
    cfg.m = 30;
    cfg.T1 = 8;
    cfg.epsilon = 0.01;
    cfg.alpha = alpha;
    cfg.beta = beta;
    AnchorState s;
    s.client_index = 0;
    s.theta = Vector::Zero(5);
    std::vector<AnchorState> states{s};
    std::vector<std::size_t> fresh(30);
    std::iota(fresh.begin(), fresh.end(), 1);
    CommBytes running;
    const auto rows = fedmd_round(states, inst.clients, fresh, cfg, 0, 2, nullptr, running);
    ASSERT_TRUE(rows[0].updated);
    // Update length alpha * sigma_hat / (2 beta^2) along a unit direction.
    EXPECT_NEAR(states[0].theta.norm(), alpha * states[0].sigma_hat / (2 * beta * beta), 1e-12);

    const std::uint64_t d = 5, k = 2, T1 = 8, m = 30;
    EXPECT_EQ(rows[0].message.down, d * 8 + T1 * d * k * 8 + d * k * 8);
    EXPECT_EQ(rows[0].message.up, m * T1 * d * k * 8 + d * 8);
    EXPECT_EQ(running.up, rows[0].message.up);
    EXPECT_FALSE(rows[0].residual_true.has_value());
  }
}

TEST(FedmdRound, UnitSigmaGivesHalfStep) {
  // alpha = beta = 1 turns sigma_hat = 1 into a step of 0.5: on a noiseless
  // single cluster at distance exactly 1 the first move is close to half of it.
  MixtureConfig mc = anchor_mixture(1, 3, 1, 40000, 2000, 0.0, 7);
  mc.thetas = {vec({1, 0, 0})};
  const Instance inst = generate_instance(mc);
  Phase1Config cfg = small_phase1(1, 1.0);
  cfg.m = 2000;
  cfg.ell = 20000;
  cfg.allow_data_reuse = false;
  cfg.T = 1;
  AnchorState s;
  s.client_index = 0;
  s.theta = Vector::Zero(3);
  std::vector<AnchorState> states{s};
  std::vector<std::size_t> fresh(2000);
  std::iota(fresh.begin(), fresh.end(), 1);
  CommBytes running;
  fedmd_round(states, inst.clients, fresh, cfg, 0, 3, nullptr, running);
  EXPECT_NEAR(states[0].sigma_hat, 1.0, 0.05);
  EXPECT_NEAR(states[0].theta(0), 0.5 * states[0].sigma_hat, 1e-3);
  EXPECT_NEAR(states[0].theta.norm(), 0.5 * states[0].sigma_hat, 1e-12);
}

TEST(RunFedmd, ZeroRoundsClustersInitialPoints) {
  const Instance inst = generate_instance(anchor_mixture(2, 4, 6, 400, 100, 0.1, 8));
  Phase1Config cfg = small_phase1(2, inst.truth.delta);
  cfg.T = 0;
  const auto r2 = run_fedmd(inst.clients, cfg, 1);
  EXPECT_FALSE(r2.centers.has_value());
  EXPECT_EQ(r2.components, 1u);
  EXPECT_TRUE(r2.trace.empty());

  cfg.k = 1;
  const auto r1 = run_fedmd(inst.clients, cfg, 1);
  ASSERT_TRUE(r1.centers.has_value());
  EXPECT_EQ((*r1.centers)[0].norm(), 0.0);
}

TEST(RunFedmd, SingleClusterNoiselessReachesTolerance) {
  MixtureConfig mc = anchor_mixture(1, 4, 4, 4000, 4000, 0.0, 9);
  mc.delta_target = 2.0;
  const Instance inst = generate_instance(mc);
  Phase1Config cfg = small_phase1(1, mc.delta_target);
  cfg.n_H = 4;
  cfg.m = 400;
  cfg.ell = 200;
  cfg.T = 8;
  cfg.allow_data_reuse = false;
  const auto r = run_fedmd(inst.clients, cfg, 2, &inst.truth);
  ASSERT_TRUE(r.centers.has_value());
  EXPECT_LE(((*r.centers)[0] - inst.truth.thetas[0]).norm(), cfg.epsilon * mc.delta_target);
}

TEST(RunFedmd, TraceInvariants) {
  const Instance inst = generate_instance(anchor_mixture(2, 4, 6, 2000, 3000, 0.05, 10));
  Phase1Config cfg = small_phase1(2, inst.truth.delta);
  cfg.m = 300;
  cfg.ell = 100;
  cfg.T = 8;
  const auto r = run_fedmd(inst.clients, cfg, 3, &inst.truth);
  const double alpha = 1.0, beta = 1.0, R = 3.0;
  std::map<std::size_t, double> frozen_norm;
  std::uint64_t prev = 0;
  for (const auto& row : r.trace) {
    EXPECT_LE(row.theta_norm, (1 + 2 * beta / alpha) * R);
    EXPECT_GE(row.cumulative.up + row.cumulative.down, prev);
    prev = row.cumulative.up + row.cumulative.down;
    if (frozen_norm.count(row.anchor)) {
      EXPECT_TRUE(row.frozen);
      EXPECT_FALSE(row.updated);
      EXPECT_EQ(row.theta_norm, frozen_norm[row.anchor]);
      EXPECT_EQ(row.message.up + row.message.down, 0u);
    } else if (row.frozen) {
      frozen_norm[row.anchor] = row.theta_norm;
      EXPECT_LE(row.sigma_hat, cfg.epsilon * cfg.delta_hint);
    } else {
      EXPECT_GT(row.sigma_hat, cfg.epsilon * cfg.delta_hint);
    }
  }
  EXPECT_EQ(r.trace.size(), cfg.T * cfg.n_H);
}

TEST(RunFedmd, LabelsNeverInfluenceTheRun) {
  const Instance inst = generate_instance(anchor_mixture(2, 4, 6, 600, 1000, 0.1, 11));
  Phase1Config cfg = small_phase1(2, inst.truth.delta);
  cfg.m = 100;
  cfg.T = 4;
  const auto with = run_fedmd(inst.clients, cfg, 5, &inst.truth);
  const auto without = run_fedmd(inst.clients, cfg, 5, nullptr);
  ASSERT_EQ(with.states.size(), without.states.size());
  for (std::size_t i = 0; i < with.states.size(); ++i)
    EXPECT_TRUE(with.states[i].theta == without.states[i].theta);
}

TEST(RunFedmd, InsufficientFreshClientsThrows) {
  const Instance inst = generate_instance(anchor_mixture(2, 4, 6, 2400, 100, 0.1, 12));
  Phase1Config cfg = small_phase1(2, inst.truth.delta);
  cfg.m = 60;
  cfg.epsilon = 0.01;
  cfg.allow_data_reuse = false;
  EXPECT_THROW(run_fedmd(inst.clients, cfg, 1), InsufficientDataError);
}

TEST(SelectAnchors, CouponCollectorCoverage) {
  // n_H >= log(k / 0.05) / p_min anchors cover every cluster in >= 95% of seeds.
  const std::size_t k = 3;
  const std::size_t n_H = static_cast<std::size_t>(std::ceil(std::log(k / 0.05) * 3.0));
  int covered = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    MixtureConfig mc = anchor_mixture(k, 4, 60, 10, 0, 0.1, s);
    mc.M = 60;
    mc.sizes.blocks = {{60, 10}};
    const Instance inst = generate_instance(mc);
    const auto anchors = select_anchors(inst.sizes(), n_H, 10, s);
    std::set<std::size_t> clusters;
    for (auto a : anchors) clusters.insert(inst.truth.labels[a]);
    covered += clusters.size() == k;
  }
  EXPECT_GE(covered, 190);
}
