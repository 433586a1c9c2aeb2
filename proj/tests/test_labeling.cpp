#include <gtest/gtest.h>

#include <random>

#include "efm/labeling.hpp"
#include "test_support.hpp"

namespace efm {
namespace {

EnergyParams energy_params(double beta_units, double lambda_units = 0.0) {
  EnergyParams e;
  e.beta = e.score.ticks(beta_units);
  e.lambda = e.score.ticks(lambda_units);
  return e;
}

TEST(SampleProposals, SinglePlaneSamplesRecoverIt) {
  std::mt19937_64 rng(1);
  const Homography truth = testing::random_homography(rng);
  const auto s = testing::paired_features(rng, {truth}, 40);
  const auto m = testing::identity_matching(40, 0);
  for (auto mode : {Sampling::kUniform, Sampling::kLocalized}) {
    const auto pool = sample_proposals(s.left, s.right, m, 25, 3, {.mode = mode});
    ASSERT_EQ(pool.size(), 25u);
    for (const auto& h : pool) EXPECT_LT(h.distance_to(truth), 1e-7);
  }
}

TEST(SampleProposals, GuardsAndDeterminism) {
  std::mt19937_64 rng(2);
  const auto s = testing::paired_features(rng, {testing::random_homography(rng), testing::random_homography(rng)}, 20);
  const auto m = testing::identity_matching(40, 0);
  EXPECT_THROW(sample_proposals(s.left, s.right, m, 0, 1), DataError);
  EXPECT_THROW(sample_proposals(s.left, s.right, testing::identity_matching(40), 5, 1), DataError);
  EXPECT_EQ(sample_proposals(s.left, s.right, m, 30, 9), sample_proposals(s.left, s.right, m, 30, 9));
  EXPECT_NE(sample_proposals(s.left, s.right, m, 30, 9), sample_proposals(s.left, s.right, m, 30, 10));
}

TEST(SampleProposals, CollinearSupportExhaustsRetries) {
  FeatureSet left{Side::kLeft, {}}, right{Side::kRight, {}};
  for (int i = 0; i < 6; ++i) {
    left.features.push_back({i, {double(i), 0}, {1.0}, false});
    right.features.push_back({i, {double(i), 0}, {1.0}, false});
  }
  EXPECT_THROW(sample_proposals(left, right, testing::identity_matching(6, 0), 3, 1), DegenerateError);
}

TEST(FacilitySearch, IncrementalEvaluationMatchesRecomputation) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    UnaryTable u;
    u.n = 12;
    u.labels = 6;
    u.outlier = 50;
    u.partner.assign(12, 0);
    std::uniform_int_distribution<Ticks> c(0, 80);
    std::bernoulli_distribution absent(0.2);
    for (int i = 0; i < 72; ++i) u.cost.push_back(absent(rng) ? kInfeasibleTicks : c(rng));
    detail::FacilitySearch a(u, 30), b(u, 30);
    a.assign({1, 3});
    for (int drop : {-1, 1, 3})
      for (int add : {-1, 0, 2, 4, 5}) {
        std::vector<int> open;
        for (int h : {1, 3})
          if (h != drop) open.push_back(h);
        if (add >= 0) open.insert(std::upper_bound(open.begin(), open.end(), add), add);
        b.assign(open);
        EXPECT_EQ(a.evaluate(drop, add), b.energy());
        EXPECT_EQ(b.energy(), labeling_energy(u, b.labeling(), 30));
      }
  }
}

TEST(FitStepE1, SingleModelLabelsEverything) {
  std::mt19937_64 rng(5);
  const Homography truth = testing::random_homography(rng);
  const auto s = testing::paired_features(rng, {truth}, 30);
  ProposalPool pool{testing::random_homography(rng), truth, testing::random_homography(rng)};
  const auto params = energy_params(0.5);
  const auto r = fit_step_e1(s.left, s.right, testing::identity_matching(30), pool, params);
  ASSERT_EQ(r.models.size(), 1u);
  EXPECT_LT(r.models[0].distance_to(truth), 1e-7);
  for (int h : r.labeling.assignment) EXPECT_EQ(h, 0);
  EXPECT_EQ(r.energy, params.beta);
}

TEST(FitStepE1, OverwhelmingLabelCostMeansAllOutliers) {
  std::mt19937_64 rng(6);
  const Homography truth = testing::random_homography(rng);
  const auto s = testing::paired_features(rng, {truth}, 10);
  const auto params = energy_params(1000.0);
  const auto r = fit_step_e1(s.left, s.right, testing::identity_matching(10), {truth}, params);
  EXPECT_TRUE(r.models.empty());
  for (int h : r.labeling.assignment) EXPECT_EQ(h, kOutlier);
  EXPECT_EQ(r.energy, 10 * params.score.outlier_ticks());
}

TEST(FitStepE1, TwoPlanesUseExactlyTwoLabels) {
  std::mt19937_64 rng(7);
  const Homography a = Homography::translation(30, 5), b = Homography::translation(-40, 12);
  const auto s = testing::paired_features(rng, {a, b}, 25, 0.2);
  ProposalPool pool{testing::random_homography(rng), a, testing::random_homography(rng), b};
  const auto params = energy_params(3.0);
  const auto r = fit_step_e1(s.left, s.right, testing::identity_matching(50), pool, params);
  ASSERT_EQ(r.models.size(), 2u);
  // Subset oracle: every subset of the pool with per-point best label.
  UnaryTable u = unary_table(s.left, s.right, testing::identity_matching(50), pool, params.score);
  Ticks best = kInfeasibleTicks;
  for (unsigned mask = 0; mask < 16; ++mask) {
    Labeling f;
    for (int p = 0; p < 50; ++p) {
      int label = kOutlier;
      Ticks c = u.outlier;
      for (int h = 0; h < 4; ++h)
        if ((mask >> h & 1u) && u.at(p, h) < c) {
          c = u.at(p, h);
          label = h;
        }
      f.assignment.push_back(label);
    }
    best = std::min(best, labeling_energy(u, f, params.beta));
  }
  // Refitting can only lower the energy below the fixed-pool optimum.
  EXPECT_LE(r.energy, best);
  for (int p = 0; p < 50; ++p) EXPECT_EQ(r.labeling[p] == kOutlier, false);
}

TEST(FitStepE1, TraceIsNonIncreasing) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = testing::paired_features(rng, {testing::random_homography(rng), testing::random_homography(rng)}, 30, 0.5);
    const auto m = testing::identity_matching(60, 0);
    const auto pool = sample_proposals(s.left, s.right, m, 40, static_cast<std::uint64_t>(trial));
    JointMatching start = testing::identity_matching(60);
    const auto r = fit_step_e1(s.left, s.right, start, pool, energy_params(2.0));
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
    EXPECT_EQ(r.trace.back(), r.energy);
  }
}

TEST(FitStepE1, NoLabelCostGivesPointwiseArgmin) {
  std::mt19937_64 rng(9);
  const auto s = testing::paired_features(rng, {testing::random_homography(rng), testing::random_homography(rng)}, 20, 1.0);
  const auto pool = sample_proposals(s.left, s.right, testing::identity_matching(40, 0), 15, 4);
  const auto params = energy_params(0.0);
  const auto u = unary_table(s.left, s.right, testing::identity_matching(40), pool, params.score);
  const auto r = fit_step_e1(s.left, s.right, testing::identity_matching(40), pool, params);
  const auto r2 = fit_step_e2(s.left, s.right, testing::identity_matching(40), pool, params, left_neighbors(s.left));
  EXPECT_EQ(r.energy, r2.energy);
  EXPECT_EQ(r.labeling, r2.labeling);
  // No refit can beat the pointwise optimum of the refit pool, and the result is that optimum.
  const auto u2 = unary_table(s.left, s.right, testing::identity_matching(40), r.models, params.score);
  for (int p = 0; p < 40; ++p) {
    Ticks best = u2.outlier;
    for (int h = 0; h < u2.labels; ++h) best = std::min(best, u2.at(p, h));
    EXPECT_EQ(u2.at(p, r.labeling[p]), best);
  }
  (void)u;
}

TEST(BinarySolver, MatchesEnumeration) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 10;
    BinaryProblem b;
    std::uniform_int_distribution<Ticks> c(0, 50);
    std::bernoulli_distribution inf(0.1);
    for (int i = 0; i < n; ++i) b.unary.push_back({c(rng), inf(rng) ? kInfeasibleTicks : c(rng)});
    std::uniform_int_distribution<int> node(0, n - 1);
    for (int k = 0; k < 2 * n; ++k) {
      const int i = node(rng), j = node(rng);
      if (i == j) continue;
      Ticks e00 = c(rng), e11 = c(rng), e01 = c(rng), e10 = c(rng);
      if (e00 + e11 > e01 + e10) e01 += e00 + e11 - e01 - e10;
      b.pairwise.push_back({i, j, e00, e01, e10, e11});
    }
    Ticks best = kInfeasibleTicks;
    std::vector<int> x(static_cast<std::size_t>(n));
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      for (int i = 0; i < n; ++i) x[i] = mask >> i & 1u;
      best = std::min(best, binary_energy(b, x));
    }
    EXPECT_EQ(solve_binary(b).energy, best) << "trial " << trial;
  }
}

TEST(BinarySolver, RejectsNonSubmodularTerms) {
  BinaryProblem b;
  b.unary = {{0, 0}, {0, 0}};
  b.pairwise.push_back({0, 1, 5, 0, 0, 5});
  EXPECT_THROW(solve_binary(b), DataError);
}

TEST(FitStepE2, SmoothnessPullsNeighborsTogether) {
  // p0 prefers A by one tick, p1 prefers B by one tick.
  FeatureSet left{Side::kLeft, {{0, {0, 0}, {1.0}, false}, {1, {1, 0}, {1.0}, false}}};
  FeatureSet right{Side::kRight, {{0, {0, 0}, {1.0}, false}, {1, {1, 0}, {1.0}, false}}};
  const Homography a = Homography::scaling(1.0 + 1e-6), b = Homography::translation(5e-7, 0);
  EnergyParams params;
  params.lambda = 10;
  const auto u = unary_table(left, right, testing::identity_matching(2), {a, b}, params.score);
  ASSERT_EQ(u.at(0, 0), 0);
  ASSERT_EQ(u.at(0, 1), 1);
  ASSERT_EQ(u.at(1, 0), 2);
  ASSERT_EQ(u.at(1, 1), 1);
  JointMatching split{{{0, 0, 0}, {1, 1, 1}}, 0};
  const auto r = fit_step_e2(left, right, split, {a, b}, params, {{0, 1}});
  EXPECT_EQ(r.labeling[0], r.labeling[1]);
  EXPECT_EQ(r.energy, 2);
  EXPECT_EQ(r.models.size(), 1u);
}

TEST(FitStepE2, EnergyNonIncreasingAndSmootherThanE1) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = testing::paired_features(rng, {testing::random_homography(rng), testing::random_homography(rng)}, 30, 0.7);
    const auto pool = sample_proposals(s.left, s.right, testing::identity_matching(60, 0), 20, static_cast<std::uint64_t>(trial));
    const auto nbrs = left_neighbors(s.left);
    const auto params = energy_params(2.0, 0.5);
    const auto e1 = fit_step_e1(s.left, s.right, testing::identity_matching(60), pool, params);
    JointMatching start = testing::identity_matching(60);
    for (auto& t : start.triples) t.label = e1.labeling[t.p];
    const auto e2 = fit_step_e2(s.left, s.right, start, e1.models, params, nbrs);
    for (std::size_t i = 1; i < e2.trace.size(); ++i) EXPECT_LE(e2.trace[i], e2.trace[i - 1]);
    const auto u = unary_table(s.left, s.right, start, e1.models, params.score);
    EXPECT_LE(e2.energy, labeling_energy(u, e1.labeling, nbrs, params));
  }
}

TEST(Reestimate, Examples) {
  std::mt19937_64 rng(12);
  const Homography truth = testing::random_homography(rng);
  const auto s = testing::paired_features(rng, {truth}, 10);
  const auto m = testing::identity_matching(10, 0);
  auto [f, pool] = reestimate(labeling_of(m), m, s.left, s.right);
  ASSERT_EQ(pool.size(), 1u);
  for (int p = 0; p < 10; ++p) EXPECT_LT(symmetric_transfer_error(pool[0], s.left[p].pos, s.right[p].pos), 1e-9);

  Labeling three = labeling_of(m);
  for (int p = 3; p < 10; ++p) three[p] = 1;
  auto [f3, pool3] = reestimate(three, m, s.left, s.right);
  EXPECT_EQ(pool3.size(), 1u);
  for (int p = 0; p < 3; ++p) EXPECT_EQ(f3[p], kOutlier);
  for (int p = 3; p < 10; ++p) EXPECT_EQ(f3[p], 0);

  auto [f0, pool0] = reestimate(labeling_of(testing::identity_matching(10)), m, s.left, s.right);
  EXPECT_TRUE(pool0.empty());
}

}  // namespace
}  // namespace efm
