#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "efm/scene.hpp"
#include "test_support.hpp"

namespace efm {
namespace {

SceneSpec small_spec(std::uint64_t seed, double noise = 0.0, double occlusion = 0.0) {
  SceneSpec s;
  s.plane_count = 2;
  s.features_per_plane = 40;
  s.noise_sigma = noise;
  s.occlusion_rate = occlusion;
  s.rng_seed = seed;
  return s;
}

TEST(GenerateScene, NoiseFreeIsExactBijection) {
  const Scene sc = generate_scene(small_spec(1));
  ASSERT_EQ(sc.left.size(), 80);
  ASSERT_EQ(sc.right.size(), 80);
  ASSERT_EQ(sc.gt.matching.size(), 80u);
  std::vector<int> rseen(80, 0);
  for (const auto& [p, q] : sc.gt.matching) {
    ++rseen[q];
    const int k = sc.gt.labeling[p];
    EXPECT_EQ(k, sc.gt.left_plane[p]);
    EXPECT_EQ(k, sc.gt.right_plane[q]);
    EXPECT_LT(symmetric_transfer_error(sc.gt.models[k], sc.left[p].pos, sc.right[q].pos), 1e-9);
  }
  for (int c : rseen) EXPECT_EQ(c, 1);
}

TEST(GenerateScene, OcclusionDropsAboutTheExpectedShare) {
  SceneSpec s = small_spec(3, 0.0, 0.1);
  s.plane_count = 1;
  s.features_per_plane = 100;
  const Scene sc = generate_scene(s);
  const double sigma = std::sqrt(100 * 0.1 * 0.9);
  EXPECT_LE(std::abs(100 - sc.left.size() - 10.0), 3 * sigma);
  EXPECT_LE(std::abs(100 - sc.right.size() - 10.0), 3 * sigma);
  std::vector<char> matched(static_cast<std::size_t>(sc.left.size()), 0);
  for (const auto& [p, q] : sc.gt.matching) matched[p] = 1;
  for (int p = 0; p < sc.left.size(); ++p) EXPECT_EQ(matched[p] != 0, sc.gt.labeling[p] != kOutlier);
}

TEST(GenerateScene, FixedSeedIsBitIdentical) {
  const Scene a = generate_scene(small_spec(7, 0.5, 0.1));
  const Scene b = generate_scene(small_spec(7, 0.5, 0.1));
  const Scene c = generate_scene(small_spec(8, 0.5, 0.1));
  EXPECT_EQ(a.left, b.left);
  EXPECT_EQ(a.right, b.right);
  EXPECT_EQ(a.gt.matching, b.gt.matching);
  EXPECT_NE(a.left, c.left);
}

TEST(GenerateScene, RejectsInvalidSpecs) {
  SceneSpec s;
  s.occlusion_rate = 1.0;
  EXPECT_THROW(generate_scene(s), DataError);
  s = {};
  s.plane_count = 0;
  EXPECT_THROW(generate_scene(s), DataError);
  s = {};
  s.stress_planes = 4;
  EXPECT_THROW(generate_scene(s), DataError);
}

TEST(Ransac, RecoversModelFromEightyPercentInliers) {
  std::mt19937_64 rng(11);
  const Homography truth = testing::random_homography(rng);
  std::uniform_real_distribution<double> u(0.0, 500.0);
  std::vector<PointPair> pairs;
  for (int i = 0; i < 40; ++i) {
    const Point2 p{u(rng), u(rng)};
    pairs.push_back({p, apply_homography(truth, p)});
  }
  for (int i = 0; i < 10; ++i) pairs.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}});
  const auto r = ransac_homography(pairs, 200, 1.0, 5);
  EXPECT_LT(r.model.distance_to(truth), 1e-7);
  ASSERT_EQ(r.inliers.size(), 40u);
  for (int i = 0; i < 40; ++i) EXPECT_EQ(r.inliers[i], i);
}

TEST(Ransac, PureNoiseFails) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 500.0);
  std::vector<PointPair> pairs;
  for (int i = 0; i < 30; ++i) pairs.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}});
  EXPECT_THROW(ransac_homography(pairs, 200, 1.0, 1), DegenerateError);
}

TEST(Ransac, AllInliersSucceedInOneIteration) {
  std::mt19937_64 rng(13);
  const Homography truth = testing::random_homography(rng);
  std::uniform_real_distribution<double> u(0.0, 500.0);
  std::vector<PointPair> pairs;
  for (int i = 0; i < 12; ++i) {
    const Point2 p{u(rng), u(rng)};
    pairs.push_back({p, apply_homography(truth, p)});
  }
  const auto r = ransac_homography(pairs, 1, 1.0, 3);
  EXPECT_EQ(r.inliers.size(), 12u);
  EXPECT_LT(r.model.distance_to(truth), 1e-7);
  EXPECT_THROW(ransac_homography(std::span(pairs).first(3), 10, 1.0, 1), DataError);
  EXPECT_THROW(ransac_homography(pairs, 0, 1.0, 1), DataError);
}

TEST(GtAssignment, NoiseFreeRegionIsExactPermutation) {
  const Scene sc = generate_scene(small_spec(21));
  const Region r = extract_region(sc, 0);
  const ScoreParams params;
  const auto gt = gt_assignment(r.left, r.right, params);
  EXPECT_EQ(gt.objective, 0);
  EXPECT_EQ(gt.matching.size(), r.left.size());
  for (const auto& t : gt.matching.triples) {
    EXPECT_EQ(t.label, 0);
    EXPECT_TRUE(std::binary_search(sc.gt.matching.begin(), sc.gt.matching.end(),
                                   std::pair{r.left_ids[t.p], r.right_ids[t.q]}));
  }
}

TEST(GtAssignment, OneOccludedRightFeatureGoesToOutlier) {
  const Scene sc = generate_scene(small_spec(22));
  Region r = extract_region(sc, 1);
  r.right.features.pop_back();
  const int lost = [&] {
    for (const auto& [p, q] : sc.gt.matching)
      if (q == r.right_ids.back()) return static_cast<int>(std::find(r.left_ids.begin(), r.left_ids.end(), p) - r.left_ids.begin());
    return -1;
  }();
  ASSERT_GE(lost, 0);
  const ScoreParams params;
  const auto gt = gt_assignment(r.left, r.right, params);
  EXPECT_EQ(gt.objective, params.outlier_ticks());
  for (const auto& t : gt.matching.triples) {
    if (t.p == lost) {
      EXPECT_EQ(t.label, kOutlier);
    } else {
      EXPECT_EQ(t.label, 0);
      EXPECT_TRUE(std::binary_search(sc.gt.matching.begin(), sc.gt.matching.end(),
                                     std::pair{r.left_ids[t.p], r.right_ids[t.q]}));
    }
  }
}

TEST(GtAssignment, DescentAndRestarts) {
  for (std::uint64_t seed = 30; seed < 33; ++seed) {
    const Scene sc = generate_scene(small_spec(seed, 0.5, 0.1));
    const Region r = extract_region(sc, 0);
    ScoreParams params;
    params.outlier_cost = 5.0;
    const auto one = gt_assignment(r.left, r.right, params, {.restarts = 1, .seed = seed});
    const auto five = gt_assignment(r.left, r.right, params, {.restarts = 5, .seed = seed});
    EXPECT_LE(five.objective, one.objective);
    ASSERT_EQ(five.traces.size(), 5u);
    for (const auto& trace : five.traces)
      for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LT(trace[i], trace[i - 1]);
  }
  EXPECT_THROW(gt_assignment({}, {}, ScoreParams{}, {.restarts = 0}), DataError);
}

}  // namespace
}  // namespace efm
