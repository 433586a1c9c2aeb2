#include <gtest/gtest.h>

#include <random>

#include "efm/eval.hpp"
#include "test_support.hpp"

namespace efm {
namespace {

GroundTruth two_by_two_truth() {
  GroundTruth gt;
  gt.models = {Homography()};
  gt.matching = {{0, 0}, {1, 1}};
  gt.labeling.assignment = {0, 0};
  gt.left_plane = {0, 0};
  gt.right_plane = {0, 0};
  return gt;
}

FeatureSet points(Side side, std::vector<Point2> pts) {
  FeatureSet s{side, {}};
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) s.features.push_back({i, pts[i], {1.0}, false});
  return s;
}

TEST(Roc, HandCount) {
  const auto left = points(Side::kLeft, {{0, 0}, {1, 1}});
  const auto right = points(Side::kRight, {{0, 0}, {1, 1}});
  const GroundTruth gt = two_by_two_truth();
  // One correct and one wrong identified pair; roc scores triples as given.
  const JointMatching m{{{0, 0, 0}, {1, 0, 0}}, 0};
  const auto r = roc(m, left, right, gt);
  EXPECT_EQ(r.P, 2);
  EXPECT_EQ(r.N, 2);
  EXPECT_EQ(r.TP, 1);
  EXPECT_EQ(r.FP, 1);
  EXPECT_DOUBLE_EQ(r.tpr, 0.5);
  EXPECT_DOUBLE_EQ(r.fpr, 0.5);
}

TEST(Roc, IdentityOutliersAndDummies) {
  const auto left = points(Side::kLeft, {{0, 0}, {1, 1}});
  auto right = points(Side::kRight, {{0, 0}, {1, 1}});
  const GroundTruth gt = two_by_two_truth();
  const auto exact = roc({{{0, 0, 0}, {1, 1, 0}}, 0}, left, right, gt);
  EXPECT_EQ(exact.tpr, 1.0);
  EXPECT_EQ(exact.fpr, 0.0);
  const auto none = roc({{{0, 0, kOutlier}, {1, 1, kOutlier}}, 0}, left, right, gt);
  EXPECT_EQ(none.TP, 0);
  EXPECT_EQ(none.FP, 0);

  const auto wider = points(Side::kRight, {{0, 0}, {1, 1}, {2, 2}});
  EXPECT_THROW(roc({}, left, wider, gt), DataError);

  auto balanced_left = left;
  balanced_left.features.push_back({2, {}, {}, true});
  right.features.push_back({2, {5, 5}, {1.0}, false});
  GroundTruth gt3 = gt;
  gt3.right_plane.push_back(0);
  const auto dummy = roc({{{0, 0, 0}, {1, 1, 0}, {2, 2, 0}}, 0}, balanced_left, right, gt3);
  EXPECT_EQ(dummy.TP, 2);
  EXPECT_EQ(dummy.FP, 0);
  EXPECT_EQ(dummy.N, 2 * 3 - 2);
}

TEST(Ste, Examples) {
  const auto left = points(Side::kLeft, {{0, 0}, {4, 4}});
  const auto right = points(Side::kRight, {{0.75, 0}, {4, 4}});
  const Labeling f{{0, 1}};
  const std::vector<std::pair<int, int>> pairs{{0, 0}, {1, 1}};
  EXPECT_DOUBLE_EQ(ste(Homography(), f, pairs, left, right, 0), 1.5);
  EXPECT_DOUBLE_EQ(ste(Homography(), f, pairs, left, right, 1), 0.0);
  EXPECT_DOUBLE_EQ(ste(Homography(), f, pairs, left, right, 7), 0.0);

  const JointMatching m{{{0, 0, 0}, {1, 1, 0}}, 0};
  EXPECT_DOUBLE_EQ(ste(Homography(), m, left, right, 0),
                   ste(Homography(), f, pairs, left, right, 0) + ste(Homography(), f, pairs, left, right, 1));
}

Scene noisy_scene(double sigma) {
  SceneSpec s;
  s.plane_count = 2;
  s.features_per_plane = 40;
  s.noise_sigma = sigma;
  s.rng_seed = 3;
  return generate_scene(s);
}

TEST(Gq, GroundTruthModelsScoreOne) {
  const Scene sc = noisy_scene(0.5);
  const auto report = gq(sc.gt.models, sc.gt, sc.left, sc.right);
  ASSERT_EQ(report.entries.size(), 2u);
  for (const auto& e : report.entries) {
    EXPECT_EQ(e.estimated, e.gt_model);
    ASSERT_TRUE(e.ratio.has_value());
    EXPECT_EQ(*e.ratio, 1.0);
  }
}

TEST(Gq, PerturbedModelScoresAboveOne) {
  const Scene sc = noisy_scene(0.5);
  Eigen::Matrix3d m = sc.gt.models[0].matrix();
  m(0, 2) += 2.0 * m(2, 2);
  const auto report = gq({Homography(m), sc.gt.models[1]}, sc.gt, sc.left, sc.right);
  ASSERT_TRUE(report.entries[0].ratio.has_value());
  EXPECT_GT(*report.entries[0].ratio, 1.0);
  EXPECT_EQ(*report.entries[1].ratio, 1.0);
}

TEST(Gq, NoiseFreeIsUndefinedAndEmptyPoolThrows) {
  const Scene sc = noisy_scene(0.0);
  for (const auto& e : gq(sc.gt.models, sc.gt, sc.left, sc.right).entries) EXPECT_FALSE(e.ratio.has_value());
  EXPECT_THROW(gq({}, sc.gt, sc.left, sc.right), DataError);
}

TEST(Summarize, Examples) {
  const auto odd = summarize({3.0, 1.0, 2.0});
  EXPECT_EQ(odd.median, 2.0);
  EXPECT_EQ(odd.mean, 2.0);
  EXPECT_DOUBLE_EQ(odd.variance, 2.0 / 3.0);
  EXPECT_EQ(odd.count, 3);
  EXPECT_EQ(summarize({4.0, 1.0, 2.0, 3.0}).median, 2.5);
  EXPECT_EQ(summarize({}).count, 0);
}

TEST(BenchScaling, OracleArmIsCappedAndRunsAreRepeatable) {
  BenchOptions opt;
  opt.sizes = {6, 12};
  opt.fixed_labels = 2;
  opt.label_counts = {2};
  opt.fixed_size = 6;
  opt.seeds = {1, 2};
  const auto rows = bench_scaling(opt);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[2].features, 12);
  EXPECT_EQ(rows[2].method, "mcmf");
  EXPECT_EQ(rows[3].sweep, "labels");
  for (std::size_t i = 0; i < rows.size(); i += 2)
    if (i + 1 < rows.size() && rows[i + 1].method == "exhaustive") {
      EXPECT_EQ(rows[i].mean_evaluations, rows[i + 1].mean_evaluations);
      EXPECT_EQ(rows[i].mean_energy, rows[i + 1].mean_energy);
    }
  const auto again = bench_scaling(opt);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].mean_evaluations, again[i].mean_evaluations);
    EXPECT_EQ(rows[i].mean_energy, again[i].mean_energy);
  }
}

TEST(BenchScaling, FlowBeatsExhaustionAtEightFeatures) {
  BenchOptions opt;
  opt.sizes = {8};
  opt.fixed_labels = 3;
  opt.label_counts = {};
  const auto rows = bench_scaling(opt);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_LT(rows[0].mean_seconds, rows[1].mean_seconds);
}

}  // namespace
}  // namespace efm
