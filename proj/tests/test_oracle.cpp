#include <gtest/gtest.h>

#include <random>

#include "efm/oracle.hpp"
#include "test_support.hpp"

namespace efm::oracle {
namespace {

TEST(BruteForce, TrivialInstance) {
  const auto inst = make_table_instance(1, 1, {{{0}}}, false, 0);
  const auto m = brute_force_gap(inst);
  EXPECT_EQ(m.triples, (std::vector<Triple>{{0, 0, 0}}));
  EXPECT_EQ(m.objective, 0);
}

TEST(BruteForce, PrefersLowestLabelOnTies) {
  const auto inst = make_table_instance(1, 1, {{{3}}, {{3}}}, true, 3);
  EXPECT_EQ(brute_force_gap(inst).triples, (std::vector<Triple>{{0, 0, 0}}));
}

TEST(BruteForce, RestrictedLabelSet) {
  const auto inst = make_table_instance(2, 2, {{{5, 9}, {9, 5}}, {{1, 9}, {9, 1}}}, true, 4);
  const std::vector<int> only_first{0};
  EXPECT_EQ(brute_force_gap(inst, only_first).objective, 8);
  EXPECT_EQ(brute_force_gap(inst).objective, 2);
  EXPECT_EQ(brute_force_gap(inst, std::vector<int>{}).objective, 8);
}

TEST(BruteForce, RejectsOversizedInstances) {
  const int n = kMaxBruteForceSize + 1;
  std::vector<std::vector<std::vector<Ticks>>> c{std::vector<std::vector<Ticks>>(n, std::vector<Ticks>(n, 1))};
  EXPECT_THROW(brute_force_gap(make_table_instance(n, n, c, false, 0)), DataError);
}

TEST(BruteForce, InfeasibleWithoutOutlier) {
  const auto inst = make_table_instance(2, 2, {{{1, kInfeasibleTicks}, {1, kInfeasibleTicks}}}, false, 0);
  EXPECT_THROW(brute_force_gap(inst), InfeasibleError);
}

TEST(CoefficientMatrix, SmallestCase) {
  EXPECT_EQ(coefficient_matrix(1, 1), (CoefficientMatrix{{1}, {1}}));
}

TEST(CoefficientMatrix, TwoByTwoSingleLabel) {
  EXPECT_EQ(coefficient_matrix(2, 1), (CoefficientMatrix{{1, 1, 0, 0}, {0, 0, 1, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}}));
}

TEST(CoefficientMatrix, LabelsRepeatTheBlock) {
  const auto a = coefficient_matrix(2, 2);
  ASSERT_EQ(a.cols, 8);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(a.at(r, c), a.at(r, c + 4));
  EXPECT_THROW(coefficient_matrix(0, 1), DataError);
}

TEST(Determinant, Examples) {
  EXPECT_EQ(determinant(CoefficientMatrix{{1, 1}, {1, 1}}), 0);
  EXPECT_EQ(determinant(CoefficientMatrix{{1, 0}, {0, 1}}), 1);
  EXPECT_EQ(determinant(CoefficientMatrix{{0, 1}, {1, 0}}), -1);
  EXPECT_EQ(determinant(CoefficientMatrix{{2, 1, 0}, {1, 3, 1}, {0, 1, 4}}), 18);
}

TEST(TotalUnimodularity, GapMatricesPassAtFullOrder) {
  for (int n = 1; n <= 3; ++n)
    for (int labels = 1; labels <= 2; ++labels) {
      const auto a = coefficient_matrix(n, labels);
      EXPECT_TRUE(check_total_unimodularity(a, a.rows)) << "n=" << n << " L=" << labels;
    }
}

TEST(TotalUnimodularity, DetectsViolations) {
  // Odd cycle incidence matrix has determinant 2.
  EXPECT_FALSE(check_total_unimodularity(CoefficientMatrix{{1, 1, 0}, {0, 1, 1}, {1, 0, 1}}, 3));
  EXPECT_TRUE(check_total_unimodularity(CoefficientMatrix{{1, 1, 0}, {0, 1, 1}, {1, 0, 1}}, 2));
  EXPECT_FALSE(check_total_unimodularity(CoefficientMatrix{{2}}, 1));
}

TEST(HellerTompkins, GapMatricesSatisfyAllConditions) {
  for (int n = 1; n <= 3; ++n) {
    const auto ht = heller_tompkins(coefficient_matrix(n, 2), n);
    EXPECT_TRUE(ht.entries_in_unit_set);
    EXPECT_TRUE(ht.two_nonzeros_per_column);
    EXPECT_TRUE(ht.row_partition_valid);
  }
  // A split that groups a left row with its right partners breaks condition III.
  EXPECT_FALSE(heller_tompkins(coefficient_matrix(2, 1), 4).row_partition_valid);
  EXPECT_FALSE(heller_tompkins(CoefficientMatrix{{1, 1}, {1, 0}, {0, 1}, {0, 1}}, 1).two_nonzeros_per_column);
}

}  // namespace
}  // namespace efm::oracle
