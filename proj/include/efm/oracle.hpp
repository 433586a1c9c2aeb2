#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "efm/gap.hpp"

namespace efm::oracle {

/// Largest balanced size brute_force_gap accepts (n! permutations).
inline constexpr int kMaxBruteForceSize = 8;

/// Exhaustive GAP: every permutation, and for each matched pair every label.
/// The label choice is separable per pair, so the |L|^n product is scanned as
/// n independent minima; the result is the lexicographically first optimum
/// (permutations in lexicographic order, then lowest label index, outlier last).
inline JointMatching brute_force_gap(const GapInstance& inst, std::span<const int> labels) {
  const int n = inst.n();
  if (n > kMaxBruteForceSize) throw DataError("instance too large for exhaustive search");
  std::vector<int> slots(labels.begin(), labels.end());
  if (inst.include_outlier) slots.push_back(kOutlier);

  std::vector<Ticks> best_cost(static_cast<std::size_t>(n * n), kInfeasibleTicks);
  std::vector<int> best_label(static_cast<std::size_t>(n * n), kOutlier);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      for (int h : slots) {
        const bool dummy = inst.left[p].dummy || inst.right[q].dummy;
        if (dummy && h != kOutlier) continue;
        const auto c = inst.cost(p, q, h);
        if (c && *c < best_cost[p * n + q]) {
          best_cost[p * n + q] = *c;
          best_label[p * n + q] = h;
        }
      }

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Ticks best = kInfeasibleTicks;
  std::vector<int> best_perm;
  do {
    Ticks total = 0;
    bool feasible = true;
    for (int p = 0; p < n && feasible; ++p) {
      const Ticks c = best_cost[p * n + perm[p]];
      if (c >= kInfeasibleTicks) feasible = false;
      total += c;
    }
    if (feasible && total < best) {
      best = total;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (best_perm.empty()) throw InfeasibleError("GAP instance has no feasible assignment");

  JointMatching m;
  m.objective = best;
  for (int p = 0; p < n; ++p) m.triples.push_back({p, best_perm[p], best_label[p * n + best_perm[p]]});
  return m;
}

inline JointMatching brute_force_gap(const GapInstance& inst) {
  const auto labels = inst.all_labels();
  return brute_force_gap(inst, labels);
}

/// Dense integer matrix, row-major.
struct CoefficientMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> data;

  CoefficientMatrix() = default;
  CoefficientMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r * c), 0) {}
  CoefficientMatrix(std::initializer_list<std::initializer_list<int>> init) {
    rows = static_cast<int>(init.size());
    cols = rows ? static_cast<int>(init.begin()->size()) : 0;
    for (const auto& row : init) data.insert(data.end(), row.begin(), row.end());
  }
  int& at(int r, int c) { return data[static_cast<std::size_t>(r * cols + c)]; }
  [[nodiscard]] int at(int r, int c) const { return data[static_cast<std::size_t>(r * cols + c)]; }
  friend bool operator==(const CoefficientMatrix&, const CoefficientMatrix&) = default;
};

/// Equality-constraint matrix of GAP with n features per side and L labels.
/// Column h*n^2 + p*n + q is x_pqh. Rows 0..n-1 hold one block of ones per
/// left feature p (sum over q); rows n..2n-1 hold the identity blocks, one
/// row per right feature q (sum over p). Labels repeat the block horizontally.
inline CoefficientMatrix coefficient_matrix(int n, int labels) {
  if (n < 1 || labels < 1) throw DataError("coefficient_matrix needs n >= 1 and L >= 1");
  CoefficientMatrix a(2 * n, labels * n * n);
  for (int h = 0; h < labels; ++h)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) {
        const int col = h * n * n + p * n + q;
        a.at(p, col) = 1;
        a.at(n + q, col) = 1;
      }
  return a;
}

namespace detail {

// Fraction-free Gaussian elimination; exact for small integer matrices.
inline std::int64_t bareiss_determinant(std::vector<std::int64_t> m, int k) {
  std::int64_t sign = 1, prev = 1;
  for (int i = 0; i < k; ++i) {
    if (m[i * k + i] == 0) {
      int swap = -1;
      for (int r = i + 1; r < k; ++r)
        if (m[r * k + i] != 0) {
          swap = r;
          break;
        }
      if (swap < 0) return 0;
      for (int c = 0; c < k; ++c) std::swap(m[i * k + c], m[swap * k + c]);
      sign = -sign;
    }
    for (int r = i + 1; r < k; ++r)
      for (int c = i + 1; c < k; ++c) m[r * k + c] = (m[r * k + c] * m[i * k + i] - m[r * k + i] * m[i * k + c]) / prev;
    prev = m[i * k + i];
  }
  return sign * m[(k - 1) * k + (k - 1)];
}

template <typename Visit>
bool for_each_combination(int n, int k, Visit&& visit) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    if (!visit(idx)) return false;
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return true;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

inline std::int64_t determinant(const CoefficientMatrix& a) {
  if (a.rows != a.cols) throw DataError("determinant of a non-square matrix");
  return detail::bareiss_determinant({a.data.begin(), a.data.end()}, a.rows);
}

inline constexpr int kMaxUnimodularityRows = 6;

/// True iff every k x k minor with k <= max_order has determinant in {-1, 0, 1}.
inline bool check_total_unimodularity(const CoefficientMatrix& a, int max_order) {
  if (a.rows > kMaxUnimodularityRows) throw DataError("matrix too large for exhaustive minor enumeration");
  max_order = std::min({max_order, a.rows, a.cols});
  std::vector<std::int64_t> sub;
  for (int k = 1; k <= max_order; ++k) {
    const bool ok = detail::for_each_combination(a.rows, k, [&](const std::vector<int>& rows) {
      return detail::for_each_combination(a.cols, k, [&](const std::vector<int>& cols) {
        sub.assign(static_cast<std::size_t>(k * k), 0);
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) sub[i * k + j] = a.at(rows[i], cols[j]);
        const std::int64_t d = detail::bareiss_determinant(sub, k);
        return d >= -1 && d <= 1;
      });
    });
    if (!ok) return false;
  }
  return true;
}

struct HellerTompkins {
  bool entries_in_unit_set = false;   // I: every entry in {-1, 0, 1}
  bool two_nonzeros_per_column = false;  // II: exactly two nonzeros per column
  bool row_partition_valid = false;   // III: under the given partition
};

/// Checks the three sufficient conditions with rows [0, split) vs [split, rows).
inline HellerTompkins heller_tompkins(const CoefficientMatrix& a, int split) {
  HellerTompkins out{true, true, true};
  for (int v : a.data)
    if (v < -1 || v > 1) out.entries_in_unit_set = false;
  for (int c = 0; c < a.cols; ++c) {
    std::vector<int> nz;
    for (int r = 0; r < a.rows; ++r)
      if (a.at(r, c) != 0) nz.push_back(r);
    if (nz.size() != 2) {
      out.two_nonzeros_per_column = false;
      continue;
    }
    const bool same_sign = a.at(nz[0], c) == a.at(nz[1], c);
    const bool same_set = (nz[0] < split) == (nz[1] < split);
    if (same_sign == same_set) out.row_partition_valid = false;
  }
  return out;
}

}  // namespace efm::oracle
