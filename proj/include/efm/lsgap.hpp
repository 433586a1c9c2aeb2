#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "efm/gap.hpp"

namespace efm {

/// Sorted, duplicate-free label ids; the outlier label is never a member.
using LabelSubset = std::vector<int>;

struct Neighborhoods {
  std::vector<LabelSubset> add;
  std::vector<LabelSubset> del;
  std::vector<LabelSubset> swap;
};

inline Neighborhoods neighborhoods(std::span<const int> pool, const LabelSubset& current) {
  std::vector<int> outside;
  for (int h : pool)
    if (!std::binary_search(current.begin(), current.end(), h)) outside.push_back(h);
  for (int h : current)
    if (std::find(pool.begin(), pool.end(), h) == pool.end()) throw DataError("current label subset is not within the pool");

  Neighborhoods nb;
  for (int h : outside) {
    LabelSubset s = current;
    s.insert(std::upper_bound(s.begin(), s.end(), h), h);
    nb.add.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < current.size(); ++i) {
    LabelSubset s = current;
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(i));
    nb.del.push_back(s);
    for (int h : outside) {
      LabelSubset t = s;
      t.insert(std::upper_bound(t.begin(), t.end(), h), h);
      nb.swap.push_back(std::move(t));
    }
  }
  return nb;
}

inline int used_label_count(const JointMatching& m) {
  std::vector<int> used;
  for (const auto& t : m.triples)
    if (t.label != kOutlier) used.push_back(t.label);
  std::sort(used.begin(), used.end());
  return static_cast<int>(std::unique(used.begin(), used.end()) - used.begin());
}

/// Matching cost plus beta for every distinct model label the matching uses.
inline Ticks regularized_energy(const JointMatching& m, Ticks beta) {
  return m.objective + beta * used_label_count(m);
}

struct RegularizedSolution {
  LabelSubset subset;
  JointMatching matching;
  Ticks energy = 0;
  std::vector<Ticks> trace;  // energy of the start subset, then after each accepted move
  int evaluations = 0;       // distinct subsets handed to the inner solver
};

struct LsGapOptions {
  std::optional<LabelSubset> initial;    // default: empty
  std::optional<std::vector<int>> pool;  // default: every label of the instance
};

/// Greedy add / delete / swap search over label subsets, `solve(inst, labels)`
/// supplying the optimal matching for a fixed subset.
template <typename Solver>
RegularizedSolution ls_gap_with(const GapInstance& inst, Ticks beta, const LsGapOptions& opt, Solver&& solve) {
  if (!inst.include_outlier) throw DataError("LS-GAP needs the outlier label so that every subset is feasible");
  if (beta < 0) throw DataError("label cost must be nonnegative");
  std::vector<int> pool = opt.pool ? *opt.pool : inst.all_labels();
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  detail::require_labels_valid(inst, pool);

  std::map<LabelSubset, JointMatching> cache;
  RegularizedSolution out;
  auto evaluate = [&](const LabelSubset& s) -> const JointMatching& {
    auto it = cache.find(s);
    if (it == cache.end()) {
      it = cache.emplace(s, solve(inst, std::span<const int>(s))).first;
      ++out.evaluations;
    }
    return it->second;
  };

  LabelSubset current = opt.initial ? *opt.initial : LabelSubset{};
  std::sort(current.begin(), current.end());
  current.erase(std::unique(current.begin(), current.end()), current.end());
  Ticks energy = regularized_energy(evaluate(current), beta);
  out.trace.push_back(energy);

  bool improved = true;
  while (improved) {
    improved = false;
    const auto nb = neighborhoods(pool, current);
    for (const auto* family : {&nb.add, &nb.del, &nb.swap}) {
      for (const auto& candidate : *family) {
        const Ticks e = regularized_energy(evaluate(candidate), beta);
        if (e < energy) {
          current = candidate;
          energy = e;
          out.trace.push_back(e);
          improved = true;
          break;
        }
      }
      if (improved) break;
    }
  }
  out.subset = current;
  out.matching = evaluate(current);
  out.energy = energy;
  return out;
}

inline RegularizedSolution ls_gap(const GapInstance& inst, Ticks beta, const LsGapOptions& opt = {},
                                  const GapBuildOptions& build = {}) {
  return ls_gap_with(inst, beta, opt,
                     [&](const GapInstance& i, std::span<const int> labels) { return solve_gap(i, labels, build); });
}

}  // namespace efm
