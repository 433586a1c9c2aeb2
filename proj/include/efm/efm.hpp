#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "efm/gap.hpp"
#include "efm/labeling.hpp"
#include "efm/lsgap.hpp"
#include "efm/sbr.hpp"

namespace efm {

enum class Step { kInit, kFit, kMatch };

struct TraceEntry {
  int iteration = 0;
  Step step = Step::kInit;
  Ticks energy = 0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

/// Matching, labeling (the triples' labels) and models over balanced feature sets.
struct JointState {
  FeatureSet left{Side::kLeft, {}};
  FeatureSet right{Side::kRight, {}};
  JointMatching matching;
  ProposalPool models;
  std::vector<TraceEntry> trace;
  int iterations = 0;

  [[nodiscard]] Labeling labeling() const { return labeling_of(matching); }
};

struct EfmParams {
  EnergyParams energy;
  double sbr_ratio = 0.7;
  int proposals = 200;
  int max_iter = 20;
  double tolerance = 1e-9;  // relative decrease that ends the loop
  SamplingOptions sampling;
  std::uint64_t seed = 1;
};

namespace detail {

inline Ticks data_cost(const JointState& s, const ScoreParams& score) {
  const int n = s.left.size();
  if (s.right.size() != n || s.matching.size() != n) throw DataError("state is not a balanced bijection");
  std::vector<char> left_seen(static_cast<std::size_t>(n), 0), right_seen(static_cast<std::size_t>(n), 0);
  Ticks total = 0;
  for (const auto& t : s.matching.triples) {
    if (t.p < 0 || t.p >= n || t.q < 0 || t.q >= n) throw DataError("matching id out of range");
    if (left_seen[t.p]++ || right_seen[t.q]++) throw DataError("matching violates one-to-one constraints");
    if (t.label == kOutlier) {
      total += score.outlier_ticks();
      continue;
    }
    if (t.label < 0 || t.label >= static_cast<int>(s.models.size())) throw DataError("label outside the model list");
    const auto c = pair_cost(s.models[t.label], s.left[t.p], s.right[t.q], score);
    if (!c) throw InfeasibleError("matching uses an infeasible triple");
    total += *c;
  }
  return total;
}

inline std::uint64_t iteration_seed(std::uint64_t seed, int iteration) {
  return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(iteration) * 0xBF58476D1CE4E5B9ull + 1;
}

// Relabels the state's matching with a fit result; the pairs are unchanged.
inline void apply_fit(JointState& s, const FitResult& fit) {
  for (auto& t : s.matching.triples) t.label = fit.labeling[t.p];
  s.models = fit.models;
}

// Keeps only models the matching uses, in order.
inline void drop_unused(JointState& s) {
  std::vector<int> remap(s.models.size(), kOutlier);
  ProposalPool kept;
  for (const auto& t : s.matching.triples)
    if (t.label != kOutlier && remap[t.label] == kOutlier) remap[t.label] = 0;
  for (std::size_t h = 0; h < s.models.size(); ++h)
    if (remap[h] == 0) {
      remap[h] = static_cast<int>(kept.size());
      kept.push_back(s.models[h]);
    }
  for (auto& t : s.matching.triples)
    if (t.label != kOutlier) t.label = remap[t.label];
  s.models = std::move(kept);
}

inline bool converged(Ticks before, Ticks after, double tolerance) {
  return static_cast<double>(before - after) <= tolerance * static_cast<double>(before);
}

inline std::vector<std::pair<int, int>> proposal_support(const JointState& s, const std::vector<std::pair<int, int>>& sbr) {
  auto pairs = labelled_pairs(s.left, s.right, s.matching);
  pairs.insert(pairs.end(), sbr.begin(), sbr.end());
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

// Refits `h` on the candidates it explains below T until that inlier set stops
// growing; nullopt when it never had 4 inliers.
inline std::optional<Homography> grow(Homography h, std::span<const PointPair> candidates, const ScoreParams& score,
                                      int max_rounds = 5) {
  bool ok = false;
  std::size_t last = 0;
  std::vector<PointPair> inliers;
  for (int round = 0; round < max_rounds; ++round) {
    inliers.clear();
    for (const auto& c : candidates) {
      try {
        if (score.ticks(symmetric_transfer_error(h, c.left, c.right)) < score.outlier_ticks()) inliers.push_back(c);
      } catch (const DegenerateError&) {
      }
    }
    if (inliers.size() < 4 || inliers.size() <= last) break;
    last = inliers.size();
    try {
      h = fit_homography(inliers);
      ok = true;
    } catch (const Error&) {
      break;
    }
  }
  if (!ok) return std::nullopt;
  return h;
}

inline std::vector<PointPair> point_pairs(const FeatureSet& left, const FeatureSet& right,
                                          std::span<const std::pair<int, int>> pairs) {
  std::vector<PointPair> out;
  for (const auto& [p, q] : pairs)
    if (!left[p].dummy && !right[q].dummy) out.push_back({left[p].pos, right[q].pos});
  return out;
}

// Re-pairs the outlier-labelled features among themselves so SBR pairs come
// first and the rest follow in id order. Every outlier pair costs T, so the
// energy is unchanged.
inline void reseat_outliers(JointState& s, const std::vector<std::pair<int, int>>& sbr) {
  const int n = s.left.size();
  std::vector<char> lfree(static_cast<std::size_t>(n), 0), rfree(static_cast<std::size_t>(n), 0);
  std::vector<Triple> kept;
  for (const auto& t : s.matching.triples) {
    if (t.label == kOutlier)
      lfree[t.p] = rfree[t.q] = 1;
    else
      kept.push_back(t);
  }
  for (const auto& [p, q] : sbr)
    if (lfree[p] && rfree[q]) {
      kept.push_back({p, q, kOutlier});
      lfree[p] = rfree[q] = 0;
    }
  int q = 0;
  for (int p = 0; p < n; ++p) {
    if (!lfree[p]) continue;
    while (!rfree[q]) ++q;
    kept.push_back({p, q++, kOutlier});
  }
  std::sort(kept.begin(), kept.end());
  s.matching.triples = std::move(kept);
}

// Current models, their grown versions on the matching, then fresh proposals
// grown on the sampling support.
inline ProposalPool iteration_pool(const JointState& s, const std::vector<std::pair<int, int>>& support,
                                   const EfmParams& params, int iteration) {
  const ScoreParams& score = params.energy.score;
  ProposalPool pool = s.models;
  std::vector<std::pair<int, int>> matched;
  for (const auto& t : s.matching.triples) matched.emplace_back(t.p, t.q);
  const auto matched_points = point_pairs(s.left, s.right, matched);
  for (const auto& h : s.models)
    if (auto g = grow(h, matched_points, score)) pool.push_back(*g);
  const auto support_points = point_pairs(s.left, s.right, support);
  for (const auto& h : sample_proposals(s.left, s.right, support, params.proposals, iteration_seed(params.seed, iteration),
                                        params.sampling))
    pool.push_back(grow(h, support_points, score).value_or(h));
  return pool;
}

}  // namespace detail

/// Data cost plus beta per model label in use; throws on a broken matching.
inline Ticks energy_e1(const JointState& s, const EnergyParams& params) {
  return detail::data_cost(s, params.score) + params.beta * used_label_count(s.matching);
}

inline Ticks energy_e2(const JointState& s, const EnergyParams& params, const EdgeList& nbrs) {
  return energy_e1(s, params) + smoothness_penalty(s.labeling(), nbrs, params.lambda);
}

/// SBR pairs plus the leftover features paired in id order, everything on the outlier label.
inline JointState initial_state(const FeatureSet& left, const FeatureSet& right, const SbrMatches& sbr,
                                const EnergyParams& params) {
  JointState s;
  std::tie(s.left, s.right) = balance_with_dummies(left, right, params.score);
  const int n = s.left.size();
  std::vector<char> lused(static_cast<std::size_t>(n), 0), rused(static_cast<std::size_t>(n), 0);
  for (const auto& [p, q] : sbr.pairs) {
    s.matching.triples.push_back({p, q, kOutlier});
    lused[p] = rused[q] = 1;
  }
  int q = 0;
  for (int p = 0; p < n; ++p) {
    if (lused[p]) continue;
    while (rused[q]) ++q;
    s.matching.triples.push_back({p, q++, kOutlier});
  }
  std::sort(s.matching.triples.begin(), s.matching.triples.end());
  s.matching.objective = detail::data_cost(s, params.score);
  s.trace.push_back({0, Step::kInit, energy_e1(s, params)});
  return s;
}

/// Multi-model fitting on the fixed SBR matching.
inline JointState run_ef(const FeatureSet& left, const FeatureSet& right, const EfmParams& params) {
  params.energy.validate();
  const auto sbr = sbr_match(left, right, params.sbr_ratio);
  JointState s = initial_state(left, right, sbr, params.energy);
  Ticks energy = s.trace.back().energy;
  for (int it = 1; it <= params.max_iter; ++it) {
    s.iterations = it;
    const auto support = detail::proposal_support(s, sbr.pairs);
    if (support.size() < 4) break;
    const ProposalPool pool = detail::iteration_pool(s, support, params, it);
    const auto fit = fit_step_e1(s.left, s.right, s.matching, pool, params.energy);
    detail::apply_fit(s, fit);
    s.matching.objective = detail::data_cost(s, params.energy.score);
    const Ticks next = energy_e1(s, params.energy);
    s.trace.push_back({it, Step::kFit, next});
    const bool done = detail::converged(energy, next, params.tolerance);
    energy = next;
    if (done) break;
  }
  return s;
}

/// Alternates the label/model fit with the LS-GAP matching step.
inline JointState run_efm1(const FeatureSet& left, const FeatureSet& right, const EfmParams& params) {
  params.energy.validate();
  const auto sbr = sbr_match(left, right, params.sbr_ratio);
  JointState s = initial_state(left, right, sbr, params.energy);
  const GapInstance base = make_gap_instance(s.left, s.right, {}, params.energy.score, true);
  Ticks energy = s.trace.back().energy;
  for (int it = 1; it <= params.max_iter; ++it) {
    s.iterations = it;
    const auto support = detail::proposal_support(s, sbr.pairs);
    if (support.size() < 4) break;
    const ProposalPool pool = detail::iteration_pool(s, support, params, it);

    const auto fit = fit_step_e1(s.left, s.right, s.matching, pool, params.energy);
    detail::apply_fit(s, fit);
    s.matching.objective = detail::data_cost(s, params.energy.score);
    s.trace.push_back({it, Step::kFit, energy_e1(s, params.energy)});

    const GapInstance inst = with_models(base, s.models);
    LabelSubset all(s.models.size());
    std::iota(all.begin(), all.end(), 0);
    const auto ls = ls_gap(inst, params.energy.beta, {.initial = all, .pool = std::nullopt});
    s.matching = ls.matching;
    detail::drop_unused(s);
    detail::reseat_outliers(s, sbr.pairs);
    const Ticks next = energy_e1(s, params.energy);
    if (next != ls.energy) throw std::logic_error("matching step energy disagrees with its evaluation");
    s.trace.push_back({it, Step::kMatch, next});

    const bool done = detail::converged(energy, next, params.tolerance);
    energy = next;
    if (done) break;
  }
  return s;
}

/// Smoothness-aware refinement: fit labels under E2, then re-match with every
/// feature pinned to its label.
inline JointState run_efm2(JointState s, const EfmParams& params, const EdgeList& nbrs, int iters = 1) {
  params.energy.validate();
  if (iters < 1) throw DataError("EFM2 needs at least one iteration");
  const GapInstance base = make_gap_instance(s.left, s.right, {}, params.energy.score, true);
  const int offset = s.iterations;
  s.trace.push_back({offset, Step::kInit, energy_e2(s, params.energy, nbrs)});
  for (int it = 1; it <= iters; ++it) {
    const auto fit = fit_step_e2(s.left, s.right, s.matching, s.models, params.energy, nbrs);
    detail::apply_fit(s, fit);
    s.matching.objective = detail::data_cost(s, params.energy.score);
    s.trace.push_back({offset + it, Step::kFit, energy_e2(s, params.energy, nbrs)});

    const GapInstance inst = with_models(base, s.models);
    const JointMatching next = solve_lc_gap(inst, s.labeling());
    if (next.objective < s.matching.objective) s.matching = next;
    s.trace.push_back({offset + it, Step::kMatch, energy_e2(s, params.energy, nbrs)});
    s.iterations = offset + it;
  }
  return s;
}

}  // namespace efm
