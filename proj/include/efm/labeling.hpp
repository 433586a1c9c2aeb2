#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "efm/flow.hpp"
#include "efm/gap.hpp"
#include "efm/neighbor_graph.hpp"

namespace efm {

/// Candidate models; a label is an index into the pool.
using ProposalPool = std::vector<Homography>;

struct EnergyParams {
  Ticks beta = 0;    // per distinct model label used
  Ticks lambda = 0;  // per neighbor edge whose endpoints disagree
  ScoreParams score;

  void validate() const {
    if (beta < 0 || lambda < 0) throw DataError("label cost and smoothness weight must be nonnegative");
    score.validate();
  }
};

enum class Sampling {
  kUniform,    // 4 pairs drawn uniformly
  kLocalized,  // 1 pair uniformly, 3 more among its k nearest pairs in the left image
};

struct SamplingOptions {
  Sampling mode = Sampling::kLocalized;
  int min_neighbors = 6;  // k is drawn log-uniformly between this and all pairs
  int attempts_per_proposal = 50;
};

/// DLT homographies from minimal samples of `pairs` (left id, right id).
inline ProposalPool sample_proposals(const FeatureSet& left, const FeatureSet& right,
                                     std::span<const std::pair<int, int>> pairs, int count, std::uint64_t seed,
                                     const SamplingOptions& opt = {}) {
  if (count <= 0) throw DataError("proposal count must be positive");
  const int n = static_cast<int>(pairs.size());
  if (n < 4) throw DataError("need at least 4 matched pairs to sample homographies");

  std::vector<std::vector<int>> near;
  if (opt.mode == Sampling::kLocalized) {
    near.resize(static_cast<std::size_t>(n));
    std::vector<std::pair<double, int>> d;
    for (int i = 0; i < n; ++i) {
      const Point2 a = left[pairs[i].first].pos;
      d.clear();
      for (int j = 0; j < n; ++j)
        if (j != i) d.emplace_back(distance(a, left[pairs[j].first].pos), j);
      std::sort(d.begin(), d.end());
      for (const auto& [dist, j] : d) near[i].push_back(j);
    }
  }
  const double k_lo = std::log(static_cast<double>(std::clamp(opt.min_neighbors, 3, n - 1)));
  const double k_hi = std::log(static_cast<double>(n - 1));

  std::mt19937_64 rng(seed);
  ProposalPool pool;
  long long attempts = static_cast<long long>(count) * opt.attempts_per_proposal;
  std::array<int, 4> pick{};
  std::array<PointPair, 4> sample;
  std::vector<int> cand;
  while (static_cast<int>(pool.size()) < count) {
    if (attempts-- <= 0) throw DegenerateError("proposal sampling exhausted its retry budget");
    const int first = std::uniform_int_distribution<int>(0, n - 1)(rng);
    pick[0] = first;
    if (opt.mode == Sampling::kLocalized) {
      const double lk = std::uniform_real_distribution<double>(k_lo, k_hi)(rng);
      const int k = std::clamp(static_cast<int>(std::lround(std::exp(lk))), 3, n - 1);
      cand.assign(near[first].begin(), near[first].begin() + k);
      for (int i = 0; i < 3; ++i) {
        const int j = std::uniform_int_distribution<int>(i, k - 1)(rng);
        std::swap(cand[i], cand[j]);
        pick[i + 1] = cand[i];
      }
    } else {
      for (int i = 1; i < 4; ++i) {
        int c;
        do c = std::uniform_int_distribution<int>(0, n - 1)(rng);
        while (std::find(pick.begin(), pick.begin() + i, c) != pick.begin() + i);
        pick[i] = c;
      }
    }
    for (int i = 0; i < 4; ++i) sample[i] = {left[pairs[pick[i]].first].pos, right[pairs[pick[i]].second].pos};
    try {
      pool.push_back(fit_homography(sample));
    } catch (const Error&) {
    }
  }
  return pool;
}

/// Pairs of `m` that carry a model label between two real features.
inline std::vector<std::pair<int, int>> labelled_pairs(const FeatureSet& left, const FeatureSet& right, const JointMatching& m) {
  std::vector<std::pair<int, int>> out;
  for (const auto& t : m.triples)
    if (t.label != kOutlier && !left[t.p].dummy && !right[t.q].dummy) out.emplace_back(t.p, t.q);
  return out;
}

inline ProposalPool sample_proposals(const FeatureSet& left, const FeatureSet& right, const JointMatching& m, int count,
                                     std::uint64_t seed, const SamplingOptions& opt = {}) {
  const auto pairs = labelled_pairs(left, right, m);
  return sample_proposals(left, right, pairs, count, seed, opt);
}

/// D_p(theta_h) through p's partner in a fixed matching, for every pool label.
struct UnaryTable {
  int n = 0;
  int labels = 0;
  Ticks outlier = 0;
  std::vector<int> partner;
  std::vector<Ticks> cost;  // n x labels, kInfeasibleTicks where undefined

  [[nodiscard]] Ticks at(int p, int h) const {
    if (h == kOutlier) return outlier;
    return cost[static_cast<std::size_t>(p) * labels + h];
  }
};

namespace detail {

inline std::vector<int> partners_of(const JointMatching& m, int n) {
  std::vector<int> partner(static_cast<std::size_t>(n), -1);
  for (const auto& t : m.triples) {
    if (t.p < 0 || t.p >= n) throw DataError("matching refers to an unknown left feature");
    partner[t.p] = t.q;
  }
  for (int q : partner)
    if (q < 0) throw DataError("matching does not cover every left feature");
  return partner;
}

inline void fill_unary_column(UnaryTable& u, const FeatureSet& left, const FeatureSet& right, const Homography& h, int label,
                              const ScoreParams& score) {
  for (int p = 0; p < u.n; ++p) {
    const auto c = pair_cost(h, left[p], right[u.partner[p]], score);
    u.cost[static_cast<std::size_t>(p) * u.labels + label] = c ? *c : kInfeasibleTicks;
  }
}

}  // namespace detail

inline UnaryTable unary_table(const FeatureSet& left, const FeatureSet& right, const JointMatching& m,
                              const ProposalPool& pool, const ScoreParams& score) {
  UnaryTable u;
  u.n = left.size();
  u.labels = static_cast<int>(pool.size());
  u.outlier = score.outlier_ticks();
  u.partner = detail::partners_of(m, u.n);
  u.cost.assign(static_cast<std::size_t>(u.n) * u.labels, kInfeasibleTicks);
  for (int h = 0; h < u.labels; ++h) detail::fill_unary_column(u, left, right, pool[h], h, score);
  return u;
}

inline int used_label_count(const Labeling& f) {
  std::vector<int> used;
  for (int h : f.assignment)
    if (h != kOutlier) used.push_back(h);
  std::sort(used.begin(), used.end());
  return static_cast<int>(std::unique(used.begin(), used.end()) - used.begin());
}

/// Data term plus label cost; kInfeasibleTicks if some feature carries an undefined label.
inline Ticks labeling_energy(const UnaryTable& u, const Labeling& f, Ticks beta) {
  Ticks total = 0;
  for (int p = 0; p < u.n; ++p) {
    const Ticks c = u.at(p, f[p]);
    if (c >= kInfeasibleTicks) return kInfeasibleTicks;
    total += c;
  }
  return total + beta * used_label_count(f);
}

inline Ticks smoothness_penalty(const Labeling& f, const EdgeList& nbrs, Ticks lambda) {
  Ticks total = 0;
  for (const auto& [i, j] : nbrs) total += f[i] != f[j] ? lambda : 0;
  return total;
}

inline Ticks labeling_energy(const UnaryTable& u, const Labeling& f, const EdgeList& nbrs, const EnergyParams& params) {
  const Ticks e = labeling_energy(u, f, params.beta);
  if (e >= kInfeasibleTicks) return e;
  return e + smoothness_penalty(f, nbrs, params.lambda);
}

/// Delaunay edges between real left features, as left ids.
inline EdgeList left_neighbors(const FeatureSet& left) {
  std::vector<int> ids;
  std::vector<Point2> pts;
  for (const auto& f : left.features)
    if (!f.dummy) {
      ids.push_back(f.id);
      pts.push_back(f.pos);
    }
  if (pts.size() < 2) return {};
  EdgeList out;
  for (const auto& [a, b] : neighbor_graph(pts)) out.emplace_back(std::min(ids[a], ids[b]), std::max(ids[a], ids[b]));
  std::sort(out.begin(), out.end());
  return out;
}

struct FitResult {
  Labeling labeling;       // indices into models, or kOutlier
  ProposalPool models;     // labels in use, in pool order
  Ticks energy = 0;
  std::vector<Ticks> trace;  // start, then after every label step and every refit
};

namespace detail {

// Ordering key: cost first, then outlier before models, then lower index.
struct Key {
  Ticks cost;
  int label;
  friend bool operator<(const Key& a, const Key& b) { return a.cost != b.cost ? a.cost < b.cost : a.label < b.label; }
};

// Label selection for a fixed unary table: each feature takes its best label
// among the open set plus the outlier, an open label costs beta if used.
class FacilitySearch {
 public:
  FacilitySearch(const UnaryTable& u, Ticks beta) : u_(u), beta_(beta), in_(u.labels, 0), out_(u.labels, 0) {}

  void assign(const std::vector<int>& open) {
    open_ = open;
    best_.assign(static_cast<std::size_t>(u_.n), {u_.outlier, kOutlier});
    second_.assign(static_cast<std::size_t>(u_.n), {kInfeasibleTicks, kOutlier});
    support_.assign(static_cast<std::size_t>(u_.labels), 0);
    total_ = 0;
    for (int p = 0; p < u_.n; ++p) {
      for (int h : open_) {
        const Key k{u_.at(p, h), h};
        if (k < best_[p]) {
          second_[p] = best_[p];
          best_[p] = k;
        } else if (k < second_[p]) {
          second_[p] = k;
        }
      }
      total_ += best_[p].cost;
      if (best_[p].label != kOutlier) ++support_[best_[p].label];
    }
    used_ = 0;
    for (int h : open_) used_ += support_[h] > 0;
  }

  // Keeps only labels that attract at least one feature.
  void close_unused() {
    std::vector<int> kept;
    for (int h : open_)
      if (support_[h] > 0) kept.push_back(h);
    if (kept.size() != open_.size()) assign(kept);
  }

  [[nodiscard]] Ticks energy() const { return total_ + beta_ * used_; }

  // Energy after closing `drop` and opening `add` (either may be -1).
  Ticks evaluate(int drop, int add) {
    Ticks delta = 0;
    touched_.clear();
    for (int p = 0; p < u_.n; ++p) {
      const Key& cur = best_[p];
      Key next = cur.label == drop && drop >= 0 ? second_[p] : cur;
      if (add >= 0) {
        const Key k{u_.at(p, add), add};
        if (k < next) next = k;
      }
      if (next.label == cur.label) continue;
      delta += next.cost - cur.cost;
      if (cur.label != kOutlier) bump(out_, cur.label);
      if (next.label != kOutlier) bump(in_, next.label);
    }
    int used = used_;
    for (int h : touched_) {
      const int after = support_[h] - out_[h] + in_[h];
      used += (after > 0) - (support_[h] > 0);
      in_[h] = out_[h] = 0;
    }
    return total_ + delta + beta_ * used;
  }

  // Steepest descent over add, delete and swap moves.
  void descend(std::vector<Ticks>* trace) {
    close_unused();
    while (true) {
      const Ticks current = energy();
      Ticks best = current;
      int best_drop = -1, best_add = -1;
      std::vector<int> closed;
      for (int h = 0; h < u_.labels; ++h)
        if (!std::binary_search(open_.begin(), open_.end(), h)) closed.push_back(h);
      auto consider = [&](int drop, int add) {
        const Ticks e = evaluate(drop, add);
        if (e < best) {
          best = e;
          best_drop = drop;
          best_add = add;
        }
      };
      for (int h : closed) consider(-1, h);
      for (int g : open_) consider(g, -1);
      for (int g : open_)
        for (int h : closed) consider(g, h);
      if (best_drop < 0 && best_add < 0) return;
      std::vector<int> next;
      for (int g : open_)
        if (g != best_drop) next.push_back(g);
      if (best_add >= 0) next.insert(std::upper_bound(next.begin(), next.end(), best_add), best_add);
      assign(next);
      close_unused();
      if (energy() >= current) throw std::logic_error("facility search move did not reduce the energy");
      if (trace) trace->push_back(energy());
    }
  }

  [[nodiscard]] Labeling labeling() const {
    Labeling f;
    f.assignment.resize(static_cast<std::size_t>(u_.n));
    for (int p = 0; p < u_.n; ++p) f[p] = best_[p].label;
    return f;
  }

  [[nodiscard]] const std::vector<int>& open() const { return open_; }

 private:
  void bump(std::vector<int>& counter, int h) {
    if (in_[h] == 0 && out_[h] == 0) touched_.push_back(h);
    ++counter[h];
  }

  const UnaryTable& u_;
  Ticks beta_;
  std::vector<int> open_;
  std::vector<Key> best_, second_;
  std::vector<int> support_;
  std::vector<int> in_, out_, touched_;
  Ticks total_ = 0;
  int used_ = 0;
};

inline std::vector<int> labels_in(const Labeling& f, int label_count) {
  std::vector<int> out;
  for (int h : f.assignment) {
    if (h == kOutlier) continue;
    if (h < 0 || h >= label_count) throw DataError("labeling refers to a label outside the pool");
    out.push_back(h);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Refits every used label on its support; a new model is kept only when the
// support's data cost strictly drops. Returns whether anything changed.
inline bool guarded_refit(UnaryTable& u, ProposalPool& pool, const Labeling& f, const FeatureSet& left,
                          const FeatureSet& right, const ScoreParams& score) {
  bool changed = false;
  for (int h : labels_in(f, u.labels)) {
    std::vector<int> support;
    for (int p = 0; p < u.n; ++p)
      if (f[p] == h) support.push_back(p);
    if (support.size() < 4) continue;
    std::vector<PointPair> pairs;
    Ticks before = 0;
    for (int p : support) {
      pairs.push_back({left[p].pos, right[u.partner[p]].pos});
      before += u.at(p, h);
    }
    Homography refit;
    try {
      refit = fit_homography(pairs);
    } catch (const Error&) {
      continue;
    }
    Ticks after = 0;
    bool feasible = true;
    for (int p : support) {
      const auto c = pair_cost(refit, left[p], right[u.partner[p]], score);
      if (!c) {
        feasible = false;
        break;
      }
      after += *c;
    }
    if (!feasible || after >= before) continue;
    pool[h] = refit;
    fill_unary_column(u, left, right, refit, h, score);
    changed = true;
  }
  return changed;
}

inline FitResult compact(const Labeling& f, const ProposalPool& pool, Ticks energy, std::vector<Ticks> trace) {
  FitResult out;
  const auto used = labels_in(f, static_cast<int>(pool.size()));
  std::vector<int> remap(pool.size(), kOutlier);
  for (std::size_t i = 0; i < used.size(); ++i) {
    remap[used[i]] = static_cast<int>(i);
    out.models.push_back(pool[used[i]]);
  }
  out.labeling = f;
  for (auto& h : out.labeling.assignment)
    if (h != kOutlier) h = remap[h];
  out.energy = energy;
  out.trace = std::move(trace);
  return out;
}

}  // namespace detail

/// Labels and models for a fixed matching under data cost plus label cost.
/// Labels of `m` index `pool` and seed the open label set.
inline FitResult fit_step_e1(const FeatureSet& left, const FeatureSet& right, const JointMatching& m, ProposalPool pool,
                             const EnergyParams& params) {
  params.validate();
  UnaryTable u = unary_table(left, right, m, pool, params.score);
  const Labeling start = labeling_of(m);
  std::vector<int> open = detail::labels_in(start, u.labels);

  std::vector<Ticks> trace;
  Ticks start_energy = labeling_energy(u, start, params.beta);
  if (start_energy < kInfeasibleTicks) trace.push_back(start_energy);

  detail::FacilitySearch search(u, params.beta);
  search.assign(open);
  Ticks energy = search.energy();
  if (trace.empty() || energy < trace.back()) trace.push_back(energy);
  while (true) {
    const Ticks before = energy;
    search.descend(&trace);
    Labeling f = search.labeling();
    if (detail::guarded_refit(u, pool, f, left, right, params.score)) {
      search.assign(search.open());
      trace.push_back(search.energy());
    }
    energy = search.energy();
    if (energy >= before) break;
  }
  return detail::compact(search.labeling(), pool, energy, std::move(trace));
}

/// Binary labeling problem with submodular pairwise terms: x_i = 1 means switch.
struct BinaryProblem {
  struct Pairwise {
    int i = 0;
    int j = 0;
    Ticks e00 = 0, e01 = 0, e10 = 0, e11 = 0;
  };
  std::vector<std::array<Ticks, 2>> unary;
  std::vector<Pairwise> pairwise;
};

struct BinarySolution {
  std::vector<int> x;
  Ticks energy = 0;
};

inline Ticks binary_energy(const BinaryProblem& b, std::span<const int> x) {
  Ticks total = 0;
  for (std::size_t i = 0; i < b.unary.size(); ++i) {
    const Ticks c = b.unary[i][x[i]];
    if (c >= kInfeasibleTicks) return kInfeasibleTicks;
    total += c;
  }
  for (const auto& e : b.pairwise) {
    const int a = x[e.i], c = x[e.j];
    total += a ? (c ? e.e11 : e.e10) : (c ? e.e01 : e.e00);
  }
  return total;
}

/// Exact minimizer by one s-t min cut (sink side = 1).
inline BinarySolution solve_binary(const BinaryProblem& b) {
  const int n = static_cast<int>(b.unary.size());
  Ticks finite_sum = 1;
  for (const auto& u : b.unary)
    for (Ticks c : u) {
      if (c < 0) throw DataError("binary unary terms must be nonnegative");
      if (c < kInfeasibleTicks) finite_sum += c;
    }
  for (const auto& e : b.pairwise) {
    if (e.e00 + e.e11 > e.e01 + e.e10) throw DataError("pairwise term is not submodular");
    finite_sum += std::abs(e.e00) + std::abs(e.e01) + std::abs(e.e10) + std::abs(e.e11);
  }
  const Ticks big = finite_sum;

  std::vector<std::array<Ticks, 2>> unary(b.unary.size());
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) unary[i][k] = std::min(b.unary[i][k], big);
  flow::FlowNetwork net;
  net.source = net.add_node();
  net.sink = net.add_node();
  for (int i = 0; i < n; ++i) net.add_node();
  Ticks constant = 0;
  for (const auto& e : b.pairwise) {
    // E = e00 + (e10 - e00) x_i + (e11 - e10) x_j + (e01 + e10 - e00 - e11) (1 - x_i) x_j
    constant += e.e00;
    unary[e.i][1] += e.e10 - e.e00;
    unary[e.j][1] += e.e11 - e.e10;
    const Ticks w = e.e01 + e.e10 - e.e00 - e.e11;
    if (w > 0) net.add_arc(2 + e.i, 2 + e.j, w);
  }
  for (int i = 0; i < n; ++i) {
    const Ticks low = std::min(unary[i][0], unary[i][1]);
    constant += low;
    if (unary[i][1] > low) net.add_arc(net.source, 2 + i, unary[i][1] - low);
    if (unary[i][0] > low) net.add_arc(2 + i, net.sink, unary[i][0] - low);
  }
  const auto cut = flow::min_cut(net);
  BinarySolution out;
  out.x.assign(static_cast<std::size_t>(n), 1);
  for (int v : cut.source_side)
    if (v >= 2) out.x[v - 2] = 0;
  out.energy = binary_energy(b, out.x);
  if (out.energy < kInfeasibleTicks && out.energy != cut.value + constant)
    throw std::logic_error("min cut value disagrees with the binary energy");
  return out;
}

/// Labels and models for a fixed matching under data cost, label cost and Potts
/// smoothness over `nbrs`. Without smoothness this is fit_step_e1.
inline FitResult fit_step_e2(const FeatureSet& left, const FeatureSet& right, const JointMatching& m, ProposalPool pool,
                             const EnergyParams& params, const EdgeList& nbrs) {
  if (params.lambda == 0) return fit_step_e1(left, right, m, std::move(pool), params);
  params.validate();
  UnaryTable u = unary_table(left, right, m, pool, params.score);
  Labeling f = labeling_of(m);
  detail::labels_in(f, u.labels);
  Ticks energy = labeling_energy(u, f, nbrs, params);
  if (energy >= kInfeasibleTicks) throw InfeasibleError("starting labeling uses an undefined label");
  std::vector<Ticks> trace{energy};

  std::vector<int> candidates(static_cast<std::size_t>(u.labels));
  std::iota(candidates.begin(), candidates.end(), 0);
  candidates.push_back(kOutlier);
  while (true) {
    const Ticks before = energy;
    bool accepted = true;
    while (accepted) {
      accepted = false;
      for (int alpha : candidates) {
        BinaryProblem b;
        b.unary.resize(static_cast<std::size_t>(u.n));
        for (int p = 0; p < u.n; ++p) {
          const Ticks keep = u.at(p, f[p]);
          b.unary[p] = {keep, f[p] == alpha ? keep : u.at(p, alpha)};
        }
        for (const auto& [i, j] : nbrs) {
          auto potts = [&](int a, int c) { return a != c ? params.lambda : Ticks{0}; };
          b.pairwise.push_back({i, j, potts(f[i], f[j]), potts(f[i], alpha), potts(alpha, f[j]), 0});
        }
        const auto sol = solve_binary(b);
        Labeling next = f;
        for (int p = 0; p < u.n; ++p)
          if (sol.x[p]) next[p] = alpha;
        const Ticks e = labeling_energy(u, next, nbrs, params);
        if (e < energy) {
          f = std::move(next);
          energy = e;
          accepted = true;
          trace.push_back(e);
        }
      }
    }
    if (detail::guarded_refit(u, pool, f, left, right, params.score)) {
      energy = labeling_energy(u, f, nbrs, params);
      trace.push_back(energy);
    }
    if (energy >= before) break;
  }
  return detail::compact(f, pool, energy, std::move(trace));
}

/// Per-label DLT over each label's matched pairs. Labels with fewer than four
/// supports, or whose support is degenerate, are removed and their features set to outlier.
inline std::pair<Labeling, ProposalPool> reestimate(const Labeling& f, const JointMatching& m, const FeatureSet& left,
                                                    const FeatureSet& right) {
  const auto partner = detail::partners_of(m, f.size());
  int max_label = -1;
  for (int h : f.assignment) max_label = std::max(max_label, h);
  const auto used = detail::labels_in(f, max_label + 1);
  Labeling out = f;
  ProposalPool pool;
  for (int h : used) {
    std::vector<PointPair> pairs;
    for (int p = 0; p < f.size(); ++p)
      if (f[p] == h) pairs.push_back({left[p].pos, right[partner[p]].pos});
    int fresh = kOutlier;
    if (pairs.size() >= 4) {
      try {
        pool.push_back(fit_homography(pairs));
        fresh = static_cast<int>(pool.size()) - 1;
      } catch (const Error&) {
      }
    }
    for (int p = 0; p < f.size(); ++p)
      if (f[p] == h) out[p] = fresh;
  }
  return {out, pool};
}

}  // namespace efm
