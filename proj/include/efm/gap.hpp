#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "efm/flow.hpp"
#include "efm/geometry.hpp"

namespace efm {

/// One active x_pqh: left feature p matched to right feature q under label h.
struct Triple {
  int p = 0;
  int q = 0;
  int label = kOutlier;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Joint feature-to-feature and match-to-model assignment over balanced sets.
/// Triples are sorted by p; every left and right id appears exactly once.
struct JointMatching {
  std::vector<Triple> triples;
  Ticks objective = 0;

  [[nodiscard]] int size() const { return static_cast<int>(triples.size()); }
  friend bool operator==(const JointMatching&, const JointMatching&) = default;
};

/// Label per (balanced) left feature: a model index or kOutlier.
struct Labeling {
  std::vector<int> assignment;

  [[nodiscard]] int size() const { return static_cast<int>(assignment.size()); }
  int operator[](int p) const { return assignment[static_cast<std::size_t>(p)]; }
  int& operator[](int p) { return assignment[static_cast<std::size_t>(p)]; }
  friend bool operator==(const Labeling&, const Labeling&) = default;
};

inline Labeling labeling_of(const JointMatching& m) {
  Labeling f;
  f.assignment.resize(m.triples.size(), kOutlier);
  for (const auto& t : m.triples) f[t.p] = t.label;
  return f;
}

struct CostEntry {
  int p = 0;
  int q = 0;
  Ticks cost = 0;
};

/// GAP instance over balanced feature sets. Costs hold only finite
/// (appearance-feasible, non-dummy) entries per label, sorted by (p, q).
struct GapInstance {
  FeatureSet left;
  FeatureSet right;
  std::vector<Homography> models;  // empty for table-built instances
  bool include_outlier = true;
  ScoreParams params;
  Ticks outlier_cost = 0;
  std::vector<std::vector<CostEntry>> costs;

  [[nodiscard]] int n() const { return left.size(); }
  [[nodiscard]] int label_count() const { return static_cast<int>(costs.size()); }

  [[nodiscard]] std::optional<Ticks> cost(int p, int q, int label) const {
    if (label == kOutlier) {
      if (!include_outlier) return std::nullopt;
      return outlier_cost;
    }
    const auto& row = costs[static_cast<std::size_t>(label)];
    auto it = std::lower_bound(row.begin(), row.end(), std::pair{p, q},
                               [](const CostEntry& e, const std::pair<int, int>& key) { return std::pair{e.p, e.q} < key; });
    if (it == row.end() || it->p != p || it->q != q) return std::nullopt;
    return it->cost;
  }

  [[nodiscard]] std::vector<int> all_labels() const {
    std::vector<int> out(static_cast<std::size_t>(label_count()));
    for (int h = 0; h < label_count(); ++h) out[static_cast<std::size_t>(h)] = h;
    return out;
  }
};

/// Appends ||F_l| - |F_r|| dummies to the smaller side.
inline std::pair<FeatureSet, FeatureSet> balance_with_dummies(FeatureSet left, FeatureSet right, const ScoreParams& = {}) {
  FeatureSet& smaller = left.size() < right.size() ? left : right;
  const int target = std::max(left.size(), right.size());
  while (smaller.size() < target) smaller.features.push_back({smaller.size(), {}, {}, true});
  return {std::move(left), std::move(right)};
}

/// Pairs (p, q) of real features whose descriptors pass the appearance threshold.
inline std::vector<std::pair<int, int>> appearance_candidates(const FeatureSet& left, const FeatureSet& right,
                                                              const ScoreParams& params) {
  std::vector<std::pair<int, int>> out;
  const double cos_threshold = std::cos(params.angle_threshold);
  for (const auto& p : left.features) {
    if (p.dummy) continue;
    for (const auto& q : right.features) {
      if (q.dummy) continue;
      if (p.desc.size() != q.desc.size()) throw DataError("descriptor dimension mismatch");
      double dot = 0.0;
      for (std::size_t i = 0; i < p.desc.size(); ++i) dot += p.desc[i] * q.desc[i];
      // Cheap reject far from the boundary, exact angle test near it.
      if (dot < cos_threshold - 1e-6) continue;
      if (descriptor_angle(p.desc, q.desc) < params.angle_threshold) out.emplace_back(p.id, q.id);
    }
  }
  return out;
}

/// D_pq(theta_h) in ticks for a pair already known to pass the appearance test;
/// nullopt when the model cannot project either point or the error saturates.
inline std::optional<Ticks> geometric_cost(const Homography& h, const Point2& p, const Point2& q, const ScoreParams& params) {
  double ste;
  try {
    ste = symmetric_transfer_error(h, p, q);
  } catch (const DegenerateError&) {
    return std::nullopt;
  }
  const Ticks t = params.ticks(ste);
  if (t >= kInfeasibleTicks) return std::nullopt;
  return t;
}

/// Full D_pq(theta_h) in ticks including the appearance gate and dummy rule.
inline std::optional<Ticks> pair_cost(const Homography& h, const Feature& p, const Feature& q, const ScoreParams& params) {
  if (p.dummy || q.dummy) return std::nullopt;
  if (descriptor_angle(p.desc, q.desc) >= params.angle_threshold) return std::nullopt;
  return geometric_cost(h, p.pos, q.pos, params);
}

inline std::vector<CostEntry> model_costs(const Homography& h, const FeatureSet& left, const FeatureSet& right,
                                          std::span<const std::pair<int, int>> candidates, const ScoreParams& params) {
  std::vector<CostEntry> row;
  row.reserve(candidates.size());
  for (const auto& [p, q] : candidates)
    if (const auto c = geometric_cost(h, left[p].pos, right[q].pos, params)) row.push_back({p, q, *c});
  return row;
}

/// Geometric instance: balances the sets and materializes D_pq(theta_h) ticks.
inline GapInstance make_gap_instance(FeatureSet left, FeatureSet right, std::vector<Homography> models,
                                     const ScoreParams& params, bool include_outlier = true) {
  params.validate();
  auto [bl, br] = balance_with_dummies(std::move(left), std::move(right), params);
  GapInstance inst;
  inst.left = std::move(bl);
  inst.right = std::move(br);
  inst.models = std::move(models);
  inst.include_outlier = include_outlier;
  inst.params = params;
  inst.outlier_cost = params.outlier_ticks();
  const auto candidates = appearance_candidates(inst.left, inst.right, params);
  for (const auto& h : inst.models) inst.costs.push_back(model_costs(h, inst.left, inst.right, candidates, params));
  return inst;
}

/// Same candidates, different models: reuses an instance's feature sets.
inline GapInstance with_models(const GapInstance& base, std::vector<Homography> models) {
  GapInstance inst;
  inst.left = base.left;
  inst.right = base.right;
  inst.include_outlier = base.include_outlier;
  inst.params = base.params;
  inst.outlier_cost = base.outlier_cost;
  const auto candidates = appearance_candidates(inst.left, inst.right, inst.params);
  inst.models = std::move(models);
  for (const auto& h : inst.models) inst.costs.push_back(model_costs(h, inst.left, inst.right, candidates, inst.params));
  return inst;
}

/// Instance from an explicit cost tensor costs[h][p][q]; kInfeasibleTicks marks an absent arc.
inline GapInstance make_table_instance(int n_left, int n_right, const std::vector<std::vector<std::vector<Ticks>>>& costs,
                                       bool include_outlier, Ticks outlier_cost) {
  FeatureSet left{Side::kLeft, {}}, right{Side::kRight, {}};
  for (int i = 0; i < n_left; ++i) left.features.push_back({i, {}, {}, false});
  for (int i = 0; i < n_right; ++i) right.features.push_back({i, {}, {}, false});
  auto [bl, br] = balance_with_dummies(std::move(left), std::move(right));
  GapInstance inst;
  inst.left = std::move(bl);
  inst.right = std::move(br);
  inst.include_outlier = include_outlier;
  inst.outlier_cost = outlier_cost;
  inst.params.outlier_cost = static_cast<double>(outlier_cost) / inst.params.cost_scale;
  for (const auto& table : costs) {
    std::vector<CostEntry> row;
    for (int p = 0; p < n_left; ++p)
      for (int q = 0; q < n_right; ++q) {
        const Ticks c = table[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)];
        if (c < 0) throw DataError("GAP costs must be nonnegative");
        if (c < kInfeasibleTicks) row.push_back({p, q, c});
      }
    inst.costs.push_back(std::move(row));
  }
  return inst;
}

enum class OutlierEncoding {
  kHub,    // n_pphi -> hub (cost T) -> n_qphi: 2n arcs, objective-equivalent since D(phi) is uniform
  kDense,  // the literal n^2 block of (n_pphi, n_qphi) arcs
};

struct GapBuildOptions {
  OutlierEncoding outlier = OutlierEncoding::kHub;
  // Drop model arcs costing more than T; the outlier arc of the same pair dominates them.
  bool prune_dominated = true;
};

/// Flow network plus the bookkeeping needed to read a matching back off a flow.
struct GapNetwork {
  flow::FlowNetwork net;
  std::vector<std::optional<Triple>> arc_triple;  // set on (n_ph, n_qh) arcs
  std::vector<int> hub_in_p;                      // per arc: p for n_pphi -> hub, else -1
  std::vector<int> hub_out_q;                     // per arc: q for hub -> n_qphi, else -1
  int n = 0;
};

namespace detail {

struct Slots {
  std::vector<int> labels;  // model labels, then kOutlier if present
};

inline void require_labels_valid(const GapInstance& inst, std::span<const int> labels) {
  for (int h : labels)
    if (h < 0 || h >= inst.label_count()) throw DataError("label outside the model list");
}

// Shared by G* and G*_f. `allowed(p, label)` decides which n_ph nodes exist.
template <typename Allowed>
GapNetwork build_network(const GapInstance& inst, std::span<const int> labels, const GapBuildOptions& opt,
                         bool prune, Allowed allowed) {
  const int n = inst.n();
  if (inst.right.size() != n) throw DataError("GAP instance is not balanced");
  std::vector<int> slots(labels.begin(), labels.end());
  if (inst.include_outlier) slots.push_back(kOutlier);
  const int k = static_cast<int>(slots.size());

  GapNetwork g;
  g.n = n;
  auto& net = g.net;
  net.source = net.add_node();
  net.sink = net.add_node();
  std::vector<int> np(n), nq(n);
  for (int p = 0; p < n; ++p) np[p] = net.add_node();
  for (int q = 0; q < n; ++q) nq[q] = net.add_node();
  std::vector<std::vector<int>> nph(k, std::vector<int>(n, -1)), nqh(k, std::vector<int>(n, -1));
  for (int s = 0; s < k; ++s) {
    for (int p = 0; p < n; ++p)
      if (allowed(p, slots[s])) nph[s][p] = net.add_node();
    for (int q = 0; q < n; ++q) nqh[s][q] = net.add_node();
  }
  const bool hub_encoding = inst.include_outlier && opt.outlier == OutlierEncoding::kHub;
  const int hub = hub_encoding ? net.add_node() : -1;

  auto add = [&](int from, int to, Ticks cost) {
    net.add_arc(from, to, 1, cost);
    g.arc_triple.emplace_back();
    g.hub_in_p.push_back(-1);
    g.hub_out_q.push_back(-1);
  };

  for (int p = 0; p < n; ++p) add(net.source, np[p], 0);
  for (int p = 0; p < n; ++p)
    for (int s = 0; s < k; ++s) {
      if (nph[s][p] < 0) continue;
      if (inst.left[p].dummy && slots[s] != kOutlier) continue;
      add(np[p], nph[s][p], 0);
    }

  std::vector<char> left_reached(n, 0), right_reached(n, 0);
  for (int s = 0; s < k; ++s) {
    const int h = slots[s];
    if (h == kOutlier) {
      for (int p = 0; p < n; ++p) left_reached[p] |= nph[s][p] >= 0;
      for (int q = 0; q < n; ++q) right_reached[q] = 1;
      if (hub_encoding) {
        for (int p = 0; p < n; ++p)
          if (nph[s][p] >= 0) {
            add(nph[s][p], hub, inst.outlier_cost);
            g.hub_in_p.back() = p;
          }
        for (int q = 0; q < n; ++q) {
          add(hub, nqh[s][q], 0);
          g.hub_out_q.back() = q;
        }
      } else {
        for (int p = 0; p < n; ++p)
          if (nph[s][p] >= 0)
            for (int q = 0; q < n; ++q) {
              add(nph[s][p], nqh[s][q], inst.outlier_cost);
              g.arc_triple.back() = Triple{p, q, kOutlier};
            }
      }
      continue;
    }
    for (const auto& e : inst.costs[static_cast<std::size_t>(h)]) {
      if (nph[s][e.p] < 0) continue;
      if (prune && e.cost > inst.outlier_cost) continue;
      add(nph[s][e.p], nqh[s][e.q], e.cost);
      g.arc_triple.back() = Triple{e.p, e.q, h};
      left_reached[e.p] = 1;
      right_reached[e.q] = 1;
    }
  }

  for (int q = 0; q < n; ++q)
    for (int s = 0; s < k; ++s) add(nqh[s][q], nq[q], 0);
  for (int q = 0; q < n; ++q) add(nq[q], net.sink, 0);

  if (!inst.include_outlier) {
    for (int i = 0; i < n; ++i)
      if (!left_reached[i] || !right_reached[i])
        throw InfeasibleError("feature " + std::to_string(i) + " has no feasible arc and no outlier model is available");
  }
  return g;
}

}  // namespace detail

/// G*: source -> n_p -> n_ph -> n_qh -> n_q -> sink, unit capacities,
/// D_pq(theta_h) on the (n_ph, n_qh) arcs. `labels` restricts the label space.
inline GapNetwork build_gap_network(const GapInstance& inst, std::span<const int> labels, const GapBuildOptions& opt = {}) {
  detail::require_labels_valid(inst, labels);
  const bool prune = opt.prune_dominated && inst.include_outlier;
  return detail::build_network(inst, labels, opt, prune, [](int, int) { return true; });
}

inline GapNetwork build_gap_network(const GapInstance& inst, const GapBuildOptions& opt = {}) {
  const auto labels = inst.all_labels();
  return build_gap_network(inst, labels, opt);
}

/// G*_f: as G* but each left feature keeps only its n_{p f_p} node.
inline GapNetwork build_lc_gap_network(const GapInstance& inst, const Labeling& f, const GapBuildOptions& opt = {}) {
  if (f.size() != inst.n()) throw DataError("labeling does not cover the left features");
  std::vector<int> labels;
  for (int p = 0; p < inst.n(); ++p) {
    const int h = f[p];
    if (h == kOutlier) {
      if (!inst.include_outlier) throw DataError("outlier label used but the instance has no outlier model");
      continue;
    }
    if (h < 0 || h >= inst.label_count()) throw DataError("label outside the model list");
    if (inst.left[p].dummy) throw DataError("dummy features can only carry the outlier label");
  }
  labels = inst.all_labels();
  // A fixed label removes the outlier alternative, so no dominance pruning here.
  return detail::build_network(inst, labels, opt, false, [&](int p, int h) { return f[p] == h; });
}

/// Reads x_pqh off the saturated arcs; outlier pairs routed through the hub are paired in id order.
inline JointMatching extract_matching(const GapNetwork& g, const flow::FlowResult& flow) {
  if (flow.total_flow < g.n) throw InfeasibleError("GAP instance is infeasible: max flow below feature count");
  JointMatching m;
  std::vector<int> hub_p, hub_q;
  for (std::size_t a = 0; a < g.net.arcs.size(); ++a) {
    if (flow.flow_per_arc[a] == 0) continue;
    if (g.arc_triple[a]) m.triples.push_back(*g.arc_triple[a]);
    if (g.hub_in_p[a] >= 0) hub_p.push_back(g.hub_in_p[a]);
    if (g.hub_out_q[a] >= 0) hub_q.push_back(g.hub_out_q[a]);
  }
  std::sort(hub_p.begin(), hub_p.end());
  std::sort(hub_q.begin(), hub_q.end());
  for (std::size_t i = 0; i < hub_p.size(); ++i) m.triples.push_back({hub_p[i], hub_q[i], kOutlier});
  std::sort(m.triples.begin(), m.triples.end());
  m.objective = flow.total_cost;
  return m;
}

inline JointMatching solve_gap(const GapInstance& inst, std::span<const int> labels, const GapBuildOptions& opt = {}) {
  const GapNetwork g = build_gap_network(inst, labels, opt);
  return extract_matching(g, flow::solve_min_cost_max_flow(g.net));
}

/// Globally optimal GAP (beta = 0) over every label of the instance.
inline JointMatching solve_gap(const GapInstance& inst, const GapBuildOptions& opt = {}) {
  const auto labels = inst.all_labels();
  return solve_gap(inst, labels, opt);
}

/// Optimal matching with every left feature pinned to its label in f.
inline JointMatching solve_lc_gap(const GapInstance& inst, const Labeling& f, const GapBuildOptions& opt = {}) {
  const GapNetwork g = build_lc_gap_network(inst, f, opt);
  return extract_matching(g, flow::solve_min_cost_max_flow(g.net));
}

/// Recomputes the objective of a matching from the instance's cost table; throws on
/// a violated one-to-one constraint or an absent (infeasible) triple.
inline Ticks matching_cost(const GapInstance& inst, const JointMatching& m) {
  const int n = inst.n();
  if (m.size() != n) throw DataError("matching does not cover every left feature");
  std::vector<char> left_seen(n, 0), right_seen(n, 0);
  Ticks total = 0;
  for (const auto& t : m.triples) {
    if (t.p < 0 || t.p >= n || t.q < 0 || t.q >= n) throw DataError("matching id out of range");
    if (left_seen[t.p]++ || right_seen[t.q]++) throw DataError("matching violates one-to-one constraints");
    const auto c = inst.cost(t.p, t.q, t.label);
    if (!c) throw InfeasibleError("matching uses an infeasible triple");
    total += *c;
  }
  return total;
}

}  // namespace efm
