#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "efm/labeling.hpp"
#include "efm/lsgap.hpp"
#include "efm/oracle.hpp"
#include "efm/scene.hpp"

namespace efm {

struct RocReport {
  long long P = 0;
  long long N = 0;
  long long TP = 0;
  long long FP = 0;
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Identified pairs are those between two real features carrying a model label.
inline RocReport roc(const JointMatching& m, const FeatureSet& left, const FeatureSet& right, const GroundTruth& gt) {
  const long long nl = left.real_count(), nr = right.real_count();
  if (static_cast<long long>(gt.left_plane.size()) != nl || static_cast<long long>(gt.right_plane.size()) != nr)
    throw DataError("matching and ground truth refer to different feature sets");
  RocReport r;
  r.P = static_cast<long long>(gt.matching.size());
  r.N = nl * nr - r.P;
  for (const auto& t : m.triples) {
    if (t.label == kOutlier || t.p >= left.size() || t.q >= right.size() || left[t.p].dummy || right[t.q].dummy) continue;
    if (std::binary_search(gt.matching.begin(), gt.matching.end(), std::pair{t.p, t.q}))
      ++r.TP;
    else
      ++r.FP;
  }
  r.tpr = r.P > 0 ? static_cast<double>(r.TP) / static_cast<double>(r.P) : 0.0;
  r.fpr = r.N > 0 ? static_cast<double>(r.FP) / static_cast<double>(r.N) : 0.0;
  return r;
}

/// Summed symmetric transfer error of `model` over the pairs of `m` labelled `label`.
inline double ste(const Homography& model, const Labeling& f, std::span<const std::pair<int, int>> pairs,
                  const FeatureSet& left, const FeatureSet& right, int label) {
  double total = 0.0;
  for (const auto& [p, q] : pairs) {
    if (f[p] != label) continue;
    try {
      total += symmetric_transfer_error(model, left[p].pos, right[q].pos);
    } catch (const DegenerateError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return total;
}

inline double ste(const Homography& model, const JointMatching& m, const FeatureSet& left, const FeatureSet& right,
                  int label) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& t : m.triples) pairs.emplace_back(t.p, t.q);
  return ste(model, labeling_of(m), pairs, left, right, label);
}

struct GqEntry {
  int gt_model = 0;
  int estimated = -1;               // closest estimated model on this model's support
  double numerator = 0.0;           // STE of the estimated model
  double denominator = 0.0;         // STE of the ground-truth model
  std::optional<double> ratio;      // undefined when the denominator vanishes
};

// Per-pair STE at or below this counts as exact (rounding of a noise-free scene).
inline constexpr double kVanishingSte = 1e-9;

struct GqReport {
  std::vector<GqEntry> entries;
};

/// Each ground-truth model is compared with the estimated model of least STE
/// on that model's ground-truth support (several may share one estimate).
inline GqReport gq(const ProposalPool& estimated, const GroundTruth& gt, const FeatureSet& left, const FeatureSet& right) {
  if (estimated.empty()) throw DataError("no estimated models to score");
  GqReport out;
  for (int k = 0; k < static_cast<int>(gt.models.size()); ++k) {
    GqEntry e;
    e.gt_model = k;
    e.denominator = ste(gt.models[k], gt.labeling, gt.matching, left, right, k);
    const auto support = std::count_if(gt.matching.begin(), gt.matching.end(), [&](const auto& pq) { return gt.labeling[pq.first] == k; });
    e.numerator = std::numeric_limits<double>::infinity();
    for (int h = 0; h < static_cast<int>(estimated.size()); ++h) {
      const double s = ste(estimated[h], gt.labeling, gt.matching, left, right, k);
      if (s < e.numerator) {
        e.numerator = s;
        e.estimated = h;
      }
    }
    if (e.denominator > kVanishingSte * static_cast<double>(support) && std::isfinite(e.numerator)) e.ratio = e.numerator / e.denominator;
    out.entries.push_back(e);
  }
  return out;
}

struct Summary {
  double median = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // population
  int count = 0;
};

inline Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / 2;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.variance += (v - s.mean) * (v - s.mean);
  s.variance /= static_cast<double>(values.size());
  return s;
}

struct BenchOptions {
  std::vector<int> sizes{7, 8, 25, 50, 100, 200};  // features per side, label count fixed
  int fixed_labels = 5;
  std::vector<int> label_counts{1, 2, 3, 4, 5};  // label sweep at fixed size
  int fixed_size = 8;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int oracle_cap = oracle::kMaxBruteForceSize;
  double beta = 1.0;  // cost units
  ScoreParams score;
};

struct BenchRow {
  std::string sweep;   // "features" or "labels"
  std::string method;  // "mcmf" or "exhaustive"
  int features = 0;
  int labels = 0;
  int runs = 0;
  double mean_seconds = 0.0;
  double mean_evaluations = 0.0;  // subsets handed to the inner solver
  double mean_energy = 0.0;       // cost units
};

/// Synthetic instance for the benchmark: one plane per label, ground-truth models as labels.
inline GapInstance bench_instance(int features, int labels, std::uint64_t seed, const ScoreParams& score) {
  SceneSpec spec;
  spec.plane_count = labels;
  spec.features_per_plane = (features + labels - 1) / labels;
  spec.noise_sigma = 0.5;
  spec.textured_fraction = 0.3;
  spec.rng_seed = seed;
  Scene scene = generate_scene(spec);
  auto trim = [features](FeatureSet s) {
    s.features.erase(std::remove_if(s.features.begin(), s.features.end(), [&](const Feature& f) { return f.id >= features; }),
                     s.features.end());
    return s;
  };
  return make_gap_instance(trim(scene.left), trim(scene.right), scene.gt.models, score, true);
}

inline std::vector<BenchRow> bench_scaling(const BenchOptions& opt) {
  std::vector<BenchRow> rows;
  const Ticks beta = opt.score.ticks(opt.beta);
  auto measure = [&](const std::string& sweep, int features, int labels) {
    for (const bool exhaustive : {false, true}) {
      if (exhaustive && features > opt.oracle_cap) continue;
      BenchRow row{sweep, exhaustive ? "exhaustive" : "mcmf", features, labels};
      for (auto seed : opt.seeds) {
        const GapInstance inst = bench_instance(features, labels, seed, opt.score);
        const auto start = std::chrono::steady_clock::now();
        const RegularizedSolution sol =
            exhaustive ? ls_gap_with(inst, beta, {},
                                     [](const GapInstance& i, std::span<const int> l) { return oracle::brute_force_gap(i, l); })
                       : ls_gap(inst, beta);
        row.mean_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        row.mean_evaluations += sol.evaluations;
        row.mean_energy += static_cast<double>(sol.energy) / opt.score.cost_scale;
        ++row.runs;
      }
      row.mean_seconds /= row.runs;
      row.mean_evaluations /= row.runs;
      row.mean_energy /= row.runs;
      rows.push_back(row);
    }
  };
  for (int f : opt.sizes) measure("features", f, opt.fixed_labels);
  for (int l : opt.label_counts) measure("labels", opt.fixed_size, l);
  return rows;
}

}  // namespace efm
