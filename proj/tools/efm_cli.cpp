#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "efm/efm.hpp"
#include "efm/eval.hpp"
#include "efm/io.hpp"
#include "efm/scene.hpp"

namespace {

using efm::Ticks;
using json = nlohmann::ordered_json;

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

struct RunConfig {
  double beta = 10.0;
  double lambda = 1.0;
  double outlier_cost = 2.0;
  double angle = std::numbers::pi / 4.0;
  double sbr = 0.7;
  int proposals = 200;
  int restarts = 5;
  int max_iter = 20;
  std::uint64_t seed = 1;

  [[nodiscard]] efm::ScoreParams score() const {
    efm::ScoreParams s;
    s.outlier_cost = outlier_cost;
    s.angle_threshold = angle;
    return s;
  }

  [[nodiscard]] efm::EfmParams efm() const {
    efm::EfmParams p;
    p.energy.score = score();
    p.energy.beta = p.energy.score.ticks(beta);
    p.energy.lambda = p.energy.score.ticks(lambda);
    p.sbr_ratio = sbr;
    p.proposals = proposals;
    p.max_iter = max_iter;
    p.seed = seed;
    return p;
  }
};

std::string env_name(const std::string& flag) {
  std::string out = "EFM_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <class T>
CLI::Option* option(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option("--" + name, value, help)->envname(env_name(name))->capture_default_str();
}

struct Paths {
  std::string left, right, gt, result, init, out, out_dir, json;
};

void add_inputs(CLI::App* app, Paths& p) {
  option(app, "left", p.left, "left features file")->required()->check(CLI::ExistingFile);
  option(app, "right", p.right, "right features file")->required()->check(CLI::ExistingFile);
}

void add_score(CLI::App* app, RunConfig& c) {
  option(app, "T", c.outlier_cost, "outlier cost T (pixels)")->check(CLI::PositiveNumber);
  option(app, "angle", c.angle, "descriptor angle threshold (radians)")->check(CLI::Range(1e-9, std::numbers::pi - 1e-9));
}

void add_fit(CLI::App* app, RunConfig& c) {
  add_score(app, c);
  option(app, "beta", c.beta, "label cost (cost units)")->check(CLI::NonNegativeNumber);
  option(app, "sbr", c.sbr, "second-best ratio for the initial matching")->check(CLI::Range(1e-9, 1.0));
  option(app, "proposals", c.proposals, "fresh proposals per iteration")->check(CLI::PositiveNumber);
  option(app, "max-iter", c.max_iter, "iteration cap")->check(CLI::PositiveNumber);
  option(app, "seed", c.seed, "random seed");
}

void add_outputs(CLI::App* app, Paths& p, bool result_required = true) {
  auto* out = option(app, "out", p.out, "output file");
  if (result_required) out->required();
  option(app, "json", p.json, "machine-readable report");
}

void write_json(const std::string& path, const json& j) {
  if (path.empty()) return;
  efm::io::write_file(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

std::string units(Ticks t, double scale) { return efm::io::format_double(static_cast<double>(t) / scale); }

efm::FeatureSet load_features(const std::string& path, efm::Side side) {
  auto s = efm::io::read_file<efm::FeatureSet>(path, efm::io::read_features);
  if (s.side != side) throw efm::DataError("'" + path + "' holds the wrong image side");
  return s;
}

int matched_pairs(const efm::JointMatching& m, const efm::FeatureSet& left, const efm::FeatureSet& right) {
  int n = 0;
  for (const auto& t : m.triples)
    if (t.label != efm::kOutlier && !left[t.p].dummy && !right[t.q].dummy) ++n;
  return n;
}

efm::io::Result to_result(const std::string& method, const efm::JointState& s, Ticks energy, double scale) {
  return {method, scale, energy, s.iterations, s.models, s.trace, s.matching};
}

json state_report(const efm::io::Result& r, const efm::JointState& s) {
  json j;
  j["method"] = r.method;
  j["energy_ticks"] = *r.energy;
  j["cost_scale"] = r.cost_scale;
  j["energy"] = static_cast<double>(*r.energy) / r.cost_scale;
  j["data_cost_ticks"] = s.matching.objective;
  j["iterations"] = s.iterations;
  j["models"] = s.models.size();
  j["matched_pairs"] = matched_pairs(s.matching, s.left, s.right);
  return j;
}

void print_state(const json& j) {
  std::printf("%-14s %s\n", "method", j["method"].get<std::string>().c_str());
  std::printf("%-14s %s (%lld ticks)\n", "energy", efm::io::format_double(j["energy"].get<double>()).c_str(),
              j["energy_ticks"].get<long long>());
  if (j.contains("input_energy_ticks"))
    std::printf("%-14s %lld ticks\n", "input energy", j["input_energy_ticks"].get<long long>());
  std::printf("%-14s %d\n", "iterations", j["iterations"].get<int>());
  std::printf("%-14s %zu\n", "models", j["models"].get<std::size_t>());
  std::printf("%-14s %d\n", "matched pairs", j["matched_pairs"].get<int>());
}

// Rebuilds a state from a result file over the given feature sets.
efm::JointState load_state(const efm::io::Result& r, const efm::FeatureSet& left, const efm::FeatureSet& right,
                           const efm::EnergyParams& params) {
  if (r.models.empty()) throw efm::DataError("initial result carries no models");
  if (r.cost_scale != params.score.cost_scale) throw efm::DataError("initial result uses a different cost scale");
  efm::JointState s;
  std::tie(s.left, s.right) = efm::balance_with_dummies(left, right, params.score);
  s.models = r.models;
  s.matching = r.matching;
  s.trace = r.trace;
  s.iterations = r.iterations;
  std::sort(s.matching.triples.begin(), s.matching.triples.end());
  s.matching.objective = efm::detail::data_cost(s, params.score);
  return s;
}

int cmd_gen(const efm::SceneSpec& spec, const Paths& p) {
  const efm::Scene sc = efm::generate_scene(spec);
  std::filesystem::create_directories(p.out_dir);
  const std::filesystem::path dir(p.out_dir);
  efm::io::write_file((dir / "left.txt").string(), [&](std::ostream& o) { efm::io::write_features(o, sc.left); });
  efm::io::write_file((dir / "right.txt").string(), [&](std::ostream& o) { efm::io::write_features(o, sc.right); });
  efm::io::write_file((dir / "gt.txt").string(), [&](std::ostream& o) { efm::io::write_ground_truth(o, sc.gt); });
  std::printf("%-14s %d\n%-14s %d\n%-14s %d\n%-14s %zu\n", "planes", spec.plane_count, "left", sc.left.size(), "right",
              sc.right.size(), "true matches", sc.gt.matching.size());
  return 0;
}

int cmd_gt(const RunConfig& c, const Paths& p) {
  efm::Scene sc{load_features(p.left, efm::Side::kLeft), load_features(p.right, efm::Side::kRight),
                efm::io::read_file<efm::GroundTruth>(p.gt, efm::io::read_ground_truth)};
  if (static_cast<int>(sc.gt.left_plane.size()) != sc.left.size() || static_cast<int>(sc.gt.right_plane.size()) != sc.right.size())
    throw efm::DataError("region file does not match the feature files");
  const efm::ScoreParams score = c.score();
  efm::GroundTruth out;
  out.left_plane = sc.gt.left_plane;
  out.right_plane = sc.gt.right_plane;
  out.labeling.assignment.assign(out.left_plane.size(), efm::kOutlier);
  json regions = json::array();
  for (int k = 0; k < static_cast<int>(sc.gt.models.size()); ++k) {
    const efm::Region region = efm::extract_region(sc, k);
    const auto a = efm::gt_assignment(region.left, region.right, score, {.restarts = c.restarts, .seed = c.seed});
    out.models.push_back(a.model);
    int matched = 0;
    for (const auto& t : a.matching.triples) {
      if (t.label != 0 || t.p >= region.left.size() || t.q >= region.right.size()) continue;
      out.matching.emplace_back(region.left_ids[t.p], region.right_ids[t.q]);
      out.labeling[region.left_ids[t.p]] = k;
      ++matched;
    }
    regions.push_back({{"region", k}, {"objective_ticks", a.objective}, {"best_restart", a.best_restart}, {"matched", matched}});
    std::printf("region %d: objective %s, %d matched, best restart %d\n", k, units(a.objective, score.cost_scale).c_str(),
                matched, a.best_restart);
  }
  std::sort(out.matching.begin(), out.matching.end());
  efm::io::write_file(p.out, [&](std::ostream& o) { efm::io::write_ground_truth(o, out); });
  write_json(p.json, {{"regions", regions}});
  return 0;
}

int cmd_match(const RunConfig& c, const Paths& p) {
  const auto left = load_features(p.left, efm::Side::kLeft), right = load_features(p.right, efm::Side::kRight);
  const auto sbr = efm::sbr_match(left, right, c.sbr);
  efm::EnergyParams params;
  params.score = c.score();
  efm::JointState s = efm::initial_state(left, right, sbr, params);
  for (auto& t : s.matching.triples)
    if (std::binary_search(sbr.pairs.begin(), sbr.pairs.end(), std::pair{t.p, t.q})) t.label = 0;
  const efm::io::Result r{"sbr", params.score.cost_scale, std::nullopt, 0, {}, {}, s.matching};
  efm::io::write_file(p.out, [&](std::ostream& o) { efm::io::write_result(o, r); });
  std::printf("%-14s %zu\n%-14s %s\n", "sbr pairs", sbr.pairs.size(), "ratio test", sbr.ratio_test_skipped ? "skipped" : "applied");
  write_json(p.json, {{"method", "sbr"}, {"pairs", sbr.pairs.size()}, {"ratio_test_skipped", sbr.ratio_test_skipped}});
  return 0;
}

int cmd_fit(const std::string& method, const RunConfig& c, const Paths& p) {
  const auto left = load_features(p.left, efm::Side::kLeft), right = load_features(p.right, efm::Side::kRight);
  const efm::EfmParams params = c.efm();
  const double scale = params.energy.score.cost_scale;
  efm::JointState s;
  Ticks energy;
  std::optional<Ticks> input;
  if (method == "efm2") {
    if (!p.init.empty()) {
      s = load_state(efm::io::read_file<efm::io::Result>(p.init, efm::io::read_result), left, right, params.energy);
    } else {
      s = efm::run_efm1(left, right, params);
    }
    input = efm::energy_e1(s, params.energy);
    const auto nbrs = efm::left_neighbors(s.left);
    s = efm::run_efm2(std::move(s), params, nbrs);
    energy = efm::energy_e2(s, params.energy, nbrs);
  } else {
    s = method == "ef" ? efm::run_ef(left, right, params) : efm::run_efm1(left, right, params);
    energy = efm::energy_e1(s, params.energy);
  }
  const auto r = to_result(method, s, energy, scale);
  efm::io::write_file(p.out, [&](std::ostream& o) { efm::io::write_result(o, r); });
  json j = state_report(r, s);
  if (input) j["input_energy_ticks"] = *input;
  print_state(j);
  write_json(p.json, j);
  return 0;
}

// A ground-truth file given as the result scores the ground truth itself.
efm::io::Result load_result_or_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw efm::DataError("cannot open '" + path + "'");
  std::string first;
  std::getline(in, first);
  in.seekg(0);
  if (first != efm::io::kGroundTruthHeader) return efm::io::read_result(in);
  const auto gt = efm::io::read_ground_truth(in);
  efm::io::Result r{"truth", 1e6, std::nullopt, 0, gt.models, {}, {}};
  for (const auto& [p, q] : gt.matching) r.matching.triples.push_back({p, q, gt.labeling[p]});
  return r;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_eval(const Paths& p) {
  const auto left = load_features(p.left, efm::Side::kLeft), right = load_features(p.right, efm::Side::kRight);
  const auto gt = efm::io::read_file<efm::GroundTruth>(p.gt, efm::io::read_ground_truth);
  const auto r = load_result_or_truth(p.result);
  const auto roc = efm::roc(r.matching, left, right, gt);
  json j;
  j["method"] = r.method;
  j["roc"] = {{"P", roc.P}, {"N", roc.N}, {"TP", roc.TP}, {"FP", roc.FP}, {"TPR", roc.tpr}, {"FPR", roc.fpr}};
  std::printf("%-6s %8s %10s %6s %6s %8s %10s\n", "method", "P", "N", "TP", "FP", "TPR", "FPR");
  std::printf("%-6s %8lld %10lld %6lld %6lld %8.4f %10.3e\n", r.method.c_str(), roc.P, roc.N, roc.TP, roc.FP, roc.tpr, roc.fpr);
  json entries = json::array();
  if (!r.models.empty()) {
    const auto report = efm::gq(r.models, gt, left, right);
    std::vector<double> ratios;
    std::printf("\n%-8s %-9s %12s %12s %8s\n", "gt model", "estimated", "STE est", "STE gt", "GQ");
    for (const auto& e : report.entries) {
      entries.push_back({{"gt_model", e.gt_model},
                         {"estimated", e.estimated},
                         {"numerator", e.numerator},
                         {"denominator", e.denominator},
                         {"gq", optional_number(e.ratio)}});
      if (e.ratio) ratios.push_back(*e.ratio);
      std::printf("%-8d %-9d %12.4f %12.4f %8s\n", e.gt_model, e.estimated, e.numerator, e.denominator,
                  e.ratio ? efm::io::format_double(std::round(*e.ratio * 1e4) / 1e4).c_str() : "undef");
    }
    const auto s = efm::summarize(ratios);
    j["gq_summary"] = {{"count", s.count}, {"median", s.median}, {"mean", s.mean}, {"variance", s.variance}};
    std::printf("GQ over %d defined models: median %.4f mean %.4f variance %.4g\n", s.count, s.median, s.mean, s.variance);
  }
  j["gq"] = entries;
  write_json(p.json, j);
  return 0;
}

int cmd_bench(efm::BenchOptions opt, int seed_count, const Paths& p) {
  opt.seeds.clear();
  for (int s = 1; s <= seed_count; ++s) opt.seeds.push_back(static_cast<std::uint64_t>(s));
  const auto rows = efm::bench_scaling(opt);
  std::printf("exhaustive arm: brute-force GAP inside the same local search, run only for |F| <= %d\n", opt.oracle_cap);
  std::printf("%-8s %-10s %5s %3s %4s %12s %8s %12s\n", "sweep", "method", "F", "L", "runs", "mean sec", "evals", "energy");
  json table = json::array();
  for (const auto& r : rows) {
    std::printf("%-8s %-10s %5d %3d %4d %12.6f %8.2f %12.4f\n", r.sweep.c_str(), r.method.c_str(), r.features, r.labels,
                r.runs, r.mean_seconds, r.mean_evaluations, r.mean_energy);
    table.push_back({{"sweep", r.sweep},
                     {"method", r.method},
                     {"features", r.features},
                     {"labels", r.labels},
                     {"runs", r.runs},
                     {"mean_evaluations", r.mean_evaluations},
                     {"mean_energy", r.mean_energy}});
  }
  if (!p.out.empty()) {
    efm::io::write_file(p.out, [&](std::ostream& o) {
      o << "# efm-bench v1\n";
      o << "sweep method features labels runs mean_evaluations mean_energy\n";
      for (const auto& r : rows)
        o << r.sweep << ' ' << r.method << ' ' << r.features << ' ' << r.labels << ' ' << r.runs << ' '
          << efm::io::format_double(r.mean_evaluations) << ' ' << efm::io::format_double(r.mean_energy) << '\n';
    });
  }
  write_json(p.json, {{"oracle_cap", opt.oracle_cap}, {"rows", table}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint feature matching and multi-homography fitting"};
  app.require_subcommand(1);
  RunConfig c;
  Paths p;

  efm::SceneSpec spec;
  auto* gen = app.add_subcommand("gen", "synthetic multi-plane scene with ground truth");
  option(gen, "planes", spec.plane_count, "number of planes")->check(CLI::PositiveNumber);
  option(gen, "features", spec.features_per_plane, "features per plane")->check(CLI::PositiveNumber);
  option(gen, "size", spec.image_size, "image size (pixels)")->check(CLI::PositiveNumber);
  option(gen, "noise", spec.noise_sigma, "right-image pixel noise sigma")->check(CLI::NonNegativeNumber);
  option(gen, "occlusion", spec.occlusion_rate, "per-side occlusion rate")->check(CLI::Range(0.0, 0.999999));
  option(gen, "dim", spec.descriptor_dim, "descriptor dimension")->check(CLI::Range(2, 4096));
  option(gen, "descriptor-noise", spec.descriptor_noise, "descriptor angular noise (radians)")->check(CLI::NonNegativeNumber);
  option(gen, "textured", spec.textured_fraction, "share of repeated-texture features")->check(CLI::Range(0.0, 1.0));
  option(gen, "stress", spec.stress_planes, "planes with heavy repeated texture")->check(CLI::NonNegativeNumber);
  option(gen, "seed", spec.rng_seed, "random seed");
  option(gen, "out-dir", p.out_dir, "directory for left.txt, right.txt, gt.txt")->required();

  auto* gt = app.add_subcommand("gt", "ground truth by one-model assignment per region");
  add_inputs(gt, p);
  option(gt, "regions", p.gt, "ground-truth file giving region membership")->required()->check(CLI::ExistingFile);
  add_score(gt, c);
  option(gt, "restarts", c.restarts, "RANSAC restarts per region")->check(CLI::PositiveNumber);
  option(gt, "seed", c.seed, "random seed");
  add_outputs(gt, p);

  auto* match = app.add_subcommand("match", "second-best-ratio matching baseline");
  add_inputs(match, p);
  add_score(match, c);
  option(match, "sbr", c.sbr, "second-best ratio")->check(CLI::Range(1e-9, 1.0));
  add_outputs(match, p);

  auto* ef = app.add_subcommand("ef", "multi-model fitting on the fixed SBR matching");
  add_inputs(ef, p);
  add_fit(ef, c);
  add_outputs(ef, p);

  auto* efm1 = app.add_subcommand("efm1", "joint matching and fitting");
  add_inputs(efm1, p);
  add_fit(efm1, c);
  add_outputs(efm1, p);

  auto* efm2 = app.add_subcommand("efm2", "smoothness-aware refinement of an efm1 result");
  add_inputs(efm2, p);
  add_fit(efm2, c);
  option(efm2, "lambda", c.lambda, "smoothness weight (cost units)")->check(CLI::NonNegativeNumber);
  option(efm2, "init", p.init, "efm1 result to refine (runs efm1 when absent)")->check(CLI::ExistingFile);
  add_outputs(efm2, p);

  auto* eval = app.add_subcommand("eval", "ROC counts and GQ against ground truth");
  add_inputs(eval, p);
  option(eval, "gt", p.gt, "ground-truth file")->required()->check(CLI::ExistingFile);
  option(eval, "result", p.result, "result (or ground-truth) file to score")->required()->check(CLI::ExistingFile);
  option(eval, "json", p.json, "machine-readable report");

  efm::BenchOptions bopt;
  int seed_count = 5;
  auto* bench = app.add_subcommand("bench", "LS-GAP scaling: flow solver against exhaustion");
  option(bench, "sizes", bopt.sizes, "feature counts for the size sweep")->check(CLI::PositiveNumber);
  option(bench, "fixed-labels", bopt.fixed_labels, "label count during the size sweep")->check(CLI::PositiveNumber);
  option(bench, "label-counts", bopt.label_counts, "label counts for the label sweep")->check(CLI::PositiveNumber);
  option(bench, "fixed-size", bopt.fixed_size, "feature count during the label sweep")->check(CLI::PositiveNumber);
  option(bench, "seeds", seed_count, "seeds 1..n per measurement")->check(CLI::PositiveNumber);
  option(bench, "beta", bopt.beta, "label cost (cost units)")->check(CLI::NonNegativeNumber);
  option(bench, "oracle-cap", bopt.oracle_cap, "largest size for the exhaustive arm")
      ->check(CLI::Range(1, efm::oracle::kMaxBruteForceSize));
  add_outputs(bench, p, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) return cmd_gen(spec, p);
    if (*gt) return cmd_gt(c, p);
    if (*match) return cmd_match(c, p);
    if (*ef) return cmd_fit("ef", c, p);
    if (*efm1) return cmd_fit("efm1", c, p);
    if (*efm2) return cmd_fit("efm2", c, p);
    if (*eval) return cmd_eval(p);
    if (*bench) return cmd_bench(bopt, seed_count, p);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  }
  return kUsageError;
}
