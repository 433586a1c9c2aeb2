#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "efm/gap.hpp"
#include "efm/sbr.hpp"

namespace efm {

struct SceneSpec {
  int plane_count = 3;
  int features_per_plane = 150;
  double image_size = 640.0;
  double noise_sigma = 0.0;       // pixels, right image only
  double occlusion_rate = 0.0;    // independent per feature and side
  int descriptor_dim = 32;
  double descriptor_noise = 0.15; // radians, per side, clipped to max_descriptor_offset
  double max_descriptor_offset = 0.35;
  double textured_fraction = 0.0; // share of features in repeated-texture groups
  int texture_group = 8;
  int stress_planes = 0;          // the first planes use stress_fraction instead
  double stress_fraction = 0.85;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (plane_count < 1 || features_per_plane < 1 || descriptor_dim < 2 || texture_group < 2)
      throw DataError("scene counts out of range");
    if (!(image_size > 0) || noise_sigma < 0 || descriptor_noise < 0 || max_descriptor_offset < 0)
      throw DataError("scene scales out of range");
    if (!(occlusion_rate >= 0 && occlusion_rate < 1)) throw DataError("occlusion rate must lie in [0, 1)");
    if (!(textured_fraction >= 0 && textured_fraction <= 1) || !(stress_fraction >= 0 && stress_fraction <= 1))
      throw DataError("texture fractions must lie in [0, 1]");
    if (stress_planes < 0 || stress_planes > plane_count) throw DataError("stress plane count out of range");
  }
};

struct GroundTruth {
  std::vector<Homography> models;
  std::vector<std::pair<int, int>> matching;  // (left id, right id), sorted
  Labeling labeling;                          // plane of each matched left feature, else outlier
  std::vector<int> left_plane;                // region membership per feature
  std::vector<int> right_plane;
};

struct Scene {
  FeatureSet left{Side::kLeft, {}};
  FeatureSet right{Side::kRight, {}};
  GroundTruth gt;
};

namespace detail {

// Random planar motion of the strip [x0, x1) x [0, size): rotation, anisotropic
// scale, shear and a mild projective tilt about the strip centre.
inline Homography random_plane_motion(std::mt19937_64& rng, double x0, double x1, double size) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Point2 c{(x0 + x1) / 2, size / 2};
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double angle = 0.15 * u(rng), sx = 1.0 + 0.15 * u(rng), sy = 1.0 + 0.15 * u(rng), shear = 0.1 * u(rng);
    Eigen::Matrix3d a;
    a << sx * std::cos(angle), -std::sin(angle) + shear, 0, std::sin(angle), sy * std::cos(angle), 0,
        3e-4 * u(rng), 3e-4 * u(rng), 1;
    Eigen::Matrix3d to, from;
    to << 1, 0, -c.x, 0, 1, -c.y, 0, 0, 1;
    from << 1, 0, c.x + 30 * u(rng), 0, 1, c.y + 30 * u(rng), 0, 0, 1;
    const Eigen::Matrix3d m = from * a * to;
    bool ok = std::abs(a.topLeftCorner<2, 2>().determinant()) > 0.5;
    for (Point2 corner : {Point2{x0, 0}, Point2{x1, 0}, Point2{x0, size}, Point2{x1, size}}) {
      const double w = m(2, 0) * corner.x + m(2, 1) * corner.y + m(2, 2);
      ok = ok && w > 0.3;
    }
    if (ok) return Homography(m);
  }
  throw DegenerateError("could not draw a well-conditioned plane motion");
}

inline Descriptor perturb(std::mt19937_64& rng, const Descriptor& base, double sigma, double max_angle) {
  std::normal_distribution<double> g(0.0, 1.0);
  // Direction orthogonal to base.
  Descriptor dir(base.size());
  double dot = 0.0, norm = 0.0;
  for (auto& v : dir) v = g(rng);
  for (std::size_t i = 0; i < base.size(); ++i) dot += dir[i] * base[i];
  for (std::size_t i = 0; i < base.size(); ++i) {
    dir[i] -= dot * base[i];
    norm += dir[i] * dir[i];
  }
  norm = std::sqrt(norm);
  const double angle = std::min(std::abs(sigma * g(rng)), max_angle);
  Descriptor out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = std::cos(angle) * base[i] + std::sin(angle) * dir[i] / norm;
  return out;
}

inline Descriptor random_direction(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  Descriptor d(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (auto& v : d) {
    v = g(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : d) v /= norm;
  return d;
}

}  // namespace detail

/// Planes occupy equal vertical strips of the left image. Feature ids are
/// shuffled independently on each side.
inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  const double strip = spec.image_size / spec.plane_count;
  const double margin = std::min(10.0, strip / 10);

  struct Raw {
    Point2 left, right;
    Descriptor dl, dr;
    int plane;
    bool left_visible, right_visible;
  };
  std::vector<Raw> raw;
  Scene scene;
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  std::bernoulli_distribution occluded(spec.occlusion_rate);
  for (int k = 0; k < spec.plane_count; ++k) {
    const double x0 = k * strip, x1 = (k + 1) * strip;
    const Homography h = detail::random_plane_motion(rng, x0, x1, spec.image_size);
    scene.gt.models.push_back(h);
    const double fraction = k < spec.stress_planes ? spec.stress_fraction : spec.textured_fraction;
    const int textured = static_cast<int>(std::lround(fraction * spec.features_per_plane));
    std::uniform_real_distribution<double> ux(x0 + margin, x1 - margin), uy(margin, spec.image_size - margin);
    Descriptor group_base;
    for (int i = 0; i < spec.features_per_plane; ++i) {
      Raw r;
      r.plane = k;
      r.left = {ux(rng), uy(rng)};
      r.right = apply_homography(h, r.left);
      if (spec.noise_sigma > 0) {
        r.right.x += noise(rng);
        r.right.y += noise(rng);
      }
      Descriptor base;
      if (i < textured) {
        if (i % spec.texture_group == 0) group_base = detail::random_direction(rng, spec.descriptor_dim);
        base = group_base;
      } else {
        base = detail::random_direction(rng, spec.descriptor_dim);
      }
      r.dl = detail::perturb(rng, base, spec.descriptor_noise, spec.max_descriptor_offset);
      r.dr = detail::perturb(rng, base, spec.descriptor_noise, spec.max_descriptor_offset);
      r.left_visible = !occluded(rng);
      r.right_visible = !occluded(rng);
      raw.push_back(std::move(r));
    }
  }

  std::vector<int> left_order, right_order;
  for (int i = 0; i < static_cast<int>(raw.size()); ++i) {
    if (raw[i].left_visible) left_order.push_back(i);
    if (raw[i].right_visible) right_order.push_back(i);
  }
  std::shuffle(left_order.begin(), left_order.end(), rng);
  std::shuffle(right_order.begin(), right_order.end(), rng);
  std::vector<int> right_id(raw.size(), -1);
  for (int id = 0; id < static_cast<int>(right_order.size()); ++id) {
    const auto& r = raw[right_order[id]];
    scene.right.features.push_back({id, r.right, r.dr, false});
    scene.gt.right_plane.push_back(r.plane);
    right_id[right_order[id]] = id;
  }
  scene.gt.labeling.assignment.assign(left_order.size(), kOutlier);
  for (int id = 0; id < static_cast<int>(left_order.size()); ++id) {
    const auto& r = raw[left_order[id]];
    scene.left.features.push_back({id, r.left, r.dl, false});
    scene.gt.left_plane.push_back(r.plane);
    if (right_id[left_order[id]] >= 0) {
      scene.gt.matching.emplace_back(id, right_id[left_order[id]]);
      scene.gt.labeling[id] = r.plane;
    }
  }
  std::sort(scene.gt.matching.begin(), scene.gt.matching.end());
  return scene;
}

/// Features of one region on both sides, re-indexed from zero.
struct Region {
  FeatureSet left{Side::kLeft, {}};
  FeatureSet right{Side::kRight, {}};
  std::vector<int> left_ids;  // region id -> scene id
  std::vector<int> right_ids;
};

inline Region extract_region(const Scene& scene, int plane) {
  Region r;
  for (const auto& f : scene.left.features)
    if (scene.gt.left_plane[f.id] == plane) {
      r.left.features.push_back({static_cast<int>(r.left_ids.size()), f.pos, f.desc, false});
      r.left_ids.push_back(f.id);
    }
  for (const auto& f : scene.right.features)
    if (scene.gt.right_plane[f.id] == plane) {
      r.right.features.push_back({static_cast<int>(r.right_ids.size()), f.pos, f.desc, false});
      r.right_ids.push_back(f.id);
    }
  return r;
}

struct RansacResult {
  Homography model;
  std::vector<int> inliers;  // indices into the input pairs
};

/// Best minimal-sample model by inlier count, refit on its inliers. Fails when
/// no sample gathers four inliers beyond its own four points.
inline RansacResult ransac_homography(std::span<const PointPair> pairs, int iterations, double inlier_threshold,
                                      std::uint64_t seed) {
  const int n = static_cast<int>(pairs.size());
  if (n < 4) throw DataError("RANSAC needs at least 4 pairs");
  if (iterations < 1 || !(inlier_threshold > 0)) throw DataError("RANSAC iterations and threshold must be positive");
  auto inliers_of = [&](const Homography& h) {
    std::vector<int> in;
    for (int i = 0; i < n; ++i) {
      double e;
      try {
        e = symmetric_transfer_error(h, pairs[i].left, pairs[i].right);
      } catch (const DegenerateError&) {
        continue;
      }
      if (e < inlier_threshold) in.push_back(i);
    }
    return in;
  };

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  RansacResult best;
  bool found = false;
  std::array<PointPair, 4> sample;
  for (int it = 0; it < iterations; ++it) {
    std::array<int, 4> idx{};
    for (int i = 0; i < 4; ++i) {
      do idx[i] = pick(rng);
      while (std::find(idx.begin(), idx.begin() + i, idx[i]) != idx.begin() + i);
      sample[i] = pairs[idx[i]];
    }
    Homography h;
    try {
      h = fit_homography(sample);
    } catch (const Error&) {
      continue;
    }
    auto in = inliers_of(h);
    if (in.size() >= 8 && (!found || in.size() > best.inliers.size())) {
      best = {h, std::move(in)};
      found = true;
      if (static_cast<int>(best.inliers.size()) == n) break;
    }
  }
  if (!found) throw DegenerateError("RANSAC found no model with enough inliers");

  std::vector<PointPair> support;
  for (int i : best.inliers) support.push_back(pairs[i]);
  try {
    const Homography refit = fit_homography(support);
    auto in = inliers_of(refit);
    if (in.size() >= best.inliers.size()) best = {refit, std::move(in)};
  } catch (const Error&) {
  }
  return best;
}

struct GtAssignment {
  JointMatching matching;  // over the balanced region sets
  Homography model;
  Ticks objective = 0;
  int best_restart = 0;
  std::vector<std::vector<Ticks>> traces;  // objective per inner iteration, per restart
};

struct GtOptions {
  int restarts = 5;
  int ransac_iterations = 500;
  double ransac_threshold = 3.0;
  double sbr_ratio = 0.8;
  int max_inner = 50;
  std::uint64_t seed = 1;
};

/// One-model-plus-outlier assignment for a region pair: RANSAC start, then
/// alternate optimal matching and a refit that must lower the matched cost.
inline GtAssignment gt_assignment(const FeatureSet& region_left, const FeatureSet& region_right, const ScoreParams& params,
                                  const GtOptions& opt = {}) {
  if (opt.restarts < 1) throw DataError("restarts must be at least 1");
  params.validate();
  auto [left, right] = balance_with_dummies(region_left, region_right, params);
  const GapInstance base = make_gap_instance(left, right, {}, params, true);

  std::vector<PointPair> start;
  for (const auto& [p, q] : sbr_match(left, right, opt.sbr_ratio).pairs) start.push_back({left[p].pos, right[q].pos});
  if (start.size() < 8) {
    start.clear();
    for (const auto& [p, q] : appearance_candidates(left, right, params)) start.push_back({left[p].pos, right[q].pos});
  }

  GtAssignment best;
  bool found = false;
  for (int r = 0; r < opt.restarts; ++r) {
    std::vector<Ticks> trace;
    Homography h;
    try {
      h = ransac_homography(start, opt.ransac_iterations, opt.ransac_threshold, opt.seed + static_cast<std::uint64_t>(r)).model;
    } catch (const Error&) {
      best.traces.push_back(trace);
      continue;
    }
    JointMatching m = solve_gap(with_models(base, {h}));
    trace.push_back(m.objective);
    for (int it = 0; it < opt.max_inner; ++it) {
      std::vector<PointPair> support;
      Ticks before = 0;
      for (const auto& t : m.triples)
        if (t.label == 0) {
          support.push_back({left[t.p].pos, right[t.q].pos});
          before += *geometric_cost(h, left[t.p].pos, right[t.q].pos, params);
        }
      if (support.size() < 4) break;
      Homography refit;
      try {
        refit = fit_homography(support);
      } catch (const Error&) {
        break;
      }
      Ticks after = 0;
      bool feasible = true;
      for (const auto& t : m.triples)
        if (t.label == 0) {
          const auto c = geometric_cost(refit, left[t.p].pos, right[t.q].pos, params);
          if (!c) {
            feasible = false;
            break;
          }
          after += *c;
        }
      if (!feasible || after >= before) break;
      JointMatching next = solve_gap(with_models(base, {refit}));
      if (next.objective >= m.objective) throw std::logic_error("ground-truth descent did not lower the objective");
      h = refit;
      m = std::move(next);
      trace.push_back(m.objective);
    }
    best.traces.push_back(trace);
    if (!found || m.objective < best.objective) {
      best.matching = m;
      best.model = h;
      best.objective = m.objective;
      best.best_restart = r;
      found = true;
    }
  }
  if (!found) throw DegenerateError("ground-truth assignment failed on every restart");
  return best;
}

}  // namespace efm
