#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "efm/common.hpp"

namespace efm {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Unit-norm appearance vector; every descriptor in a dataset shares one dimension.
using Descriptor = std::vector<double>;

enum class Side { kLeft, kRight };

struct Feature {
  int id = 0;
  Point2 pos;
  Descriptor desc;     // empty for dummies
  bool dummy = false;  // balancing placeholder, matches only through the outlier model

  friend bool operator==(const Feature&, const Feature&) = default;
};

struct FeatureSet {
  Side side = Side::kLeft;
  std::vector<Feature> features;

  [[nodiscard]] int size() const { return static_cast<int>(features.size()); }
  [[nodiscard]] int real_count() const {
    return static_cast<int>(std::count_if(features.begin(), features.end(), [](const Feature& f) { return !f.dummy; }));
  }
  const Feature& operator[](int i) const { return features[static_cast<std::size_t>(i)]; }

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

/// Scoring constants shared by every cost table.
struct ScoreParams {
  double angle_threshold = std::numbers::pi / 4.0;  // radians; descriptor angles at or above it are infeasible
  double outlier_cost = 2.0;                        // T: cost of any pair under the outlier model
  double cost_scale = 1e6;                          // integer ticks per cost unit

  void validate() const {
    if (!(angle_threshold > 0.0 && angle_threshold < std::numbers::pi))
      throw DataError("angle_threshold must lie in (0, pi)");
    if (!(outlier_cost > 0.0)) throw DataError("outlier cost T must be positive");
    if (!(cost_scale >= 1.0)) throw DataError("cost_scale must be >= 1");
  }

  [[nodiscard]] Ticks outlier_ticks() const { return to_ticks(outlier_cost, cost_scale); }
  [[nodiscard]] Ticks ticks(double cost) const { return to_ticks(cost, cost_scale); }
};

/// Projective map from the left image to the right image. Stored with unit
/// Frobenius norm and its largest-magnitude entry positive so that equal maps
/// compare equal entry-wise.
class Homography {
 public:
  Homography() : Homography(Eigen::Matrix3d::Identity()) {}

  explicit Homography(const Eigen::Matrix3d& m) : m_(normalized(m)) {
    if (!m_.allFinite()) throw DegenerateError("homography has non-finite entries");
    if (std::abs(m_.determinant()) <= 1e-12) throw DegenerateError("homography is singular");
    inv_ = normalized(m_.inverse());
  }

  /// Keeps the bits of a matrix that is already in normalized form, so a
  /// serialized model reads back equal.
  static Homography from_normalized(const Eigen::Matrix3d& m) {
    Homography h(m);
    if (std::abs(m.norm() - 1.0) > 1e-12 || (m - h.m_).cwiseAbs().maxCoeff() > 1e-12)
      throw DataError("matrix is not in normalized form");
    h.m_ = m;
    h.inv_ = normalized(m.inverse());
    return h;
  }

  static Homography translation(double tx, double ty) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return Homography(m);
  }

  static Homography scaling(double s) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 0) = s;
    m(1, 1) = s;
    return Homography(m);
  }

  [[nodiscard]] const Eigen::Matrix3d& matrix() const { return m_; }
  [[nodiscard]] const Eigen::Matrix3d& inverse_matrix() const { return inv_; }
  [[nodiscard]] Homography inverse() const { return Homography(inv_); }

  /// Frobenius distance between normalized representatives.
  [[nodiscard]] double distance_to(const Homography& other) const { return (m_ - other.m_).norm(); }

  friend bool operator==(const Homography& a, const Homography& b) { return a.m_ == b.m_; }

  static Eigen::Matrix3d normalized(const Eigen::Matrix3d& m) {
    const double norm = m.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateError("homography has zero or non-finite norm");
    Eigen::Matrix3d out = m / norm;
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < 9; ++i)
      if (std::abs(out.data()[i]) > std::abs(out.data()[best])) best = i;
    if (out.data()[best] < 0.0) out = -out;
    return out;
  }

 private:
  Eigen::Matrix3d m_;
  Eigen::Matrix3d inv_;
};

namespace detail {

inline Point2 project(const Eigen::Matrix3d& m, const Point2& p) {
  const Eigen::Vector3d v = m * Eigen::Vector3d(p.x, p.y, 1.0);
  if (std::abs(v.z()) < 1e-12) throw DegenerateError("point maps to infinity");
  return {v.x() / v.z(), v.y() / v.z()};
}

}  // namespace detail

inline Point2 apply_homography(const Homography& h, const Point2& p) { return detail::project(h.matrix(), p); }

/// Forward plus backward Euclidean transfer residual.
inline double symmetric_transfer_error(const Homography& h, const Point2& p, const Point2& q) {
  const Point2 fwd = detail::project(h.matrix(), p);
  const Point2 bwd = detail::project(h.inverse_matrix(), q);
  return distance(fwd, q) + distance(bwd, p);
}

inline double descriptor_angle(const Descriptor& a, const Descriptor& b) {
  if (a.size() != b.size()) throw DataError("descriptor dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::acos(std::clamp(dot, -1.0, 1.0));
}

/// 0 below the angle threshold, +inf otherwise.
inline double appearance_penalty(const Descriptor& a, const Descriptor& b, const ScoreParams& params) {
  return descriptor_angle(a, b) < params.angle_threshold ? 0.0 : std::numeric_limits<double>::infinity();
}

inline double matching_score(const Homography& h, const Feature& p, const Feature& q, const ScoreParams& params) {
  if (p.dummy || q.dummy) throw DataError("matching_score is undefined for dummy features");
  const double penalty = appearance_penalty(p.desc, q.desc, params);
  if (is_infeasible(penalty)) return penalty;
  return symmetric_transfer_error(h, p.pos, q.pos) + penalty;
}

struct PointPair {
  Point2 left;
  Point2 right;
};

namespace detail {

// Isotropic normalization: centroid to origin, mean distance sqrt(2).
inline Eigen::Matrix3d normalizing_transform(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean = 0.0;
  for (const auto& p : pts) mean += std::hypot(p.x - cx, p.y - cy);
  mean /= static_cast<double>(pts.size());
  if (!(mean > 1e-15)) throw DegenerateError("all points coincide");
  const double s = std::numbers::sqrt2 / mean;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

inline Point2 transform(const Eigen::Matrix3d& t, const Point2& p) {
  return {t(0, 0) * p.x + t(0, 2), t(1, 1) * p.y + t(1, 2)};
}

inline double cross(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

inline bool all_collinear(std::span<const Point2> pts, double tol) {
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) scatter += Eigen::Vector2d(p.x, p.y) * Eigen::Vector2d(p.x, p.y).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(scatter);
  return es.eigenvalues()(0) <= tol * es.eigenvalues()(1);
}

inline bool any_three_collinear(std::span<const Point2> pts, double tol) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      for (std::size_t k = j + 1; k < pts.size(); ++k)
        if (std::abs(cross(pts[i], pts[j], pts[k])) < tol) return true;
  return false;
}

}  // namespace detail

/// Normalized direct linear transform over >= 4 correspondences.
inline Homography fit_homography(std::span<const PointPair> pairs) {
  if (pairs.size() < 4) throw DataError("fit_homography needs at least 4 pairs");
  const std::size_t n = pairs.size();
  std::vector<Point2> left(n), right(n);
  for (std::size_t i = 0; i < n; ++i) {
    left[i] = pairs[i].left;
    right[i] = pairs[i].right;
  }
  const Eigen::Matrix3d tl = detail::normalizing_transform(left);
  const Eigen::Matrix3d tr = detail::normalizing_transform(right);
  for (std::size_t i = 0; i < n; ++i) {
    left[i] = detail::transform(tl, left[i]);
    right[i] = detail::transform(tr, right[i]);
  }
  constexpr double kCollinearTol = 1e-10;
  if (detail::all_collinear(left, kCollinearTol) || detail::all_collinear(right, kCollinearTol))
    throw DegenerateError("correspondences are collinear");
  if (n == 4 && (detail::any_three_collinear(left, 1e-9) || detail::any_three_collinear(right, 1e-9)))
    throw DegenerateError("minimal sample has three collinear points");

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = left[i].x, y = left[i].y, u = right[i].x, v = right[i].y;
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    a.row(r + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // Two (near) null directions means the correspondences do not pin down H.
  if (sv(7) <= 1e-12 * sv(0)) throw DegenerateError("DLT system is rank deficient");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(tr.inverse() * hn * tl);
}

}  // namespace efm
