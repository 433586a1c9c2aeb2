#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "efm/geometry.hpp"

namespace efm {

/// Undirected edges (i < j), sorted.
using EdgeList = std::vector<std::pair<int, int>>;

namespace detail {

inline EdgeList knn_graph(std::span<const Point2> pts, int k) {
  const int n = static_cast<int>(pts.size());
  std::set<std::pair<int, int>> edges;
  std::vector<std::pair<double, int>> order;
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) order.emplace_back(distance(pts[i], pts[j]), j);
    std::sort(order.begin(), order.end());
    const int take = std::min<int>(k, static_cast<int>(order.size()));
    for (int r = 0; r < take; ++r) edges.emplace(std::min(i, order[r].second), std::max(i, order[r].second));
  }
  return {edges.begin(), edges.end()};
}

struct Triangle {
  std::array<int, 3> v;
  double cx, cy, r2;
};

inline Triangle make_triangle(std::span<const Point2> pts, int a, int b, int c) {
  const Point2 &pa = pts[a], &pb = pts[b], &pc = pts[c];
  const double d = 2.0 * (pa.x * (pb.y - pc.y) + pb.x * (pc.y - pa.y) + pc.x * (pa.y - pb.y));
  const double a2 = pa.x * pa.x + pa.y * pa.y, b2 = pb.x * pb.x + pb.y * pb.y, c2 = pc.x * pc.x + pc.y * pc.y;
  Triangle t{{a, b, c}, 0, 0, std::numeric_limits<double>::infinity()};
  if (d != 0.0) {
    t.cx = (a2 * (pb.y - pc.y) + b2 * (pc.y - pa.y) + c2 * (pa.y - pb.y)) / d;
    t.cy = (a2 * (pc.x - pb.x) + b2 * (pa.x - pc.x) + c2 * (pb.x - pa.x)) / d;
    t.r2 = (pa.x - t.cx) * (pa.x - t.cx) + (pa.y - t.cy) * (pa.y - t.cy);
  }
  return t;
}

// Bowyer-Watson over distinct, not-all-collinear points. O(n^2).
inline EdgeList delaunay_edges(std::vector<Point2> pts) {
  const int n = static_cast<int>(pts.size());
  double minx = pts[0].x, maxx = pts[0].x, miny = pts[0].y, maxy = pts[0].y;
  for (const auto& p : pts) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  const double span = std::max({maxx - minx, maxy - miny, 1.0});
  const double cx = 0.5 * (minx + maxx), cy = 0.5 * (miny + maxy);
  pts.push_back({cx - 40 * span, cy - 30 * span});
  pts.push_back({cx + 40 * span, cy - 30 * span});
  pts.push_back({cx, cy + 40 * span});

  std::vector<Triangle> tris{make_triangle(pts, n, n + 1, n + 2)};
  std::vector<Triangle> keep;
  std::map<std::pair<int, int>, int> boundary;
  for (int i = 0; i < n; ++i) {
    const Point2& p = pts[i];
    keep.clear();
    boundary.clear();
    for (const auto& t : tris) {
      const double d2 = (p.x - t.cx) * (p.x - t.cx) + (p.y - t.cy) * (p.y - t.cy);
      if (d2 < t.r2 * (1.0 - 1e-12)) {
        for (int e = 0; e < 3; ++e) {
          const int a = t.v[e], b = t.v[(e + 1) % 3];
          ++boundary[{std::min(a, b), std::max(a, b)}];
        }
      } else {
        keep.push_back(t);
      }
    }
    tris.swap(keep);
    for (const auto& [edge, count] : boundary)
      if (count == 1) tris.push_back(make_triangle(pts, edge.first, edge.second, i));
  }

  std::set<std::pair<int, int>> edges;
  for (const auto& t : tris) {
    for (int e = 0; e < 3; ++e) {
      const int a = t.v[e], b = t.v[(e + 1) % 3];
      if (a < n && b < n) edges.emplace(std::min(a, b), std::max(a, b));
    }
  }
  return {edges.begin(), edges.end()};
}

}  // namespace detail

/// Delaunay edges over the points; 5-nearest-neighbour graph when every
/// point lies on one line. Exact duplicates are linked to their first copy.
inline EdgeList neighbor_graph(std::span<const Point2> points) {
  if (points.size() < 2) throw DataError("neighbor_graph needs at least 2 points");
  std::vector<Point2> unique;
  std::vector<int> unique_to_input;
  std::map<std::pair<double, double>, int> seen;
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    auto [it, fresh] = seen.emplace(std::pair{points[i].x, points[i].y}, i);
    if (fresh) {
      unique.push_back(points[i]);
      unique_to_input.push_back(i);
    } else {
      edges.emplace(it->second, i);
    }
  }
  const bool collinear = unique.size() < 3 || [&] {
    for (std::size_t k = 2; k < unique.size(); ++k) {
      const double scale = std::max(1.0, distance(unique[0], unique[1]) * distance(unique[0], unique[k]));
      if (std::abs(detail::cross(unique[0], unique[1], unique[k])) > 1e-12 * scale) return false;
    }
    return true;
  }();
  const EdgeList local = collinear ? detail::knn_graph(unique, 5) : detail::delaunay_edges(unique);
  for (const auto& [a, b] : local) {
    const int ia = unique_to_input[a], ib = unique_to_input[b];
    edges.emplace(std::min(ia, ib), std::max(ia, ib));
  }
  return {edges.begin(), edges.end()};
}

}  // namespace efm
