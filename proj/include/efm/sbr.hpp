#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "efm/geometry.hpp"

namespace efm {

struct SbrMatches {
  std::vector<std::pair<int, int>> pairs;  // (left id, right id), sorted by left id
  bool ratio_test_skipped = false;         // fewer than two right features
};

inline double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  if (a.size() != b.size()) throw DataError("descriptor dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Nearest-descriptor matching with the second-best ratio test. When two left
/// features claim one right feature the closer claim wins (lower id on ties).
inline SbrMatches sbr_match(const FeatureSet& left, const FeatureSet& right, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw DataError("SBR ratio must lie in (0, 1]");
  SbrMatches out;
  out.ratio_test_skipped = right.real_count() < 2;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> claim(static_cast<std::size_t>(right.size()), kInf);
  std::vector<int> owner(static_cast<std::size_t>(right.size()), -1);
  for (const auto& p : left.features) {
    if (p.dummy) continue;
    double best = kInf, second = kInf;
    int arg = -1;
    for (const auto& q : right.features) {
      if (q.dummy) continue;
      const double d = descriptor_distance(p.desc, q.desc);
      if (d < best) {
        second = best;
        best = d;
        arg = q.id;
      } else if (d < second) {
        second = d;
      }
    }
    if (arg < 0) continue;
    const bool accept = out.ratio_test_skipped || best < ratio * second;
    if (accept && best < claim[arg]) {
      claim[arg] = best;
      owner[arg] = p.id;
    }
  }
  for (int q = 0; q < right.size(); ++q)
    if (owner[q] >= 0) out.pairs.emplace_back(owner[q], q);
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

}  // namespace efm
