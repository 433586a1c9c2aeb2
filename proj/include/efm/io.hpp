#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "efm/efm.hpp"
#include "efm/scene.hpp"

namespace efm::io {

inline constexpr std::string_view kFeaturesHeader = "# efm-features v1";
inline constexpr std::string_view kGroundTruthHeader = "# efm-gt v1";
inline constexpr std::string_view kResultHeader = "# efm-result v1";

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace detail {

class LineReader {
 public:
  LineReader(std::istream& in, std::string_view what) : in_(in), what_(what) {}

  std::vector<std::string> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (!tokens.empty()) return tokens;
    }
    fail("unexpected end of file");
  }

  std::vector<std::string> expect(std::string_view key, std::size_t count) {
    auto t = next();
    if (t.front() != key || t.size() != count) fail("expected '" + std::string(key) + "' with " + std::to_string(count - 1) + " fields");
    return t;
  }

  void header(std::string_view header) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      if (line != header) fail("expected header '" + std::string(header) + "'");
      return;
    }
    fail("empty file");
  }

  bool at_end() {
    in_ >> std::ws;
    return in_.peek() == std::char_traits<char>::eof();
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(std::string(what_) + " line " + std::to_string(line_no_) + ": " + msg);
  }

  template <class T>
  T number(const std::string& s) const {
    T v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("malformed number '" + s + "'");
    return v;
  }

 private:
  std::istream& in_;
  std::string what_;
  int line_no_ = 0;
};

inline void write_homography(std::ostream& out, int index, const Homography& h) {
  out << "model " << index;
  const auto& m = h.matrix();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << ' ' << format_double(m(r, c));
  out << '\n';
}

inline Homography read_homography(LineReader& r, int index) {
  const auto t = r.expect("model", 11);
  if (r.number<int>(t[1]) != index) r.fail("models out of order");
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = r.number<double>(t[2 + i]);
  return Homography::from_normalized(m);
}

inline std::string label_token(int label) { return label == kOutlier ? "phi" : std::to_string(label); }

inline int read_label(const LineReader& r, const std::string& s) { return s == "phi" ? kOutlier : r.number<int>(s); }

inline const char* step_name(Step s) {
  switch (s) {
    case Step::kInit:
      return "init";
    case Step::kFit:
      return "fit";
    case Step::kMatch:
      return "match";
  }
  return "?";
}

inline Step read_step(const LineReader& r, const std::string& s) {
  if (s == "init") return Step::kInit;
  if (s == "fit") return Step::kFit;
  if (s == "match") return Step::kMatch;
  r.fail("unknown step '" + s + "'");
}

}  // namespace detail

// ---- features ----

/// Real features only; ids must run 0..n-1 and every descriptor shares one dimension.
inline void write_features(std::ostream& out, const FeatureSet& s) {
  if (s.real_count() != s.size()) throw DataError("dummy features are never serialized");
  const std::size_t dim = s.features.empty() ? 0 : s.features.front().desc.size();
  out << kFeaturesHeader << '\n';
  out << "side " << (s.side == Side::kLeft ? "left" : "right") << '\n';
  out << "count " << s.size() << '\n';
  out << "dim " << dim << '\n';
  for (int i = 0; i < s.size(); ++i) {
    const Feature& f = s[i];
    if (f.id != i) throw DataError("feature ids must run 0..n-1");
    if (f.desc.size() != dim) throw DataError("descriptor dimension mismatch");
    out << f.id << ' ' << format_double(f.pos.x) << ' ' << format_double(f.pos.y);
    for (double d : f.desc) out << ' ' << format_double(d);
    out << '\n';
  }
}

inline FeatureSet read_features(std::istream& in) {
  detail::LineReader r(in, "features");
  r.header(kFeaturesHeader);
  const auto side = r.expect("side", 2);
  if (side[1] != "left" && side[1] != "right") r.fail("side must be left or right");
  FeatureSet s{side[1] == "left" ? Side::kLeft : Side::kRight, {}};
  const int count = r.number<int>(r.expect("count", 2)[1]);
  const int dim = r.number<int>(r.expect("dim", 2)[1]);
  if (count < 0 || dim < 0) r.fail("negative count or dimension");
  for (int i = 0; i < count; ++i) {
    const auto t = r.next();
    if (t.size() != static_cast<std::size_t>(3 + dim)) r.fail("expected id, x, y and " + std::to_string(dim) + " descriptor values");
    if (r.number<int>(t[0]) != i) r.fail("feature ids must run 0..n-1");
    Feature f{i, {r.number<double>(t[1]), r.number<double>(t[2])}, {}, false};
    for (int d = 0; d < dim; ++d) f.desc.push_back(r.number<double>(t[3 + d]));
    s.features.push_back(std::move(f));
  }
  if (!r.at_end()) r.fail("trailing content");
  return s;
}

// ---- ground truth ----

inline void write_ground_truth(std::ostream& out, const GroundTruth& gt) {
  out << kGroundTruthHeader << '\n';
  out << "models " << gt.models.size() << '\n';
  for (std::size_t k = 0; k < gt.models.size(); ++k) detail::write_homography(out, static_cast<int>(k), gt.models[k]);
  out << "left " << gt.left_plane.size() << '\n';
  for (std::size_t i = 0; i < gt.left_plane.size(); ++i) out << i << ' ' << gt.left_plane[i] << '\n';
  out << "right " << gt.right_plane.size() << '\n';
  for (std::size_t i = 0; i < gt.right_plane.size(); ++i) out << i << ' ' << gt.right_plane[i] << '\n';
  out << "matches " << gt.matching.size() << '\n';
  for (const auto& [p, q] : gt.matching) out << p << ' ' << q << '\n';
}

/// The labeling is rebuilt from the matched left features' planes.
inline GroundTruth read_ground_truth(std::istream& in) {
  detail::LineReader r(in, "ground truth");
  r.header(kGroundTruthHeader);
  GroundTruth gt;
  const int models = r.number<int>(r.expect("models", 2)[1]);
  for (int k = 0; k < models; ++k) gt.models.push_back(detail::read_homography(r, k));
  auto planes = [&](std::string_view key, std::vector<int>& out) {
    const int n = r.number<int>(r.expect(key, 2)[1]);
    for (int i = 0; i < n; ++i) {
      const auto t = r.next();
      if (t.size() != 2 || r.number<int>(t[0]) != i) r.fail("expected '<id> <plane>' in id order");
      const int k = r.number<int>(t[1]);
      if (k < 0 || k >= models) r.fail("plane index out of range");
      out.push_back(k);
    }
  };
  planes("left", gt.left_plane);
  planes("right", gt.right_plane);
  const int matches = r.number<int>(r.expect("matches", 2)[1]);
  gt.labeling.assignment.assign(gt.left_plane.size(), kOutlier);
  for (int i = 0; i < matches; ++i) {
    const auto t = r.next();
    if (t.size() != 2) r.fail("expected '<p> <q>'");
    const int p = r.number<int>(t[0]), q = r.number<int>(t[1]);
    if (p < 0 || p >= static_cast<int>(gt.left_plane.size()) || q < 0 || q >= static_cast<int>(gt.right_plane.size()))
      r.fail("match id out of range");
    if (gt.left_plane[p] != gt.right_plane[q]) r.fail("matched features lie on different planes");
    gt.matching.emplace_back(p, q);
    gt.labeling[p] = gt.left_plane[p];
  }
  if (!std::is_sorted(gt.matching.begin(), gt.matching.end())) r.fail("matches must be sorted");
  if (!r.at_end()) r.fail("trailing content");
  return gt;
}

// ---- results ----

/// Output of a matching method. Ids refer to the balanced feature sets (dummy
/// ids follow the real ones). Methods without models label every accepted
/// pair `match`, read back as label 0 with an empty model list.
struct Result {
  std::string method;
  double cost_scale = 1e6;
  std::optional<Ticks> energy;
  int iterations = 0;
  ProposalPool models;
  std::vector<TraceEntry> trace;
  JointMatching matching;

  friend bool operator==(const Result&, const Result&) = default;
};

inline void write_result(std::ostream& out, const Result& res) {
  out << kResultHeader << '\n';
  out << "method " << res.method << '\n';
  out << "scale " << format_double(res.cost_scale) << '\n';
  out << "energy " << (res.energy ? std::to_string(*res.energy) : "none") << '\n';
  out << "objective " << res.matching.objective << '\n';
  out << "iterations " << res.iterations << '\n';
  out << "models " << res.models.size() << '\n';
  for (std::size_t k = 0; k < res.models.size(); ++k) detail::write_homography(out, static_cast<int>(k), res.models[k]);
  out << "trace " << res.trace.size() << '\n';
  for (const auto& e : res.trace) out << e.iteration << ' ' << detail::step_name(e.step) << ' ' << e.energy << '\n';
  out << "matches " << res.matching.size() << '\n';
  const bool unmodelled = res.models.empty();
  for (const auto& t : res.matching.triples)
    out << t.p << ' ' << t.q << ' ' << (unmodelled && t.label != kOutlier ? "match" : detail::label_token(t.label)) << '\n';
}

inline Result read_result(std::istream& in) {
  detail::LineReader r(in, "result");
  r.header(kResultHeader);
  Result res;
  res.method = r.expect("method", 2)[1];
  res.cost_scale = r.number<double>(r.expect("scale", 2)[1]);
  const auto e = r.expect("energy", 2)[1];
  if (e != "none") res.energy = r.number<Ticks>(e);
  res.matching.objective = r.number<Ticks>(r.expect("objective", 2)[1]);
  res.iterations = r.number<int>(r.expect("iterations", 2)[1]);
  const int models = r.number<int>(r.expect("models", 2)[1]);
  for (int k = 0; k < models; ++k) res.models.push_back(detail::read_homography(r, k));
  const int trace = r.number<int>(r.expect("trace", 2)[1]);
  for (int i = 0; i < trace; ++i) {
    const auto t = r.next();
    if (t.size() != 3) r.fail("expected '<iteration> <step> <ticks>'");
    res.trace.push_back({r.number<int>(t[0]), detail::read_step(r, t[1]), r.number<Ticks>(t[2])});
  }
  const int matches = r.number<int>(r.expect("matches", 2)[1]);
  for (int i = 0; i < matches; ++i) {
    const auto t = r.next();
    if (t.size() != 3) r.fail("expected '<p> <q> <label>'");
    int label;
    if (t[2] == "match") {
      if (models != 0) r.fail("'match' labels need an empty model list");
      label = 0;
    } else {
      label = detail::read_label(r, t[2]);
      if (label != kOutlier && (label < 0 || label >= models)) r.fail("label outside the model list");
    }
    res.matching.triples.push_back({r.number<int>(t[0]), r.number<int>(t[1]), label});
  }
  if (!r.at_end()) r.fail("trailing content");
  return res;
}

// ---- files ----

template <class T, class Read>
T read_file(const std::string& path, Read read) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read(in);
}

template <class Write>
void write_file(const std::string& path, Write write) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write(out);
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace efm::io
