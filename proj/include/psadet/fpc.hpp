#pragma once

// Foreground point compensation: greedy center estimation over per-point
// predicted boxes, score fusion C_fpc = C_fg * (1 + r * M_center), and
// top-k candidate ranking.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"
#include "psadet/spatial_grid.hpp"

namespace psadet::fpc {

inline constexpr double kDefaultFusionRatio = 0.5;

struct FpcState {
  std::vector<double> confidences;      // C_fg as given
  std::vector<Box3D> boxes;             // per-point predicted boxes
  std::vector<std::uint8_t> center;     // M_center
  std::vector<std::uint8_t> ignored;    // M_ignored, as traced (a center is inside its own box)
  std::vector<double> fused;            // C_fpc
  std::vector<std::size_t> center_order;  // centers in selection order

  std::size_t size() const { return confidences.size(); }
};

struct CenterEstimate {
  std::vector<std::uint8_t> center;
  std::vector<std::uint8_t> ignored;
  std::vector<std::size_t> order;
};

/// Greedy center estimation. Points are visited by descending confidence
/// (ties: lowest index), each exactly once. A visited point that is neither
/// a center nor ignored marks every point inside its predicted box as ignored
/// and then becomes a center.
inline CenterEstimate center_estimation(std::span<const Point3> points,
                                        std::span<const double> confidences,
                                        std::span<const Box3D> boxes, double grid_cell = 1.0) {
  const std::size_t n = points.size();
  if (confidences.size() != n || boxes.size() != n) {
    throw Error("center_estimation: length mismatch (points=" + std::to_string(n) +
                ", confidences=" + std::to_string(confidences.size()) +
                ", boxes=" + std::to_string(boxes.size()) + ")");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(confidences[i])) {
      throw Error("center_estimation: non-finite confidence at index " + std::to_string(i));
    }
    if (!is_valid(boxes[i])) throw Error("center_estimation: invalid box at index " + std::to_string(i));
  }
  CenterEstimate est;
  est.center.assign(n, 0);
  est.ignored.assign(n, 0);
  if (n == 0) return est;

  std::vector<std::size_t> visit(n);
  std::iota(visit.begin(), visit.end(), std::size_t{0});
  std::stable_sort(visit.begin(), visit.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });

  const UniformGrid<2> grid(points, grid_cell);
  for (std::size_t idx : visit) {
    if (est.center[idx] || est.ignored[idx]) continue;
    const Box3D& bb = boxes[idx];
    const double reach = 0.5 * std::hypot(bb.dx, bb.dy);
    grid.for_each_candidate(bb.center(), reach, [&](std::size_t j) {
      if (point_in_box(points[j], bb)) est.ignored[j] = 1;
    });
    est.center[idx] = 1;
    est.order.push_back(idx);
  }
  return est;
}

/// C_fg * (1 + r * M_center), elementwise.
inline std::vector<double> fuse_scores(std::span<const double> confidences,
                                       std::span<const std::uint8_t> center_mask, double r) {
  if (!(r >= 0.0) || !std::isfinite(r)) throw Error("fuse_scores: fusion ratio must be finite and >= 0");
  if (confidences.size() != center_mask.size()) throw Error("fuse_scores: length mismatch");
  std::vector<double> out(confidences.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (center_mask[i] > 1) throw Error("fuse_scores: mask must be binary");
    out[i] = center_mask[i] ? confidences[i] + r * confidences[i] : confidences[i];
  }
  return out;
}

/// Indices of the k highest scores, descending, ties by lowest index.
inline std::vector<std::size_t> rank_candidates(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t m = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  idx.resize(m);
  return idx;
}

struct FpcResult {
  std::vector<std::size_t> candidates;
  FpcState state;
};

/// Re-fuses and re-ranks from an existing state (centers do not depend on r).
inline std::vector<std::size_t> rerank(FpcState& state, double r, std::size_t k) {
  state.fused = fuse_scores(state.confidences, state.center, r);
  return rank_candidates(state.fused, k);
}

inline FpcResult fpc_pipeline(std::span<const Point3> points, std::span<const double> confidences,
                              std::span<const Box3D> boxes, double r, std::size_t k) {
  auto est = center_estimation(points, confidences, boxes);
  FpcResult res;
  res.state.confidences.assign(confidences.begin(), confidences.end());
  res.state.boxes.assign(boxes.begin(), boxes.end());
  res.state.center = std::move(est.center);
  res.state.ignored = std::move(est.ignored);
  res.state.center_order = std::move(est.order);
  res.candidates = rerank(res.state, r, k);
  return res;
}

/// Fraction of ground-truth boxes containing at least one candidate point.
inline double candidate_recall(std::span<const Point3> points,
                               std::span<const std::size_t> candidates,
                               std::span<const Box3D> gt_boxes, std::size_t* recalled = nullptr) {
  std::size_t hit = 0;
  for (const auto& gt : gt_boxes) {
    const bool any = std::any_of(candidates.begin(), candidates.end(),
                                 [&](std::size_t c) { return point_in_box(points[c], gt); });
    hit += any ? 1 : 0;
  }
  if (recalled) *recalled = hit;
  return gt_boxes.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(gt_boxes.size());
}

// ---------------------------------------------------------------------------
// Per-point prediction files (lidar frame)
//
// CSV:    header "confidence,cx,cy,cz,dx,dy,dz,yaw", then one row per point.
// Binary: 8 little-endian float32 per point in the same order, no header.

struct PointPredictions {
  std::vector<double> confidence;
  std::vector<Box3D> boxes;

  std::size_t size() const { return confidence.size(); }
};

inline constexpr std::string_view kPredictionCsvHeader = "confidence,cx,cy,cz,dx,dy,dz,yaw";

inline std::string format_predictions_csv(const PointPredictions& p) {
  std::string s(kPredictionCsvHeader);
  s += '\n';
  char buf[64];
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Box3D& b = p.boxes[i];
    for (double v : {p.confidence[i], b.cx, b.cy, b.cz, b.dx, b.dy, b.dz, b.yaw}) {
      std::snprintf(buf, sizeof buf, "%.17g,", v);
      s += buf;
    }
    s.back() = '\n';
  }
  return s;
}

inline PointPredictions parse_predictions_csv(std::string_view text, const std::string& source = "predictions") {
  PointPredictions out;
  std::size_t pos = 0, line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kPredictionCsvHeader) throw ParseError(source, line_no, "expected header '" + std::string(kPredictionCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    double v[8];
    std::size_t field = 0, start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view tok = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (field >= 8) throw ParseError(source, line_no, "too many fields");
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v[field]);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v[field])) {
        throw ParseError(source, line_no, "malformed number '" + std::string(tok) + "'");
      }
      ++field;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (field != 8) throw ParseError(source, line_no, "expected 8 fields, got " + std::to_string(field));
    const Box3D b{v[1], v[2], v[3], v[4], v[5], v[6], normalize_yaw(v[7]), Frame::lidar};
    if (!is_valid(b)) throw ParseError(source, line_no, "invalid box");
    out.confidence.push_back(v[0]);
    out.boxes.push_back(b);
  }
  return out;
}

inline std::string encode_predictions_binary(const PointPredictions& p) {
  std::string buf;
  buf.reserve(p.size() * 32);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Box3D& b = p.boxes[i];
    const float v[8] = {static_cast<float>(p.confidence[i]), static_cast<float>(b.cx), static_cast<float>(b.cy),
                        static_cast<float>(b.cz), static_cast<float>(b.dx), static_cast<float>(b.dy),
                        static_cast<float>(b.dz), static_cast<float>(b.yaw)};
    buf.append(reinterpret_cast<const char*>(v), sizeof v);
  }
  return buf;
}

inline PointPredictions decode_predictions_binary(std::span<const char> bytes, const std::string& source = "predictions") {
  if (bytes.size() % 32 != 0) throw ParseError(source + ": size is not a multiple of 32 bytes");
  PointPredictions out;
  for (std::size_t i = 0; i < bytes.size() / 32; ++i) {
    float v[8];
    std::memcpy(v, bytes.data() + 32 * i, sizeof v);
    const Box3D b{v[1], v[2], v[3], v[4], v[5], v[6], normalize_yaw(v[7]), Frame::lidar};
    if (!std::isfinite(v[0]) || !is_valid(b)) throw ParseError(source + ": invalid record " + std::to_string(i));
    out.confidence.push_back(v[0]);
    out.boxes.push_back(b);
  }
  return out;
}

/// Format chosen by extension: ".csv" is text, anything else binary.
inline PointPredictions read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return path.extension() == ".csv" ? parse_predictions_csv(bytes, path.string())
                                    : decode_predictions_binary(bytes, path.string());
}

inline void write_predictions(const std::filesystem::path& path, const PointPredictions& p) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::string data = path.extension() == ".csv" ? format_predictions_csv(p) : encode_predictions_binary(p);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace psadet::fpc
