#pragma once

// KITTI-style 3D detection evaluation: difficulty tiers, greedy one-to-one
// IoU matching, and interpolated average precision over 40 recall positions.
//
// Differences from the official devkit: no DontCare regions, no
// neighboring-class ignores (Van/Car, Person_sitting/Pedestrian), and no
// minimum-height filtering of detections.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"
#include "psadet/kitti_io.hpp"

namespace psadet::eval {

enum class Difficulty { easy = 0, moderate = 1, hard = 2, none = 3 };

inline std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::moderate: return "moderate";
    case Difficulty::hard: return "hard";
    default: return "none";
  }
}

inline Difficulty difficulty_from_string(std::string_view s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "moderate") return Difficulty::moderate;
  if (s == "hard") return Difficulty::hard;
  throw Error("unknown difficulty '" + std::string(s) + "'");
}

/// KITTI devkit tiers (external convention): min 2D height, max occlusion,
/// max truncation for easy / moderate / hard.
struct DifficultyThresholds {
  std::array<double, 3> min_height{40.0, 25.0, 25.0};
  std::array<int, 3> max_occlusion{0, 1, 2};
  std::array<double, 3> max_truncation{0.15, 0.30, 0.50};
};

/// True if the object counts as ground truth at `level` (tiers are cumulative:
/// an easy object also counts for moderate and hard).
inline bool qualifies(const kitti::KittiObject& o, Difficulty level, const DifficultyThresholds& t = {}) {
  if (level == Difficulty::none) return true;
  const auto i = static_cast<std::size_t>(level);
  return o.bbox_height() >= t.min_height[i] && o.occlusion <= t.max_occlusion[i] &&
         o.truncation <= t.max_truncation[i];
}

/// Lowest tier whose predicates all hold.
inline Difficulty assign_difficulty(const kitti::KittiObject& o, const DifficultyThresholds& t = {}) {
  for (Difficulty d : {Difficulty::easy, Difficulty::moderate, Difficulty::hard}) {
    if (qualifies(o, d, t)) return d;
  }
  return Difficulty::none;
}

// ---------------------------------------------------------------------------
// Matching

struct ScoredBox {
  Box3D box;
  double score = 0.0;
};

enum class MatchFlag : std::uint8_t { false_positive = 0, true_positive = 1, ignored = 2 };

struct Assignment {
  std::vector<MatchFlag> flags;         // per detection, input order
  std::vector<long> matched_gt;         // per detection, -1 if unmatched
  std::size_t true_positives = 0;
  std::size_t false_negatives = 0;      // unmatched, non-ignored ground truths
};

/// Detections in descending score (ties: lower index first) each take the
/// unmatched ground truth with the highest iou3d >= threshold (ties: lowest
/// index). Non-ignored ground truths are preferred; a detection that can only
/// match an ignored ground truth is itself ignored.
inline Assignment match_detections(std::span<const ScoredBox> dets, std::span<const Box3D> gts,
                                   double iou_threshold, std::span<const std::uint8_t> gt_ignore = {}) {
  if (!gt_ignore.empty() && gt_ignore.size() != gts.size()) throw Error("match_detections: ignore mask length mismatch");
  auto ignored = [&](std::size_t g) { return !gt_ignore.empty() && gt_ignore[g] != 0; };

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  Assignment res;
  res.flags.assign(dets.size(), MatchFlag::false_positive);
  res.matched_gt.assign(dets.size(), -1);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t d : order) {
    long best = -1;
    double best_iou = -1.0;
    bool best_ignored = true;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double iou = iou3d(dets[d].box, gts[g]);
      if (iou < iou_threshold) continue;
      const bool ign = ignored(g);
      // Prefer valid over ignored, then higher IoU; strict '>' keeps the lowest index on ties.
      const bool better = best < 0 || (best_ignored && !ign) || (best_ignored == ign && iou > best_iou);
      if (better) {
        best = static_cast<long>(g);
        best_iou = iou;
        best_ignored = ign;
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      res.matched_gt[d] = best;
      if (best_ignored) {
        res.flags[d] = MatchFlag::ignored;
      } else {
        res.flags[d] = MatchFlag::true_positive;
        ++res.true_positives;
      }
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!taken[g] && !ignored(g)) ++res.false_negatives;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Average precision

inline constexpr int kRecallPositions = 40;

struct PrPoint {
  double score;
  double recall;
  double precision;
};

struct ApResult {
  double ap = 0.0;
  std::size_t num_gt = 0;
  std::size_t num_det = 0;  // non-ignored detections
  std::size_t num_tp = 0;
  std::vector<PrPoint> curve;                          // one point per distinct score threshold
  std::array<double, kRecallPositions> interpolated{};  // precision at recall j/40, j = 1..40
};

/// Pooled (score, is_tp) pairs from any number of frames.
inline ApResult average_precision_from_flags(std::vector<std::pair<double, bool>> scored, std::size_t num_gt) {
  if (num_gt == 0) throw Error("average_precision_40: no ground truth (recall undefined)");
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  ApResult res;
  res.num_gt = num_gt;
  res.num_det = scored.size();
  std::size_t tp = 0;
  std::vector<std::size_t> tp_at;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    tp += scored[i].second ? 1 : 0;
    // Evaluate only at the end of a run of equal scores: a threshold cannot split ties.
    if (i + 1 < scored.size() && scored[i + 1].first == scored[i].first) continue;
    const double n = static_cast<double>(i + 1);
    res.curve.push_back({scored[i].first, static_cast<double>(tp) / static_cast<double>(num_gt),
                         static_cast<double>(tp) / n});
    tp_at.push_back(tp);
  }
  res.num_tp = tp;
  double sum = 0.0;
  for (int j = 1; j <= kRecallPositions; ++j) {
    double best = 0.0;
    for (std::size_t c = 0; c < res.curve.size(); ++c) {
      // recall >= j/40 evaluated in integers to avoid rounding at the grid points.
      if (tp_at[c] * kRecallPositions >= static_cast<std::size_t>(j) * num_gt) best = std::max(best, res.curve[c].precision);
    }
    res.interpolated[static_cast<std::size_t>(j - 1)] = best;
    sum += best;
  }
  res.ap = sum / kRecallPositions;
  return res;
}

/// Single-frame AP@40 of detections against ground truths.
inline ApResult average_precision_40(std::span<const ScoredBox> dets, std::span<const Box3D> gts,
                                     double iou_threshold, std::span<const std::uint8_t> gt_ignore = {}) {
  const auto a = match_detections(dets, gts, iou_threshold, gt_ignore);
  std::vector<std::pair<double, bool>> scored;
  std::size_t num_gt = 0;
  for (std::size_t g = 0; g < gts.size(); ++g) num_gt += (gt_ignore.empty() || !gt_ignore[g]) ? 1 : 0;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (a.flags[d] == MatchFlag::ignored) continue;
    scored.emplace_back(dets[d].score, a.flags[d] == MatchFlag::true_positive);
  }
  return average_precision_from_flags(std::move(scored), num_gt);
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation

struct EvalConfig {
  std::map<std::string, double, std::less<>> iou_thresholds{{"Car", 0.7}, {"Pedestrian", 0.5}, {"Cyclist", 0.5}};
  DifficultyThresholds difficulty;
  Frame matching_frame = Frame::lidar;

  double threshold_for(std::string_view cls) const {
    const auto it = iou_thresholds.find(cls);
    if (it == iou_thresholds.end()) throw Error("no IoU threshold configured for class '" + std::string(cls) + "'");
    if (!(it->second > 0.0 && it->second <= 1.0)) throw Error("IoU threshold must be in (0, 1]");
    return it->second;
  }
};

struct GroundTruth {
  std::string cls;
  Box3D box;  // lidar frame
  kitti::KittiObject attrs;
};

struct FrameData {
  std::vector<GroundTruth> gts;
  std::vector<kitti::Detection> dets;
};

/// AP@40 for one class and difficulty over all frames. Ground truths of the
/// class that do not qualify for the difficulty are ignored.
inline ApResult evaluate_class(std::span<const FrameData> frames, std::string_view cls, Difficulty level,
                               const EvalConfig& cfg) {
  const double thr = cfg.threshold_for(cls);
  std::vector<std::pair<double, bool>> scored;
  std::size_t num_gt = 0;
  for (const auto& f : frames) {
    std::vector<Box3D> gts;
    std::vector<std::uint8_t> ignore;
    for (const auto& g : f.gts) {
      if (g.cls != cls) continue;
      gts.push_back(g.box);
      const bool ok = qualifies(g.attrs, level, cfg.difficulty);
      ignore.push_back(ok ? 0 : 1);
      num_gt += ok ? 1 : 0;
    }
    std::vector<ScoredBox> dets;
    for (const auto& d : f.dets) {
      if (d.type == cls) dets.push_back({d.box, d.score});
    }
    const auto a = match_detections(dets, gts, thr, ignore);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (a.flags[d] == MatchFlag::ignored) continue;
      scored.emplace_back(dets[d].score, a.flags[d] == MatchFlag::true_positive);
    }
  }
  return average_precision_from_flags(std::move(scored), num_gt);
}

inline std::vector<GroundTruth> ground_truths(std::span<const kitti::KittiObject> labels, const kitti::KittiCalib& calib) {
  std::vector<GroundTruth> out;
  for (const auto& lo : kitti::labels_to_lidar(labels, calib)) out.push_back({lo.type, lo.box, lo.source});
  return out;
}

}  // namespace psadet::eval
