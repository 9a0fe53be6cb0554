#pragma once

// Reproducible experiments built from the library modules: group coverage of
// ball vs pillar queries, the fusion-ratio sweep of candidate selection on
// occluded synthetic scenes, and timing of the query/sampling kernels.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "psadet/fpc.hpp"
#include "psadet/grouping.hpp"
#include "psadet/parallel.hpp"
#include "psadet/sampling.hpp"
#include "psadet/synth.hpp"

namespace psadet::experiments {

// ---------------------------------------------------------------------------
// Coverage

struct CoverageRow {
  std::string source;
  std::size_t object = 0;
  std::size_t points = 0;
  grouping::QueryKind query = grouping::QueryKind::ball;
  std::size_t n_keys = 0;
  double radius = 0.0;
  double coverage = 0.0;
};

/// For every object cloud, key count (FPS from index 0) and radius: coverage
/// of the object's points by ball and by pillar groups. Key counts larger than
/// an object are skipped.
inline std::vector<CoverageRow> coverage_sweep(std::span<const PointCloud> objects, const std::string& source,
                                               std::span<const std::size_t> key_counts,
                                               std::span<const double> radii,
                                               std::size_t group_size = grouping::kUnlimited) {
  std::vector<CoverageRow> rows;
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    const auto& obj = objects[oi];
    if (obj.empty()) throw Error("coverage_sweep: object " + std::to_string(oi) + " has no points");
    std::vector<std::size_t> all(obj.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (std::size_t nk : key_counts) {
      if (nk == 0 || nk > obj.size()) continue;
      const auto keys = sampling::farthest_point_sample(obj.points(), nk).indices;
      for (double r : radii) {
        for (auto kind : {grouping::QueryKind::ball, grouping::QueryKind::pillar}) {
          const auto groups = grouping::query(kind, obj.points(), keys, r, group_size);
          rows.push_back({source, oi, obj.size(), kind, nk, r, grouping::group_coverage(all, groups)});
        }
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Fusion-ratio sweep

struct SweepRow {
  double ratio = 0.0;
  std::size_t recalled = 0;
  std::size_t total = 0;
  std::size_t occluded_recalled = 0;
  std::size_t occluded_total = 0;
  std::vector<std::size_t> candidates;  // per scene only; empty in totals

  double recall() const { return total ? static_cast<double>(recalled) / static_cast<double>(total) : 0.0; }
  double occluded_recall() const {
    return occluded_total ? static_cast<double>(occluded_recalled) / static_cast<double>(occluded_total) : 0.0;
  }
};

struct SweepInput {
  std::span<const Point3> points;
  std::span<const double> confidence;
  std::span<const Box3D> boxes;
  std::vector<Box3D> gt_boxes;
  std::vector<std::uint8_t> gt_occluded;
};

/// Per-ratio candidate recall for one scene (centers are estimated once).
inline std::vector<SweepRow> sweep_scene(const SweepInput& in, std::span<const double> ratios, std::size_t top_k) {
  if (in.confidence.size() != in.points.size() || in.boxes.size() != in.points.size()) {
    throw Error("fpc sweep: predictions cover " + std::to_string(in.confidence.size()) + " points, scene has " +
                std::to_string(in.points.size()));
  }
  const auto est = fpc::center_estimation(in.points, in.confidence, in.boxes);
  std::vector<SweepRow> rows;
  for (double r : ratios) {
    const auto fused = fpc::fuse_scores(in.confidence, est.center, r);
    const auto cand = fpc::rank_candidates(fused, top_k);
    SweepRow row;
    row.ratio = r;
    row.candidates = cand;
    for (std::size_t g = 0; g < in.gt_boxes.size(); ++g) {
      const bool hit = std::any_of(cand.begin(), cand.end(),
                                   [&](std::size_t c) { return point_in_box(in.points[c], in.gt_boxes[g]); });
      const bool occ = g < in.gt_occluded.size() && in.gt_occluded[g];
      ++row.total;
      row.recalled += hit;
      row.occluded_total += occ;
      row.occluded_recalled += occ && hit;
    }
    rows.push_back(row);
  }
  return rows;
}

struct SyntheticSweep {
  std::vector<std::uint64_t> scene_seeds;                // scenes used, in order
  std::vector<std::vector<SweepRow>> per_scene;          // [scene][ratio]
  std::vector<SweepRow> total;                           // summed over scenes, per ratio
};

struct SyntheticSweepConfig {
  std::size_t scenes = 100;
  std::uint64_t seed = 0;
  std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t top_k = 16;
  double degrade = 0.3;
  unsigned threads = 1;
};

/// Runs the sweep on `scenes` street scenes that contain at least one occluded
/// object. Candidate seeds are seed, seed+1, ...; seeds whose scene has no
/// occluded object are skipped (and not reported).
inline SyntheticSweep synthetic_sweep(const SyntheticSweepConfig& cfg) {
  // Pick qualifying seeds sequentially so the selection is thread-independent.
  SyntheticSweep out;
  std::vector<synth::Scene> scenes;
  std::vector<synth::SceneSpec> specs;
  for (std::uint64_t s = cfg.seed; out.scene_seeds.size() < cfg.scenes; ++s) {
    if (s - cfg.seed > 100 * cfg.scenes + 100) throw Error("synthetic_sweep: could not find enough occluded scenes");
    auto spec = synth::random_street_spec(s);
    spec.oracle.degrade = cfg.degrade;
    auto scene = synth::build_scene(spec);
    if (std::none_of(scene.objects.begin(), scene.objects.end(), [](const auto& o) { return o.occluded; })) continue;
    out.scene_seeds.push_back(s);
    scenes.push_back(std::move(scene));
    specs.push_back(std::move(spec));
  }
  out.per_scene.resize(scenes.size());
  parallel_for(scenes.size(), cfg.threads, [&](std::size_t i) {
    const auto& scene = scenes[i];
    const auto pred = synth::oracle_predictions(scene, specs[i].oracle, synth::oracle_seed(specs[i]));
    SweepInput in{scene.cloud.points(), pred.confidence, pred.boxes, scene.gt_boxes(), {}};
    for (const auto& o : scene.objects) in.gt_occluded.push_back(o.occluded ? 1 : 0);
    out.per_scene[i] = sweep_scene(in, cfg.ratios, cfg.top_k);
  });
  out.total.resize(cfg.ratios.size());
  for (std::size_t r = 0; r < cfg.ratios.size(); ++r) {
    out.total[r].ratio = cfg.ratios[r];
    for (const auto& sc : out.per_scene) {
      out.total[r].recalled += sc[r].recalled;
      out.total[r].total += sc[r].total;
      out.total[r].occluded_recalled += sc[r].occluded_recalled;
      out.total[r].occluded_total += sc[r].occluded_total;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernel timing

struct TimingRow {
  std::string kernel;  // "fps", "ball_query", "pillar_query"
  std::size_t n_points = 0;
  std::size_t n_keys = 0;
  double radius = 0.0;
  std::size_t group_size = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  std::size_t repeats = 0;
  bool deterministic = true;  // identical output on every repetition
};

namespace detail {

inline std::uint64_t hash_groups(const grouping::GroupIndex& g) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) { h = (h ^ v) * 1099511628211ULL; };
  for (const auto& grp : g.groups) {
    mix(grp.size());
    for (auto i : grp) mix(i);
  }
  return h;
}

template <typename Fn>
TimingRow time_kernel(std::string name, std::size_t repeats, std::size_t warmup, Fn&& run) {
  TimingRow row;
  row.kernel = std::move(name);
  row.repeats = repeats;
  std::vector<double> ms;
  std::uint64_t first = 0;
  for (std::size_t i = 0; i < warmup + repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t h = run();
    const auto t1 = std::chrono::steady_clock::now();
    if (i == 0) first = h;
    row.deterministic = row.deterministic && h == first;
    if (i >= warmup) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  row.min_ms = ms.front();
  row.median_ms = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
  return row;
}

}  // namespace detail

/// Times FPS (cloud -> n_keys) and both queries around those keys.
inline std::vector<TimingRow> bench_kernels(const PointCloud& cloud, std::span<const std::size_t> key_counts,
                                            std::span<const double> radii, std::size_t group_size,
                                            std::size_t repeats = 7, std::size_t warmup = 1, unsigned threads = 1) {
  std::vector<TimingRow> rows;
  for (std::size_t nk : key_counts) {
    std::vector<std::size_t> keys;
    auto fps_row = detail::time_kernel("fps", repeats, warmup, [&] {
      keys = sampling::farthest_point_sample(cloud.points(), nk).indices;
      std::uint64_t h = 0;
      for (auto k : keys) h = h * 31 + k;
      return h;
    });
    fps_row.n_points = cloud.size();
    fps_row.n_keys = nk;
    rows.push_back(fps_row);
    for (double r : radii) {
      for (auto kind : {grouping::QueryKind::ball, grouping::QueryKind::pillar}) {
        auto row = detail::time_kernel(std::string(to_string(kind)) + "_query", repeats, warmup, [&] {
          return detail::hash_groups(grouping::query(kind, cloud.points(), keys, r, group_size, threads));
        });
        row.n_points = cloud.size();
        row.n_keys = nk;
        row.radius = r;
        row.group_size = group_size;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace psadet::experiments
