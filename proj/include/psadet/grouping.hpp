#pragma once

// Neighborhood queries around key points and the forward-only pillar set
// abstraction layer.
//
// Group construction (shared by ball and pillar queries):
//   * members are the indices whose distance to the key is strictly below the
//     radius (3D Euclidean for balls, horizontal for pillars);
//   * the key's own index is always a member;
//   * with a finite cap, the key plus the lowest-index other members are kept
//     (at most cap entries), stored ascending, then padded with the key index
//     up to exactly cap entries;
//   * with kUnlimited no truncation or padding happens.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"
#include "psadet/mlp.hpp"
#include "psadet/parallel.hpp"
#include "psadet/point_cloud.hpp"
#include "psadet/sampling.hpp"
#include "psadet/spatial_grid.hpp"

namespace psadet::grouping {

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

struct GroupIndex {
  std::vector<std::size_t> keys;                 // key point index per group
  std::vector<std::vector<std::size_t>> groups;  // member indices (padded when capped)
  std::vector<std::size_t> member_counts;        // members before padding

  std::size_t size() const { return groups.size(); }
};

enum class QueryKind { ball, pillar };

inline std::string_view to_string(QueryKind k) { return k == QueryKind::ball ? "ball" : "pillar"; }

namespace detail {

inline void finalize_group(std::vector<std::size_t>& members, std::size_t key, std::size_t cap,
                           std::size_t& count_out) {
  if (cap == kUnlimited || members.size() <= cap) {
    std::sort(members.begin(), members.end());
  } else {
    // Keep the key, then the (cap - 1) lowest other indices.
    std::erase(members, key);
    if (cap > 1) {
      std::nth_element(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cap - 2),
                       members.end());
      members.resize(cap - 1);
    } else {
      members.clear();
    }
    members.push_back(key);
    std::sort(members.begin(), members.end());
  }
  count_out = members.size();
  if (cap != kUnlimited) members.resize(cap, key);
}

template <QueryKind Kind>
GroupIndex run_query(std::span<const Point3> points, std::span<const std::size_t> keys,
                     double radius, std::size_t max_group_size, unsigned threads) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw Error(std::string(to_string(Kind)) + "_query: radius must be positive and finite");
  }
  if (max_group_size == 0) throw Error(std::string(to_string(Kind)) + "_query: max_group_size must be >= 1");
  for (std::size_t k : keys) {
    if (k >= points.size()) throw Error(std::string(to_string(Kind)) + "_query: key index out of range");
  }
  constexpr int kDim = Kind == QueryKind::ball ? 3 : 2;
  const UniformGrid<kDim> grid(points, radius);

  GroupIndex out;
  out.keys.assign(keys.begin(), keys.end());
  out.groups.resize(keys.size());
  out.member_counts.resize(keys.size());
  parallel_for(keys.size(), threads, [&](std::size_t g) {
    const std::size_t key = keys[g];
    const Point3 kp = points[key];
    auto& members = out.groups[g];
    grid.for_each_candidate(kp, radius, [&](std::size_t i) {
      const double d = Kind == QueryKind::ball ? distance(points[i], kp)
                                               : horizontal_distance(points[i], kp);
      if (d < radius) members.push_back(i);
    });
    finalize_group(members, key, max_group_size, out.member_counts[g]);
  });
  return out;
}

}  // namespace detail

/// Groups by 3D Euclidean distance < radius.
inline GroupIndex ball_query(std::span<const Point3> points, std::span<const std::size_t> keys,
                             double radius, std::size_t max_group_size = kUnlimited,
                             unsigned threads = 1) {
  return detail::run_query<QueryKind::ball>(points, keys, radius, max_group_size, threads);
}

/// Groups by horizontal distance < r0; vertically unbounded.
inline GroupIndex pillar_query(std::span<const Point3> points, std::span<const std::size_t> keys,
                               double r0, std::size_t max_group_size = kUnlimited,
                               unsigned threads = 1) {
  return detail::run_query<QueryKind::pillar>(points, keys, r0, max_group_size, threads);
}

inline GroupIndex query(QueryKind kind, std::span<const Point3> points,
                        std::span<const std::size_t> keys, double radius,
                        std::size_t max_group_size = kUnlimited, unsigned threads = 1) {
  return kind == QueryKind::ball ? ball_query(points, keys, radius, max_group_size, threads)
                                 : pillar_query(points, keys, radius, max_group_size, threads);
}

/// Fraction of `object_indices` that appear in at least one group.
inline double group_coverage(std::span<const std::size_t> object_indices, const GroupIndex& groups) {
  if (object_indices.empty()) throw Error("group_coverage: empty object set");
  std::vector<std::size_t> covered;
  for (const auto& g : groups.groups) covered.insert(covered.end(), g.begin(), g.end());
  std::sort(covered.begin(), covered.end());
  covered.erase(std::unique(covered.begin(), covered.end()), covered.end());
  std::vector<std::size_t> objects(object_indices.begin(), object_indices.end());
  std::sort(objects.begin(), objects.end());
  objects.erase(std::unique(objects.begin(), objects.end()), objects.end());
  std::size_t hit = 0;
  for (std::size_t i : objects) hit += std::binary_search(covered.begin(), covered.end(), i) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(objects.size());
}

// ---------------------------------------------------------------------------
// PointNet aggregation and the PSA layer

/// Shared MLP over (member - key, member features) followed by a channel-wise
/// max over members.
inline std::vector<double> pointnet_aggregate(const PointCloud& cloud,
                                              std::span<const std::size_t> members,
                                              const Point3& key, const MlpSpec& mlp) {
  if (members.empty()) throw Error("pointnet_aggregate: empty group");
  const std::size_t in_width = 3 + cloud.feature_width();
  if (mlp.input_width() != in_width) {
    throw Error("pointnet_aggregate: mlp expects " + std::to_string(mlp.input_width()) +
                " inputs, group provides " + std::to_string(in_width));
  }
  std::vector<double> result(mlp.output_width(), -std::numeric_limits<double>::infinity());
  std::vector<double> input(in_width), out, scratch;
  for (std::size_t m : members) {
    const Point3& p = cloud[m];
    input[0] = p.x - key.x;
    input[1] = p.y - key.y;
    input[2] = p.z - key.z;
    const auto f = cloud.feature(m);
    std::copy(f.begin(), f.end(), input.begin() + 3);
    mlp.forward(input, out, scratch);
    for (std::size_t c = 0; c < out.size(); ++c) result[c] = std::max(result[c], out[c]);
  }
  return result;
}

struct GroupingBranch {
  double radius = 0.1;
  std::size_t max_group_size = 16;
  MlpSpec mlp;
  QueryKind query = QueryKind::pillar;
};

/// One set-abstraction layer. A single branch is the default; several branches
/// (multi-scale grouping) concatenate their outputs in order.
struct PsaLayerConfig {
  std::size_t n_keys = 0;
  std::vector<GroupingBranch> branches;

  std::size_t output_width() const {
    std::size_t w = 0;
    for (const auto& b : branches) w += b.mlp.output_width();
    return w;
  }
};

struct PsaLayerOutput {
  std::vector<std::size_t> key_indices;  // into the layer's input cloud
  PointCloud keys;                       // key coordinates + aggregated features
};

inline PsaLayerOutput psa_layer(const PointCloud& cloud, const PsaLayerConfig& cfg,
                                unsigned threads = 1) {
  if (cfg.branches.empty()) throw Error("psa_layer: no grouping branches");
  if (cfg.n_keys == 0 || cfg.n_keys > cloud.size()) {
    throw Error("psa_layer: n_keys=" + std::to_string(cfg.n_keys) + " invalid for " +
                std::to_string(cloud.size()) + " points");
  }
  PsaLayerOutput out;
  out.key_indices = sampling::farthest_point_sample(cloud.points(), cfg.n_keys).indices;
  const std::size_t width = cfg.output_width();
  std::vector<double> feats(cfg.n_keys * width);
  std::size_t offset = 0;
  for (const auto& branch : cfg.branches) {
    const auto groups = query(branch.query, cloud.points(), out.key_indices, branch.radius,
                              branch.max_group_size, threads);
    parallel_for(cfg.n_keys, threads, [&](std::size_t g) {
      const auto f = pointnet_aggregate(cloud, groups.groups[g], cloud[out.key_indices[g]], branch.mlp);
      std::copy(f.begin(), f.end(), feats.begin() + static_cast<std::ptrdiff_t>(g * width + offset));
    });
    offset += branch.mlp.output_width();
  }
  std::vector<Point3> key_xyz;
  key_xyz.reserve(cfg.n_keys);
  for (std::size_t k : out.key_indices) key_xyz.push_back(cloud[k]);
  out.keys = PointCloud(std::move(key_xyz), width, std::move(feats));
  return out;
}

/// Runs layers in sequence; returns every stage's output.
inline std::vector<PsaLayerOutput> psa_stack(const PointCloud& cloud,
                                             std::span<const PsaLayerConfig> layers,
                                             unsigned threads = 1) {
  std::vector<PsaLayerOutput> stages;
  const PointCloud* current = &cloud;
  for (const auto& cfg : layers) {
    stages.push_back(psa_layer(*current, cfg, threads));
    current = &stages.back().keys;
  }
  return stages;
}

/// Four-layer configuration: key counts 8192/1024/256/64 and radii
/// 0.1/0.5/1.0/2.0 m. Group caps (16/32/32/32) and MLP widths are tunable
/// defaults; weights are random with the given seed.
inline std::vector<PsaLayerConfig> default_psa_stack(std::size_t input_feature_width,
                                                     std::uint64_t seed,
                                                     std::size_t first_layer_keys = 8192) {
  const std::size_t keys[4] = {first_layer_keys, 1024, 256, 64};
  const double radii[4] = {0.1, 0.5, 1.0, 2.0};
  const std::size_t caps[4] = {16, 32, 32, 32};
  const std::size_t hidden[4][2] = {{16, 32}, {32, 64}, {64, 128}, {128, 256}};
  std::vector<PsaLayerConfig> out;
  std::size_t in_width = input_feature_width;
  for (int l = 0; l < 4; ++l) {
    const std::size_t widths[3] = {3 + in_width, hidden[l][0], hidden[l][1]};
    PsaLayerConfig cfg;
    cfg.n_keys = keys[l];
    cfg.branches.push_back({radii[l], caps[l], MlpSpec::random(widths, seed + 101 * (l + 1)),
                            QueryKind::pillar});
    in_width = cfg.output_width();
    out.push_back(std::move(cfg));
  }
  return out;
}

}  // namespace psadet::grouping
