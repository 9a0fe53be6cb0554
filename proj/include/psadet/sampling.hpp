#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"
#include "psadet/point_cloud.hpp"
#include "psadet/rng.hpp"

namespace psadet::sampling {

struct SampleResult {
  std::vector<std::size_t> indices;
};

/// Greedy max-min selection in full 3D Euclidean distance. Each step picks the
/// index maximizing the distance to the already selected prefix; ties go to
/// the lowest index.
inline SampleResult farthest_point_sample(std::span<const Point3> points, std::size_t n_out,
                                          std::size_t start = 0) {
  const std::size_t n = points.size();
  if (n == 0) throw Error("farthest_point_sample: empty cloud");
  if (n_out == 0 || n_out > n) {
    throw Error("farthest_point_sample: n_out=" + std::to_string(n_out) + " outside [1, " +
                std::to_string(n) + "]");
  }
  if (start >= n) throw Error("farthest_point_sample: start index out of range");

  SampleResult out;
  out.indices.reserve(n_out);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::size_t last = start;
  out.indices.push_back(last);
  taken[last] = 1;
  for (std::size_t step = 1; step < n_out; ++step) {
    const Point3 ref = points[last];
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = distance_sq(points[i], ref);
      if (d < min_d[i]) min_d[i] = d;
      if (!taken[i] && min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    }
    last = best;
    taken[last] = 1;
    out.indices.push_back(last);
  }
  return out;
}

inline SampleResult farthest_point_sample(const PointCloud& cloud, std::size_t n_out,
                                          std::size_t start = 0) {
  return farthest_point_sample(cloud.points(), n_out, start);
}

/// Uniform sample without replacement; when n_out exceeds the cloud size every
/// index appears once and the remainder is drawn with replacement.
inline SampleResult random_sample(std::size_t cloud_size, std::size_t n_out, std::uint64_t seed) {
  if (cloud_size == 0) throw Error("random_sample: empty cloud");
  if (n_out == 0) throw Error("random_sample: n_out must be >= 1");
  Rng rng(seed);
  std::vector<std::size_t> idx(cloud_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n_out <= cloud_size) {
    // Partial Fisher-Yates: the first n_out slots are a uniform draw.
    for (std::size_t i = 0; i < n_out; ++i) {
      const std::size_t j = i + rng.below(cloud_size - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(n_out);
  } else {
    rng.shuffle(std::span<std::size_t>(idx));
    idx.reserve(n_out);
    while (idx.size() < n_out) idx.push_back(rng.below(cloud_size));
  }
  return {std::move(idx)};
}

inline SampleResult random_sample(const PointCloud& cloud, std::size_t n_out, std::uint64_t seed) {
  return random_sample(cloud.size(), n_out, seed);
}

}  // namespace psadet::sampling
