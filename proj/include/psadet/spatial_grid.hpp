#pragma once

// Uniform-grid bucketing of points for fixed-radius queries. Dim = 2 buckets
// by (x, y) only (vertical columns, used by the pillar query); Dim = 3 buckets
// by (x, y, z) (used by the ball query). Candidates returned by
// for_each_candidate are a superset of every point within `radius` of the
// query under the matching metric; callers apply the exact predicate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"

namespace psadet {

template <int Dim>
class UniformGrid {
  static_assert(Dim == 2 || Dim == 3);

 public:
  UniformGrid(std::span<const Point3> points, double cell_size) : points_(points) {
    PSADET_CHECK(cell_size > 0.0 && std::isfinite(cell_size), "UniformGrid: bad cell size");
    if (points.empty()) return;
    for (int d = 0; d < Dim; ++d) {
      lo_[d] = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (const auto& p : points) {
        lo_[d] = std::min(lo_[d], coord(p, d));
        hi = std::max(hi, coord(p, d));
      }
      extent_[d] = hi - lo_[d];
    }
    // Grow cells until the packed key space fits comfortably in 64 bits.
    cell_ = cell_size;
    for (;;) {
      long double total = 1.0L;
      for (int d = 0; d < Dim; ++d) {
        dims_[d] = static_cast<std::int64_t>(std::floor(extent_[d] / cell_)) + 1;
        total *= static_cast<long double>(dims_[d]);
      }
      if (total < 1e17L) break;
      cell_ *= 2.0;
    }
    inv_cell_ = 1.0 / cell_;
    build();
  }

  double cell_size() const { return cell_; }

  /// Calls fn(index) for every point in the cells overlapping the query's
  /// radius neighborhood. Within each cell indices are ascending.
  template <typename Fn>
  void for_each_candidate(const Point3& q, double radius, Fn&& fn) const {
    if (points_.empty()) return;
    // Slight widening keeps boundary rounding from dropping a cell.
    const double r = radius * (1.0 + 1e-9) + 1e-12;
    std::array<std::int64_t, 3> lo{}, hi{};
    for (int d = 0; d < Dim; ++d) {
      lo[d] = std::max<std::int64_t>(0, cell_of(coord(q, d) - r, d));
      hi[d] = std::min<std::int64_t>(dims_[d] - 1, cell_of(coord(q, d) + r, d));
      if (lo[d] > hi[d]) return;
    }
    if constexpr (Dim == 2) {
      for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y) visit(pack({x, y, 0}), fn);
    } else {
      for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
          for (std::int64_t z = lo[2]; z <= hi[2]; ++z) visit(pack({x, y, z}), fn);
    }
  }

 private:
  static double coord(const Point3& p, int d) { return d == 0 ? p.x : (d == 1 ? p.y : p.z); }

  std::int64_t cell_of(double v, int d) const {
    const double c = std::floor((v - lo_[d]) * inv_cell_);
    if (c < -1.0) return -1;
    if (c > static_cast<double>(dims_[d])) return dims_[d];
    return static_cast<std::int64_t>(c);
  }

  std::uint64_t pack(const std::array<std::int64_t, 3>& c) const {
    std::uint64_t key = static_cast<std::uint64_t>(c[0]);
    for (int d = 1; d < Dim; ++d) key = key * static_cast<std::uint64_t>(dims_[d]) + c[d];
    return key;
  }

  void build() {
    const std::size_t n = points_.size();
    std::vector<std::uint64_t> key(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::array<std::int64_t, 3> c{};
      for (int d = 0; d < Dim; ++d) {
        c[d] = std::clamp<std::int64_t>(cell_of(coord(points_[i], d), d), 0, dims_[d] - 1);
      }
      key[i] = pack(c);
    }
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return key[a] < key[b]; });

    long double total = 1.0L;
    for (int d = 0; d < Dim; ++d) total *= static_cast<long double>(dims_[d]);
    dense_ = total <= static_cast<long double>(std::max<std::size_t>(std::size_t{1} << 22, 4 * n));
    if (dense_) {
      offsets_.assign(static_cast<std::size_t>(total) + 1, 0);
      for (std::size_t i = 0; i < n; ++i) ++offsets_[key[i] + 1];
      std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    } else {
      for (std::size_t i = 0; i < n;) {
        const std::uint64_t k = key[order_[i]];
        std::size_t j = i;
        while (j < n && key[order_[j]] == k) ++j;
        cell_keys_.push_back(k);
        cell_begin_.push_back(static_cast<std::uint32_t>(i));
        i = j;
      }
      cell_begin_.push_back(static_cast<std::uint32_t>(n));
    }
  }

  template <typename Fn>
  void visit(std::uint64_t key, Fn& fn) const {
    std::size_t b, e;
    if (dense_) {
      b = offsets_[key];
      e = offsets_[key + 1];
    } else {
      auto it = std::lower_bound(cell_keys_.begin(), cell_keys_.end(), key);
      if (it == cell_keys_.end() || *it != key) return;
      const auto c = static_cast<std::size_t>(it - cell_keys_.begin());
      b = cell_begin_[c];
      e = cell_begin_[c + 1];
    }
    for (std::size_t i = b; i < e; ++i) fn(static_cast<std::size_t>(order_[i]));
  }

  std::span<const Point3> points_;
  double cell_ = 1.0;
  double inv_cell_ = 1.0;
  std::array<double, 3> lo_{};
  std::array<double, 3> extent_{};
  std::array<std::int64_t, 3> dims_{1, 1, 1};
  std::vector<std::uint32_t> order_;
  bool dense_ = true;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint64_t> cell_keys_;
  std::vector<std::uint32_t> cell_begin_;
};

}  // namespace psadet
