#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "psadet/core_geometry.hpp"

namespace psadet {

/// Ordered points plus an optional fixed-width feature block (row-major,
/// one row of `feature_width` values per point).
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> xyz, std::size_t feature_width = 0,
                      std::vector<double> features = {})
      : xyz_(std::move(xyz)), width_(feature_width), features_(std::move(features)) {
    if (width_ == 0 && features_.empty()) return;
    if (features_.size() != xyz_.size() * width_) {
      throw Error("PointCloud: feature block has " + std::to_string(features_.size()) +
                  " values, expected " + std::to_string(xyz_.size() * width_));
    }
  }

  std::size_t size() const { return xyz_.size(); }
  bool empty() const { return xyz_.empty(); }
  std::size_t feature_width() const { return width_; }

  const Point3& operator[](std::size_t i) const { return xyz_[i]; }
  std::span<const Point3> points() const { return xyz_; }
  std::span<const double> features() const { return features_; }
  std::span<const double> feature(std::size_t i) const {
    return std::span<const double>(features_).subspan(i * width_, width_);
  }

  void push_back(const Point3& p, std::span<const double> f = {}) {
    if (f.size() != width_) throw Error("PointCloud::push_back: feature width mismatch");
    xyz_.push_back(p);
    features_.insert(features_.end(), f.begin(), f.end());
  }

  void reserve(std::size_t n) {
    xyz_.reserve(n);
    features_.reserve(n * width_);
  }

  /// New cloud holding the listed points (duplicates allowed), in order.
  PointCloud select(std::span<const std::size_t> indices) const {
    std::vector<Point3> xyz;
    std::vector<double> feats;
    xyz.reserve(indices.size());
    feats.reserve(indices.size() * width_);
    for (std::size_t i : indices) {
      xyz.push_back(xyz_.at(i));
      auto f = feature(i);
      feats.insert(feats.end(), f.begin(), f.end());
    }
    return PointCloud(std::move(xyz), width_, std::move(feats));
  }

  static PointCloud with_width(std::size_t feature_width) {
    PointCloud c;
    c.width_ = feature_width;
    return c;
  }

 private:
  std::vector<Point3> xyz_;
  std::size_t width_ = 0;
  std::vector<double> features_;
};

}  // namespace psadet
