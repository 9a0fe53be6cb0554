#pragma once

// Geometric substrate: points, oriented boxes, rigid transforms, distances,
// containment and rotated-box IoU.
//
// Yaw convention (used everywhere in the library): yaw is a rotation about +z,
// counterclockwise when viewed from above, normalized to (-pi, pi]. A box's
// local frame has its origin at the box center with x' along the dx extent.
// For camera-frame boxes the same arithmetic applies to the stored numbers;
// the frame tag only guards against mixing frames.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "psadet/error.hpp"

namespace psadet {

enum class Frame { lidar, camera };

inline std::string_view to_string(Frame f) { return f == Frame::lidar ? "lidar" : "camera"; }

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

/// Wraps an angle into (-pi, pi].
inline double normalize_yaw(double yaw) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::remainder(yaw, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

/// Oriented box. (cx, cy, cz) is the geometric center; dx, dy, dz are full
/// extents along the local axes; yaw rotates the local x axis about +z.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double dx = 1.0, dy = 1.0, dz = 1.0;
  double yaw = 0.0;
  Frame frame = Frame::lidar;

  Point3 center() const { return {cx, cy, cz}; }
  double volume() const { return dx * dy * dz; }
  double bev_area() const { return dx * dy; }

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

inline bool is_valid(const Box3D& b) {
  return std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.cz) &&
         std::isfinite(b.yaw) && b.dx > 0.0 && b.dy > 0.0 && b.dz > 0.0 &&
         std::isfinite(b.dx) && std::isfinite(b.dy) && std::isfinite(b.dz);
}

/// Builds a box with yaw normalized; throws on non-positive extents.
inline Box3D make_box(double cx, double cy, double cz, double dx, double dy, double dz,
                      double yaw = 0.0, Frame frame = Frame::lidar) {
  Box3D b{cx, cy, cz, dx, dy, dz, normalize_yaw(yaw), frame};
  PSADET_CHECK(is_valid(b), "make_box: extents must be positive and values finite");
  return b;
}

inline void require_same_frame(const Box3D& a, const Box3D& b, const char* op) {
  if (a.frame != b.frame) {
    throw Error(std::string(op) + ": frame mismatch (" + std::string(to_string(a.frame)) +
                " vs " + std::string(to_string(b.frame)) + ")");
  }
}

// ---------------------------------------------------------------------------
// Rigid transforms

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  /// Throws unless R * R^T is the identity within `tol`.
  static RigidTransform from(const Eigen::Matrix3d& r, const Eigen::Vector3d& t,
                             double tol = 1e-6) {
    const double err = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= tol)) {
      throw Error("RigidTransform: rotation not orthonormal (max |R*R^T - I| = " +
                  std::to_string(err) + ")");
    }
    return {r, t};
  }

  Point3 apply(const Point3& p) const {
    const Eigen::Vector3d q = rotation * Eigen::Vector3d(p.x, p.y, p.z) + translation;
    return {q.x(), q.y(), q.z()};
  }

  RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -rt * translation};
  }

  /// (a * b).apply(p) == a.apply(b.apply(p))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
  }
};

inline std::vector<Point3> transform_points(std::span<const Point3> pts, const RigidTransform& t) {
  std::vector<Point3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(t.apply(p));
  return out;
}

// ---------------------------------------------------------------------------
// Distances and containment

/// Distance in the xy plane; z is ignored.
inline double horizontal_distance(const Point3& p, const Point3& k) {
  const double ddx = p.x - k.x;
  const double ddy = p.y - k.y;
  return std::sqrt(ddx * ddx + ddy * ddy);
}

inline double horizontal_distance_sq(const Point3& p, const Point3& k) {
  const double ddx = p.x - k.x;
  const double ddy = p.y - k.y;
  return ddx * ddx + ddy * ddy;
}

inline double distance_sq(const Point3& p, const Point3& k) {
  const double ddx = p.x - k.x;
  const double ddy = p.y - k.y;
  const double ddz = p.z - k.z;
  return ddx * ddx + ddy * ddy + ddz * ddz;
}

inline double distance(const Point3& p, const Point3& k) { return std::sqrt(distance_sq(p, k)); }

/// Expresses a point in the box's local (center-origin, yaw-unrotated) frame.
inline Point3 to_box_local(const Point3& p, const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double ox = p.x - b.cx;
  const double oy = p.y - b.cy;
  return {c * ox + s * oy, -s * ox + c * oy, p.z - b.cz};
}

/// Closed-box containment test (boundary counts as inside). Frame checks are
/// the caller's job here; see point_in_box_checked.
inline bool point_in_box(const Point3& p, const Box3D& b) {
  const Point3 l = to_box_local(p, b);
  return std::abs(l.x) <= 0.5 * b.dx && std::abs(l.y) <= 0.5 * b.dy &&
         std::abs(l.z) <= 0.5 * b.dz;
}

inline bool point_in_box_checked(const Point3& p, Frame point_frame, const Box3D& b) {
  if (point_frame != b.frame) throw Error("point_in_box: frame mismatch");
  return point_in_box(p, b);
}

/// Corners in canonical order: bottom face (z-) then top face (z+); each face
/// counterclockwise from above starting at local (+dx/2, +dy/2), i.e. local
/// signs (+,+), (-,+), (-,-), (+,-).
inline std::array<Point3, 8> box_corners(const Box3D& b) {
  static constexpr std::array<std::pair<double, double>, 4> kSigns{
      {{1.0, 1.0}, {-1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}}};
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  std::array<Point3, 8> out{};
  for (int face = 0; face < 2; ++face) {
    const double z = b.cz + (face == 0 ? -0.5 : 0.5) * b.dz;
    for (int i = 0; i < 4; ++i) {
      const double lx = kSigns[i].first * 0.5 * b.dx;
      const double ly = kSigns[i].second * 0.5 * b.dy;
      out[face * 4 + i] = {b.cx + c * lx - s * ly, b.cy + s * lx + c * ly, z};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotated IoU via convex polygon clipping

namespace detail {

struct Vec2 {
  double x, y;
};

inline double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Fixed-capacity convex polygon; clipping a quad by a quad yields <= 8 vertices.
struct Poly {
  std::array<Vec2, 16> v{};
  int n = 0;

  void push(const Vec2& p) { v[n++] = p; }

  double area() const {
    double a = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec2& p = v[i];
      const Vec2& q = v[(i + 1) % n];
      a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * std::abs(a);
  }
};

inline constexpr double kAreaEps = 1e-12;

inline Poly bev_polygon(const Box3D& b) {
  const auto corners = box_corners(b);
  Poly p;
  for (int i = 0; i < 4; ++i) p.push({corners[i].x, corners[i].y});
  return p;
}

// Sutherland-Hodgman clip of a convex polygon by a CCW convex clipper.
inline Poly clip(const Poly& subject, const Poly& clipper) {
  Poly out = subject;
  for (int e = 0; e < clipper.n && out.n > 0; ++e) {
    const Vec2 a = clipper.v[e];
    const Vec2 b = clipper.v[(e + 1) % clipper.n];
    Poly in = out;
    out.n = 0;
    for (int i = 0; i < in.n; ++i) {
      const Vec2 cur = in.v[i];
      const Vec2 prev = in.v[(i + in.n - 1) % in.n];
      const double dc = cross(a, b, cur);
      const double dp = cross(a, b, prev);
      const bool cur_in = dc >= -kAreaEps;
      const bool prev_in = dp >= -kAreaEps;
      if (cur_in != prev_in) {
        const double t = dp / (dp - dc);
        out.push({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
      if (cur_in) out.push(cur);
    }
  }
  return out;
}

// Orders a pair canonically so IoU is bitwise symmetric in its arguments.
inline bool box_less(const Box3D& a, const Box3D& b) {
  return std::tie(a.cx, a.cy, a.cz, a.dx, a.dy, a.dz, a.yaw) <
         std::tie(b.cx, b.cy, b.cz, b.dx, b.dy, b.dz, b.yaw);
}

inline void require_iou_inputs(const Box3D& a, const Box3D& b, const char* op) {
  require_same_frame(a, b, op);
  if (!is_valid(a) || !is_valid(b) || a.bev_area() <= kAreaEps || b.bev_area() <= kAreaEps) {
    throw Error(std::string(op) + ": degenerate box");
  }
}

}  // namespace detail

/// Area of the intersection of the two rotated footprints.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const Box3D& lo = detail::box_less(b, a) ? b : a;
  const Box3D& hi = detail::box_less(b, a) ? a : b;
  // Cheap reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(lo.dx, lo.dy);
  const double rb = 0.5 * std::hypot(hi.dx, hi.dy);
  if (horizontal_distance_sq(lo.center(), hi.center()) > (ra + rb) * (ra + rb)) return 0.0;
  const auto inter = detail::clip(detail::bev_polygon(lo), detail::bev_polygon(hi));
  if (inter.n < 3) return 0.0;
  const double area = inter.area();
  return area <= detail::kAreaEps ? 0.0 : area;
}

inline double bev_iou(const Box3D& a, const Box3D& b) {
  detail::require_iou_inputs(a, b, "bev_iou");
  const double inter = bev_intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.bev_area() + b.bev_area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double iou3d(const Box3D& a, const Box3D& b) {
  detail::require_iou_inputs(a, b, "iou3d");
  if (a.dz <= detail::kAreaEps || b.dz <= detail::kAreaEps) throw Error("iou3d: degenerate box");
  const double z_lo = std::max(a.cz - 0.5 * a.dz, b.cz - 0.5 * b.dz);
  const double z_hi = std::min(a.cz + 0.5 * a.dz, b.cz + 0.5 * b.dz);
  const double overlap_z = z_hi - z_lo;
  if (overlap_z <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * overlap_z;
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace psadet
