#pragma once

// Seeded synthetic scenes: filled-box objects plus background clutter,
// geometric ray occlusion, and a per-point prediction oracle that stands in
// for a segmentation + box-regression head.
//
// Scene spec file (JSON):
//   {
//     "seed": 7,
//     "sensor_origin": [0, 0, 1.73],
//     "occlusion": true,                       // objects occlude each other
//     "background": {"density": 0.5,           // points / m^3
//                    "extent": [xmin, xmax, ymin, ymax, zmin, zmax]},
//     "objects": [{"class": "Pedestrian",
//                  "box": [cx, cy, cz, dx, dy, dz, yaw],   // lidar frame
//                  "density": 400}],
//     "oracle": {"fg_base": 0.9, "fg_sigma": 0.05, "bg_base": 0.05, "bg_sigma": 0.02,
//                "center_sigma": 0.1, "size_sigma": 0.05, "yaw_sigma": 0.05,
//                "bg_box_size": 0.3, "degrade": 0.3}
//   }

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"
#include "psadet/kitti_io.hpp"
#include "psadet/point_cloud.hpp"
#include "psadet/rng.hpp"

namespace psadet::synth {

// Pedestrian footprint used by default: 0.6 x 0.6 x 1.7 m.
inline constexpr double kPedestrianDx = 0.6;
inline constexpr double kPedestrianDy = 0.6;
inline constexpr double kPedestrianDz = 1.7;

struct ObjectSpec {
  std::string cls = "Pedestrian";
  Box3D box;
  double density = 0.0;  // points per m^3
};

struct Extent {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0, zmin = 0, zmax = 0;
  double volume() const { return std::max(0.0, xmax - xmin) * std::max(0.0, ymax - ymin) * std::max(0.0, zmax - zmin); }
};

struct OracleNoise {
  double fg_base = 0.9;
  double fg_sigma = 0.05;
  double bg_base = 0.05;
  double bg_sigma = 0.02;
  double center_sigma = 0.1;
  double size_sigma = 0.05;
  double yaw_sigma = 0.05;
  double bg_box_size = 0.3;
  double degrade = 0.3;  // confidence multiplier for points of occluded objects

  static OracleNoise none() {
    OracleNoise n;
    n.fg_sigma = n.bg_sigma = n.center_sigma = n.size_sigma = n.yaw_sigma = 0.0;
    n.degrade = 1.0;
    return n;
  }
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  double background_density = 0.0;
  Extent background_extent;
  Point3 sensor_origin{0.0, 0.0, 1.73};
  bool occlusion = true;
  OracleNoise oracle;
  std::uint64_t seed = 0;
};

struct SceneObject {
  std::string cls;
  Box3D box;
  std::size_t points_generated = 0;
  std::size_t points_visible = 0;
  bool occluded = false;  // lost at least one point to occlusion
};

struct Scene {
  PointCloud cloud = PointCloud::with_width(1);  // intensity channel (0)
  std::vector<int> owner;                        // object index or -1 (background)
  std::vector<SceneObject> objects;

  std::vector<Box3D> gt_boxes() const {
    std::vector<Box3D> out;
    for (const auto& o : objects) out.push_back(o.box);
    return out;
  }
};

namespace detail {

inline Point3 sample_in_box(const Box3D& b, Rng& rng) {
  const double lx = rng.uniform(-0.5, 0.5) * b.dx;
  const double ly = rng.uniform(-0.5, 0.5) * b.dy;
  const double lz = rng.uniform(-0.5, 0.5) * b.dz;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return {b.cx + c * lx - s * ly, b.cy + s * lx + c * ly, b.cz + lz};
}

// Closed slab test of the segment [a, b] against the box.
inline bool segment_hits_box(const Point3& a, const Point3& b, const Box3D& box) {
  const Point3 la = to_box_local(a, box);
  const Point3 lb = to_box_local(b, box);
  const double o[3] = {la.x, la.y, la.z};
  const double d[3] = {lb.x - la.x, lb.y - la.y, lb.z - la.z};
  const double half[3] = {0.5 * box.dx, 0.5 * box.dy, 0.5 * box.dz};
  double t0 = 0.0, t1 = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (std::abs(o[k]) > half[k]) return false;
      continue;
    }
    double ta = (-half[k] - o[k]) / d[k];
    double tb = (half[k] - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace detail

/// Samples each object box uniformly (Poisson count from density * volume)
/// and background clutter uniformly in the extent, outside every object box.
inline Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Scene scene;
  for (std::size_t oi = 0; oi < spec.objects.size(); ++oi) {
    const auto& o = spec.objects[oi];
    if (!is_valid(o.box)) throw Error("generate_scene: object " + std::to_string(oi) + " has a degenerate box");
    if (!(o.density > 0.0)) throw Error("generate_scene: object " + std::to_string(oi) + " has zero density");
    const std::size_t n = rng.poisson(o.density * o.box.volume());
    const double zero = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      scene.cloud.push_back(detail::sample_in_box(o.box, rng), {&zero, 1});
      scene.owner.push_back(static_cast<int>(oi));
    }
    scene.objects.push_back({o.cls, o.box, n, n, false});
  }
  if (spec.background_density < 0.0) throw Error("generate_scene: negative background density");
  const auto& e = spec.background_extent;
  if (spec.background_density > 0.0 && e.volume() > 0.0) {
    const std::size_t n = rng.poisson(spec.background_density * e.volume());
    const double zero = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Point3 p{rng.uniform(e.xmin, e.xmax), rng.uniform(e.ymin, e.ymax), rng.uniform(e.zmin, e.zmax)};
      const bool inside = std::any_of(spec.objects.begin(), spec.objects.end(),
                                      [&](const ObjectSpec& o) { return point_in_box(p, o.box); });
      if (inside) continue;
      scene.cloud.push_back(p, {&zero, 1});
      scene.owner.push_back(-1);
    }
  }
  return scene;
}

/// Drops every point whose segment to the sensor crosses an occluder box it
/// is not itself inside. Objects that lose points are flagged occluded.
inline Scene simulate_occlusion(const Scene& scene, const Point3& sensor_origin,
                                std::span<const Box3D> occluders) {
  std::vector<std::size_t> keep;
  keep.reserve(scene.cloud.size());
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const Point3& p = scene.cloud[i];
    bool blocked = false;
    for (const auto& occ : occluders) {
      if (point_in_box(p, occ)) continue;
      if (detail::segment_hits_box(p, sensor_origin, occ)) {
        blocked = true;
        break;
      }
    }
    if (!blocked) keep.push_back(i);
  }
  Scene out;
  out.cloud = scene.cloud.select(keep);
  out.objects = scene.objects;
  for (auto& o : out.objects) o.points_visible = 0;
  out.owner.reserve(keep.size());
  for (std::size_t i : keep) {
    out.owner.push_back(scene.owner[i]);
    if (scene.owner[i] >= 0) ++out.objects[static_cast<std::size_t>(scene.owner[i])].points_visible;
  }
  for (std::size_t oi = 0; oi < out.objects.size(); ++oi) {
    auto& o = out.objects[oi];
    o.occluded = scene.objects[oi].occluded || o.points_visible < scene.objects[oi].points_visible;
  }
  return out;
}

/// generate_scene followed, when enabled, by mutual occlusion of the objects.
inline Scene build_scene(const SceneSpec& spec) {
  Scene s = generate_scene(spec, spec.seed);
  if (spec.occlusion && !spec.objects.empty()) {
    const auto boxes = s.gt_boxes();
    s = simulate_occlusion(s, spec.sensor_origin, boxes);
  }
  return s;
}

/// Seed of a scene's oracle predictions, derived from the scene seed.
inline std::uint64_t oracle_seed(const SceneSpec& spec) { return spec.seed + 0x5eed; }

struct OraclePrediction {
  std::vector<double> confidence;
  std::vector<Box3D> boxes;
  std::vector<std::uint8_t> degraded;  // occluded-object corruption applied
};

/// Per-point confidences and boxes. Foreground = inside some GT box (first
/// by index). Foreground confidence clamp(fg_base + N(0, fg_sigma)) scaled by
/// `degrade` for occluded objects; background clamp(bg_base + N(0, bg_sigma)).
/// Foreground boxes are the GT box jittered; background boxes are small cubes
/// centered on the point.
inline OraclePrediction oracle_predictions(const Scene& scene, const OracleNoise& noise, std::uint64_t seed) {
  if (!(noise.bg_base < noise.fg_base)) throw Error("oracle_predictions: bg_base must be below fg_base");
  if (noise.degrade < 0.0 || noise.degrade > 1.0) throw Error("oracle_predictions: degrade must be in [0, 1]");
  if (!(noise.bg_box_size > 0.0)) throw Error("oracle_predictions: bg_box_size must be positive");
  Rng rng(seed);
  OraclePrediction pred;
  const std::size_t n = scene.cloud.size();
  pred.confidence.resize(n);
  pred.boxes.resize(n);
  pred.degraded.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Point3& p = scene.cloud[i];
    std::optional<std::size_t> obj;
    for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
      if (point_in_box(p, scene.objects[oi].box)) {
        obj = oi;
        break;
      }
    }
    if (obj) {
      const auto& o = scene.objects[*obj];
      double c = std::clamp(noise.fg_base + noise.fg_sigma * rng.normal(), 0.0, 1.0);
      if (o.occluded) {
        c *= noise.degrade;
        pred.degraded[i] = 1;
      }
      pred.confidence[i] = c;
      Box3D b = o.box;
      b.cx += noise.center_sigma * rng.normal();
      b.cy += noise.center_sigma * rng.normal();
      b.cz += noise.center_sigma * rng.normal();
      b.dx = std::max(0.05, b.dx + noise.size_sigma * rng.normal());
      b.dy = std::max(0.05, b.dy + noise.size_sigma * rng.normal());
      b.dz = std::max(0.05, b.dz + noise.size_sigma * rng.normal());
      b.yaw = normalize_yaw(b.yaw + noise.yaw_sigma * rng.normal());
      pred.boxes[i] = b;
    } else {
      pred.confidence[i] = std::clamp(noise.bg_base + noise.bg_sigma * rng.normal(), 0.0, 1.0);
      const double s = noise.bg_box_size;
      pred.boxes[i] = Box3D{p.x, p.y, p.z, s, s, s, 0.0, Frame::lidar};
    }
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Canned scenes

/// Pedestrian-sized box filled uniformly; index 0 is the box center so a
/// farthest-point sampler started at 0 picks the center as its first key.
inline PointCloud pedestrian_fixture(double density, std::uint64_t seed, std::vector<std::size_t>* object_indices = nullptr) {
  const Box3D box{0.0, 0.0, 0.5 * kPedestrianDz, kPedestrianDx, kPedestrianDy, kPedestrianDz, 0.0, Frame::lidar};
  Rng rng(seed);
  const std::size_t n = rng.poisson(density * box.volume());
  PointCloud cloud;
  cloud.reserve(n + 1);
  cloud.push_back(box.center());
  for (std::size_t i = 0; i < n; ++i) cloud.push_back(detail::sample_in_box(box, rng));
  if (object_indices) {
    object_indices->resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) (*object_indices)[i] = i;
  }
  return cloud;
}

inline Box3D pedestrian_box(double cx, double cy, double yaw = 0.0) {
  return make_box(cx, cy, 0.5 * kPedestrianDz, kPedestrianDx, kPedestrianDy, kPedestrianDz, yaw);
}

inline Box3D car_box(double cx, double cy, double yaw = 0.0) {
  return make_box(cx, cy, 0.78, 3.9, 1.6, 1.56, yaw);
}

/// Street-like scene for occlusion experiments: a few pedestrians and cars in
/// front of the sensor, and `n_occluded` pedestrians each partially hidden
/// behind a car placed on its line of sight.
inline SceneSpec random_street_spec(std::uint64_t seed, int n_occluded = 1) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  SceneSpec spec;
  spec.seed = seed;
  spec.background_density = 0.5;
  spec.background_extent = {2.0, 40.0, -15.0, 15.0, 0.0, 2.5};
  const Point3 origin = spec.sensor_origin;
  auto overlaps_existing = [&](const Box3D& b) {
    for (const auto& o : spec.objects) {
      const double rr = 0.5 * std::hypot(b.dx, b.dy) + 0.5 * std::hypot(o.box.dx, o.box.dy) + 0.3;
      if (horizontal_distance(b.center(), o.box.center()) < rr) return true;
    }
    return false;
  };
  auto place = [&](auto make, double density, const char* cls, int tries) {
    for (int t = 0; t < tries; ++t) {
      const Box3D b = make(rng.uniform(6.0, 30.0), rng.uniform(-10.0, 10.0), rng.uniform(-std::numbers::pi, std::numbers::pi));
      if (overlaps_existing(b)) continue;
      spec.objects.push_back({cls, b, density});
      return true;
    }
    return false;
  };
  for (int i = 0; i < n_occluded; ++i) {
    for (int t = 0; t < 100; ++t) {
      const double range = rng.uniform(14.0, 28.0);
      const double bearing = rng.uniform(-0.35, 0.35);
      const Box3D ped = pedestrian_box(origin.x + range * std::cos(bearing), origin.y + range * std::sin(bearing),
                                       rng.uniform(-std::numbers::pi, std::numbers::pi));
      // Car on the line of sight, shifted sideways so the cover is partial.
      const double car_range = range * rng.uniform(0.45, 0.6);
      const double lateral = rng.uniform(0.6, 1.3) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      const double cx = origin.x + car_range * std::cos(bearing) - lateral * std::sin(bearing);
      const double cy = origin.y + car_range * std::sin(bearing) + lateral * std::cos(bearing);
      const Box3D car = car_box(cx, cy, bearing + std::numbers::pi / 2);
      if (overlaps_existing(ped) || overlaps_existing(car)) continue;
      spec.objects.push_back({"Pedestrian", ped, 400.0});
      spec.objects.push_back({"Car", car, 60.0});
      break;
    }
  }
  const int n_ped = 2 + static_cast<int>(rng.below(4));
  const int n_car = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < n_ped; ++i) place([](double x, double y, double yaw) { return pedestrian_box(x, y, yaw); }, 400.0, "Pedestrian", 50);
  for (int i = 0; i < n_car; ++i) place([](double x, double y, double yaw) { return car_box(x, y, yaw); }, 60.0, "Car", 50);
  return spec;
}

/// KITTI-like frame for kernel benchmarks: a ground plane with range falloff,
/// walls, poles and objects, randomly sampled to exactly n_points.
inline PointCloud street_cloud(std::uint64_t seed, std::size_t n_points = 16384) {
  Rng rng(seed);
  std::vector<Point3> pts;
  const std::size_t raw = n_points * 2;
  for (std::size_t i = 0; i < raw * 6 / 10; ++i) {  // ground, uniform in range
    const double r = rng.uniform(3.0, 60.0);
    const double a = rng.uniform(-0.8, 0.8);
    pts.push_back({r * std::cos(a), r * std::sin(a), rng.normal(0.0, 0.03)});
  }
  for (std::size_t i = 0; i < raw * 2 / 10; ++i) {  // building facades
    const double side = rng.uniform() < 0.5 ? -12.0 : 12.0;
    pts.push_back({rng.uniform(5.0, 60.0), side + rng.normal(0.0, 0.05), rng.uniform(0.0, 6.0)});
  }
  for (std::size_t i = 0; i < raw / 10; ++i) {  // poles
    const double px = 5.0 + 5.0 * static_cast<double>(rng.below(11));
    const double py = rng.uniform() < 0.5 ? -9.0 : 9.0;
    pts.push_back({px + rng.normal(0.0, 0.05), py + rng.normal(0.0, 0.05), rng.uniform(0.0, 4.0)});
  }
  std::vector<Box3D> objs;
  for (int i = 0; i < 12; ++i) {
    const double x = rng.uniform(6.0, 40.0), y = rng.uniform(-8.0, 8.0);
    objs.push_back(i % 2 ? car_box(x, y, rng.uniform(-3.0, 3.0)) : pedestrian_box(x, y, rng.uniform(-3.0, 3.0)));
  }
  while (pts.size() < raw) pts.push_back(detail::sample_in_box(objs[rng.below(objs.size())], rng));
  // Subsample without replacement to the requested size.
  for (std::size_t i = 0; i < n_points; ++i) std::swap(pts[i], pts[i + rng.below(pts.size() - i)]);
  pts.resize(n_points);
  std::vector<double> intensity(n_points);
  for (auto& v : intensity) v = rng.uniform();
  return PointCloud(std::move(pts), 1, std::move(intensity));
}

// ---------------------------------------------------------------------------
// Spec file I/O and KITTI export

inline Box3D box_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 7) throw ParseError("scene spec: box needs 7 numbers [cx, cy, cz, dx, dy, dz, yaw]");
  return make_box(v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
}

inline SceneSpec spec_from_json(const nlohmann::json& j) {
  try {
    SceneSpec s;
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("sensor_origin")) {
      const auto o = j.at("sensor_origin").get<std::vector<double>>();
      if (o.size() != 3) throw ParseError("scene spec: sensor_origin needs 3 numbers");
      s.sensor_origin = {o[0], o[1], o[2]};
    }
    s.occlusion = j.value("occlusion", true);
    if (j.contains("background")) {
      const auto& bg = j.at("background");
      s.background_density = bg.value("density", 0.0);
      if (bg.contains("extent")) {
        const auto e = bg.at("extent").get<std::vector<double>>();
        if (e.size() != 6) throw ParseError("scene spec: background.extent needs 6 numbers");
        s.background_extent = {e[0], e[1], e[2], e[3], e[4], e[5]};
      }
    }
    for (const auto& o : j.value("objects", nlohmann::json::array())) {
      s.objects.push_back({o.value("class", std::string("Pedestrian")), box_from_json(o.at("box")), o.at("density").get<double>()});
      if (!(s.objects.back().density > 0.0)) throw ParseError("scene spec: object density must be positive");
    }
    if (j.contains("oracle")) {
      const auto& n = j.at("oracle");
      auto& o = s.oracle;
      o.fg_base = n.value("fg_base", o.fg_base);
      o.fg_sigma = n.value("fg_sigma", o.fg_sigma);
      o.bg_base = n.value("bg_base", o.bg_base);
      o.bg_sigma = n.value("bg_sigma", o.bg_sigma);
      o.center_sigma = n.value("center_sigma", o.center_sigma);
      o.size_sigma = n.value("size_sigma", o.size_sigma);
      o.yaw_sigma = n.value("yaw_sigma", o.yaw_sigma);
      o.bg_box_size = n.value("bg_box_size", o.bg_box_size);
      o.degrade = n.value("degrade", o.degrade);
    }
    if (s.background_density < 0.0) throw ParseError("scene spec: negative background density");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene spec: ") + e.what());
  }
}

inline nlohmann::json spec_to_json(const SceneSpec& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"class", o.cls},
                    {"box", {o.box.cx, o.box.cy, o.box.cz, o.box.dx, o.box.dy, o.box.dz, o.box.yaw}},
                    {"density", o.density}});
  }
  const auto& e = s.background_extent;
  const auto& n = s.oracle;
  return {{"seed", s.seed},
          {"sensor_origin", {s.sensor_origin.x, s.sensor_origin.y, s.sensor_origin.z}},
          {"occlusion", s.occlusion},
          {"background", {{"density", s.background_density}, {"extent", {e.xmin, e.xmax, e.ymin, e.ymax, e.zmin, e.zmax}}}},
          {"objects", objs},
          {"oracle",
           {{"fg_base", n.fg_base}, {"fg_sigma", n.fg_sigma}, {"bg_base", n.bg_base}, {"bg_sigma", n.bg_sigma},
            {"center_sigma", n.center_sigma}, {"size_sigma", n.size_sigma}, {"yaw_sigma", n.yaw_sigma},
            {"bg_box_size", n.bg_box_size}, {"degrade", n.degrade}}}};
}

/// KITTI occlusion level from the visible fraction of an object's points.
inline int occlusion_level(const SceneObject& o) {
  if (o.points_generated == 0 || o.points_visible == o.points_generated) return 0;
  const double visible = static_cast<double>(o.points_visible) / static_cast<double>(o.points_generated);
  if (visible >= 0.6) return 1;
  if (visible >= 0.2) return 2;
  return 3;
}

/// Label rows (camera frame) for the scene's objects.
inline std::vector<kitti::KittiObject> scene_labels(const Scene& scene, const kitti::KittiCalib& calib) {
  std::vector<kitti::KittiObject> out;
  for (const auto& o : scene.objects) {
    auto obj = kitti::detection_to_object({o.cls, o.box, 0.0}, calib);
    obj.score.reset();
    // Clip the 2D box to the image; truncation is the fraction cut off.
    const double area = (obj.right - obj.left) * (obj.bottom - obj.top);
    obj.left = std::clamp(obj.left, 0.0, static_cast<double>(kitti::kImageWidth - 1));
    obj.right = std::clamp(obj.right, 0.0, static_cast<double>(kitti::kImageWidth - 1));
    obj.top = std::clamp(obj.top, 0.0, static_cast<double>(kitti::kImageHeight - 1));
    obj.bottom = std::clamp(obj.bottom, 0.0, static_cast<double>(kitti::kImageHeight - 1));
    const double kept = (obj.right - obj.left) * (obj.bottom - obj.top);
    obj.truncation = area > 0.0 ? std::clamp(1.0 - kept / area, 0.0, 1.0) : 1.0;
    obj.occlusion = occlusion_level(o);
    out.push_back(obj);
  }
  return out;
}

}  // namespace psadet::synth
