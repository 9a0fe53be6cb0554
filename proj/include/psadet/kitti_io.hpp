#pragma once

// KITTI object-benchmark file formats and frame conversion.
//
//   velodyne/*.bin   little-endian float32 (x, y, z, intensity) per point, lidar frame
//   label_2/*.txt    one object per line, 15 fields (16 with a trailing score):
//                    type trunc occ alpha left top right bottom h w l x y z rotation_y [score]
//                    (x, y, z) is the bottom-center in the rectified camera frame
//   calib/*.txt      "KEY: v0 v1 ..." lines; P2 (3x4), R0_rect (3x3), Tr_velo_to_cam (3x4)
//
// Camera -> lidar box conversion (labels_to_lidar):
//   bottom_lidar = Tr_velo_to_cam^-1 * R0_rect^-1 * (x, y, z)
//   center       = bottom_lidar + (0, 0, h/2)
//   (dx, dy, dz) = (l, w, h)
//   yaw          = normalize(-(rotation_y + pi/2))
// and the exact inverse for lidar -> camera.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"
#include "psadet/point_cloud.hpp"
#include "psadet/sampling.hpp"

namespace psadet::kitti {

struct KittiObject {
  std::string type;
  double truncation = 0.0;  // -1 in result files
  int occlusion = 0;        // 0..3; -1 in result files
  double alpha = 0.0;
  double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;
  double h = 0.0, w = 0.0, l = 0.0;
  double x = 0.0, y = 0.0, z = 0.0;
  double rotation_y = 0.0;
  std::optional<double> score;

  bool is_dont_care() const { return type == "DontCare"; }
  double bbox_height() const { return bottom - top; }
};

struct KittiCalib {
  Eigen::Matrix<double, 3, 4> p2 = Eigen::Matrix<double, 3, 4>::Zero();
  Eigen::Matrix3d r0_rect = Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 3, 4> tr_velo_to_cam = Eigen::Matrix<double, 3, 4>::Zero();

  /// Identity rectification and extrinsics; P2 = [I | 0].
  static KittiCalib identity() {
    KittiCalib c;
    c.p2.leftCols<3>().setIdentity();
    c.tr_velo_to_cam.leftCols<3>().setIdentity();
    return c;
  }

  /// Calibration of KITTI training frame 000000: the usual lidar/camera axis
  /// permutation with a slight tilt. Used for bundled fixtures and when no
  /// calibration file is supplied.
  static KittiCalib reference() {
    KittiCalib c;
    c.p2 << 7.215377e+02, 0.0, 6.095593e+02, 4.485728e+01,  //
        0.0, 7.215377e+02, 1.728540e+02, 2.163791e-01,      //
        0.0, 0.0, 1.0, 2.745884e-03;
    c.r0_rect << 9.999239e-01, 9.837760e-03, -7.445048e-03,  //
        -9.869795e-03, 9.999421e-01, -4.278459e-03,          //
        7.402527e-03, 4.351614e-03, 9.999631e-01;
    c.tr_velo_to_cam << 7.533745e-03, -9.999714e-01, -6.166020e-04, -4.069766e-03,  //
        1.480249e-02, 7.280733e-04, -9.998902e-01, -7.631618e-02,                   //
        9.998621e-01, 7.523790e-03, 1.480755e-02, -2.717806e-01;
    return c;
  }

  RigidTransform velo_to_cam() const {
    return RigidTransform::from(tr_velo_to_cam.leftCols<3>(), tr_velo_to_cam.col(3), 1e-4);
  }
  RigidTransform rect() const { return RigidTransform::from(r0_rect, Eigen::Vector3d::Zero(), 1e-4); }

  /// Lidar -> rectified camera.
  RigidTransform velo_to_rect() const { return rect() * velo_to_cam(); }
  /// Exact matrix inverse; published rotations are only orthonormal to ~1e-6.
  RigidTransform rect_to_velo() const {
    const RigidTransform f = velo_to_rect();
    const Eigen::Matrix3d ri = f.rotation.inverse();
    return {ri, -ri * f.translation};
  }
};

inline constexpr int kImageWidth = 1242;
inline constexpr int kImageHeight = 375;

// ---------------------------------------------------------------------------
// Point clouds

inline PointCloud decode_point_cloud(std::span<const char> bytes, const std::string& source = "bin") {
  if (bytes.size() % 16 != 0) {
    throw ParseError(source + ": size " + std::to_string(bytes.size()) + " is not a multiple of 16 bytes");
  }
  const std::size_t n = bytes.size() / 16;
  std::vector<Point3> xyz(n);
  std::vector<double> intensity(n);
  for (std::size_t i = 0; i < n; ++i) {
    float v[4];
    std::memcpy(v, bytes.data() + 16 * i, 16);
    xyz[i] = {v[0], v[1], v[2]};
    if (!is_finite(xyz[i])) throw ParseError(source + ": non-finite coordinate at point " + std::to_string(i));
    intensity[i] = v[3];
  }
  return PointCloud(std::move(xyz), 1, std::move(intensity));
}

inline std::string encode_point_cloud(const PointCloud& cloud) {
  std::string buf;
  buf.reserve(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud[i];
    const float v[4] = {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                        cloud.feature_width() > 0 ? static_cast<float>(cloud.feature(i)[0]) : 0.0f};
    buf.append(reinterpret_cast<const char*>(v), 16);
  }
  return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

/// Reads a velodyne scan; intensity becomes the single feature channel.
inline PointCloud read_point_cloud(const std::filesystem::path& path) {
  return decode_point_cloud(read_file(path), path.string());
}

inline void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  write_file(path, encode_point_cloud(cloud));
}

// ---------------------------------------------------------------------------
// Labels

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t b = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

inline std::optional<double> to_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  std::string s(buf);
  // Avoid "-0.00" so formatting is stable under re-parsing.
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace detail

inline KittiObject parse_label_line(std::string_view line, const std::string& source = "label",
                                    std::size_t line_no = 0) {
  const auto f = detail::split_ws(line);
  if (f.size() != 15 && f.size() != 16) {
    throw ParseError(source, line_no, "expected 15 or 16 fields, got " + std::to_string(f.size()));
  }
  auto num = [&](std::size_t i, const char* name) {
    const auto v = detail::to_double(f[i]);
    if (!v) throw ParseError(source, line_no, std::string("malformed ") + name + " '" + std::string(f[i]) + "'");
    return *v;
  };
  KittiObject o;
  o.type = std::string(f[0]);
  o.truncation = num(1, "truncation");
  const double occ = num(2, "occlusion");
  if (occ != std::floor(occ) || occ < -1 || occ > 3) throw ParseError(source, line_no, "occlusion must be an integer in -1..3");
  o.occlusion = static_cast<int>(occ);
  o.alpha = num(3, "alpha");
  o.left = num(4, "left");
  o.top = num(5, "top");
  o.right = num(6, "right");
  o.bottom = num(7, "bottom");
  o.h = num(8, "h");
  o.w = num(9, "w");
  o.l = num(10, "l");
  o.x = num(11, "x");
  o.y = num(12, "y");
  o.z = num(13, "z");
  o.rotation_y = num(14, "rotation_y");
  if (f.size() == 16) o.score = num(15, "score");
  if (o.truncation != -1.0 && (o.truncation < 0.0 || o.truncation > 1.0)) {
    throw ParseError(source, line_no, "truncation outside [0, 1]");
  }
  if (o.right < o.left || o.bottom < o.top) throw ParseError(source, line_no, "inverted 2D box");
  if (!o.is_dont_care() && !(o.h > 0.0 && o.w > 0.0 && o.l > 0.0)) {
    throw ParseError(source, line_no, "non-positive dimensions");
  }
  return o;
}

inline std::vector<KittiObject> parse_labels(std::string_view text, const std::string& source = "label") {
  std::vector<KittiObject> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    if (!detail::split_ws(line).empty()) out.push_back(parse_label_line(line, source, line_no));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

inline std::vector<KittiObject> read_labels(const std::filesystem::path& path) {
  return parse_labels(read_file(path), path.string());
}

/// One label line, 2 decimals (score: 4 decimals), no trailing newline.
inline std::string format_label_line(const KittiObject& o) {
  using detail::fmt;
  std::string s = o.type;
  auto add = [&](const std::string& v) {
    s += ' ';
    s += v;
  };
  add(fmt("%.2f", o.truncation));
  add(std::to_string(o.occlusion));
  for (double v : {o.alpha, o.left, o.top, o.right, o.bottom, o.h, o.w, o.l, o.x, o.y, o.z, o.rotation_y}) {
    add(fmt("%.2f", v));
  }
  if (o.score) add(fmt("%.4f", *o.score));
  return s;
}

inline std::string format_labels(std::span<const KittiObject> objects) {
  std::string s;
  for (const auto& o : objects) {
    s += format_label_line(o);
    s += '\n';
  }
  return s;
}

inline void write_labels(const std::filesystem::path& path, std::span<const KittiObject> objects) {
  write_file(path, format_labels(objects));
}

// ---------------------------------------------------------------------------
// Calibration

inline KittiCalib parse_calib(std::string_view text, const std::string& source = "calib") {
  std::map<std::string, std::vector<double>, std::less<>> entries;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const auto key_parts = detail::split_ws(line.substr(0, colon));
    if (key_parts.size() != 1) continue;
    const std::string key(key_parts[0]);
    std::vector<double> values;
    for (auto tok : detail::split_ws(line.substr(colon + 1))) {
      const auto v = detail::to_double(tok);
      if (!v) throw ParseError(source + ": malformed number '" + std::string(tok) + "' for key " + key);
      values.push_back(*v);
    }
    entries[key] = std::move(values);
  }
  auto get = [&](const char* key, std::size_t count) -> const std::vector<double>& {
    const auto it = entries.find(key);
    if (it == entries.end()) throw ParseError(source + ": missing key " + key);
    if (it->second.size() != count) {
      throw ParseError(source + ": key " + key + " has " + std::to_string(it->second.size()) +
                       " numbers, expected " + std::to_string(count));
    }
    return it->second;
  };
  KittiCalib c;
  const auto& p2 = get("P2", 12);
  const auto& r0 = get("R0_rect", 9);
  const auto& tr = get("Tr_velo_to_cam", 12);
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 4; ++col) {
      c.p2(r, col) = p2[r * 4 + col];
      c.tr_velo_to_cam(r, col) = tr[r * 4 + col];
    }
    for (int col = 0; col < 3; ++col) c.r0_rect(r, col) = r0[r * 3 + col];
  }
  try {
    (void)c.velo_to_rect();
  } catch (const Error& e) {
    throw ParseError(source + ": " + e.what());
  }
  return c;
}

inline KittiCalib read_calib(const std::filesystem::path& path) {
  return parse_calib(read_file(path), path.string());
}

inline std::string format_calib(const KittiCalib& c) {
  std::ostringstream os;
  os.precision(12);
  auto row = [&](const char* key, const auto& m) {
    os << key << ':';
    for (int r = 0; r < m.rows(); ++r)
      for (int col = 0; col < m.cols(); ++col) os << ' ' << m(r, col);
    os << '\n';
  };
  row("P2", c.p2);
  row("R0_rect", c.r0_rect);
  row("Tr_velo_to_cam", c.tr_velo_to_cam);
  return os.str();
}

inline void write_calib(const std::filesystem::path& path, const KittiCalib& c) {
  write_file(path, format_calib(c));
}

// ---------------------------------------------------------------------------
// Frame conversion

struct LidarObject {
  Box3D box;           // lidar frame
  std::string type;
  KittiObject source;  // difficulty attributes live here
};

inline Box3D camera_to_lidar_box(const KittiObject& o, const KittiCalib& calib) {
  const Point3 bottom = calib.rect_to_velo().apply({o.x, o.y, o.z});
  return make_box(bottom.x, bottom.y, bottom.z + 0.5 * o.h, o.l, o.w, o.h,
                  -(o.rotation_y + 0.5 * std::numbers::pi), Frame::lidar);
}

struct CameraBox {
  double x, y, z;     // bottom center, rectified camera frame
  double h, w, l;
  double rotation_y;
};

inline CameraBox lidar_to_camera_box(const Box3D& b, const KittiCalib& calib) {
  if (b.frame != Frame::lidar) throw Error("lidar_to_camera_box: box is not in the lidar frame");
  const Point3 bottom = calib.velo_to_rect().apply({b.cx, b.cy, b.cz - 0.5 * b.dz});
  return {bottom.x, bottom.y, bottom.z, b.dz, b.dy, b.dx,
          normalize_yaw(-b.yaw - 0.5 * std::numbers::pi)};
}

/// Converts every non-DontCare object to a lidar-frame box.
inline std::vector<LidarObject> labels_to_lidar(std::span<const KittiObject> objects, const KittiCalib& calib) {
  std::vector<LidarObject> out;
  for (const auto& o : objects) {
    if (o.is_dont_care()) continue;
    out.push_back({camera_to_lidar_box(o, calib), o.type, o});
  }
  return out;
}

/// Image-plane projection of a lidar point: (u, v, depth).
inline Eigen::Vector3d project_to_image(const Point3& p, const KittiCalib& calib) {
  const Point3 r = calib.velo_to_rect().apply(p);
  const Eigen::Vector3d uvw = calib.p2 * Eigen::Vector4d(r.x, r.y, r.z, 1.0);
  return {uvw.x() / uvw.z(), uvw.y() / uvw.z(), r.z};
}

/// Keeps points with positive depth that project into [0, W) x [0, H).
inline PointCloud fov_filter(const PointCloud& cloud, const KittiCalib& calib, int image_width = kImageWidth,
                             int image_height = kImageHeight) {
  const RigidTransform to_rect = calib.velo_to_rect();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3 r = to_rect.apply(cloud[i]);
    if (!(r.z > 0.0)) continue;
    const Eigen::Vector3d uvw = calib.p2 * Eigen::Vector4d(r.x, r.y, r.z, 1.0);
    if (!(uvw.z() > 0.0)) continue;
    const double u = uvw.x() / uvw.z();
    const double v = uvw.y() / uvw.z();
    if (u >= 0.0 && u < image_width && v >= 0.0 && v < image_height) keep.push_back(i);
  }
  return cloud.select(keep);
}

/// Network input: FOV-filtered points, randomly sampled (seeded) to exactly
/// n_points; clouds smaller than n_points are padded with repeats.
inline PointCloud prepare_input(const PointCloud& cloud, const KittiCalib& calib, std::size_t n_points,
                                std::uint64_t seed) {
  const PointCloud fov = fov_filter(cloud, calib);
  if (fov.empty()) throw Error("prepare_input: no points inside the camera field of view");
  return fov.select(sampling::random_sample(fov.size(), n_points, seed).indices);
}

// ---------------------------------------------------------------------------
// Detections

struct Detection {
  std::string type;
  Box3D box;  // lidar frame
  double score = 0.0;
};

/// KITTI result-format object for a lidar-frame detection. Truncation and
/// occlusion are written as -1 (unknown); the 2D box is the bounding
/// rectangle of the projected corners in front of the camera.
inline KittiObject detection_to_object(const Detection& d, const KittiCalib& calib) {
  const CameraBox cb = lidar_to_camera_box(d.box, calib);
  KittiObject o;
  o.type = d.type;
  o.truncation = -1.0;
  o.occlusion = -1;
  o.h = cb.h;
  o.w = cb.w;
  o.l = cb.l;
  o.x = cb.x;
  o.y = cb.y;
  o.z = cb.z;
  o.rotation_y = cb.rotation_y;
  o.alpha = normalize_yaw(cb.rotation_y - std::atan2(cb.x, cb.z));
  o.score = d.score;
  double u0 = 1e9, v0 = 1e9, u1 = -1e9, v1 = -1e9;
  for (const auto& c : box_corners(d.box)) {
    const Eigen::Vector3d uvd = project_to_image(c, calib);
    if (!(uvd.z() > 0.0)) continue;
    u0 = std::min(u0, uvd.x());
    v0 = std::min(v0, uvd.y());
    u1 = std::max(u1, uvd.x());
    v1 = std::max(v1, uvd.y());
  }
  if (u1 < u0) u0 = v0 = 0.0, u1 = v1 = 1.0;
  o.left = u0;
  o.top = v0;
  o.right = std::max(u1, u0 + 0.01);
  o.bottom = std::max(v1, v0 + 0.01);
  return o;
}

inline void write_detections(const std::filesystem::path& path, std::span<const Detection> dets,
                             const KittiCalib& calib) {
  std::vector<KittiObject> objs;
  objs.reserve(dets.size());
  for (const auto& d : dets) objs.push_back(detection_to_object(d, calib));
  write_labels(path, objs);
}

/// Reads a result file back into lidar-frame detections.
inline std::vector<Detection> read_detections(const std::filesystem::path& path, const KittiCalib& calib) {
  std::vector<Detection> out;
  for (const auto& o : read_labels(path)) {
    if (o.is_dont_care()) continue;
    if (!o.score) throw ParseError(path.string() + ": detection without score");
    out.push_back({o.type, camera_to_lidar_box(o, calib), *o.score});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset layout helpers

inline std::string frame_name(std::size_t id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", id);
  return buf;
}

/// Sorted stems of the files with `extension` in `dir`.
inline std::vector<std::string> list_stems(const std::filesystem::path& dir, std::string_view extension) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == extension) out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace psadet::kitti
