#include "ego3d/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "ego3d/errors.hpp"

namespace ego3d::geometry {

namespace {

bool finite(double v) noexcept { return std::isfinite(v); }

struct SinCos {
  double sin;
  double cos;
};

// sin/cos of an angle given in degrees. On the 45° lattice the table values
// are returned so rig rotations and the 90° field of view come out exact.
SinCos sincos_degrees(double degrees) {
  double reduced = std::fmod(degrees, 360.0);
  if (reduced < 0.0) reduced += 360.0;
  const double octant = reduced / 45.0;
  if (octant == std::floor(octant)) {
    constexpr double r = std::numbers::sqrt2 / 2.0;
    constexpr std::array<double, 8> kSin = {0.0, r, 1.0, r, 0.0, -r, -1.0, -r};
    constexpr std::array<double, 8> kCos = {1.0, r, 0.0, -r, -1.0, -r, 0.0, r};
    const auto k = static_cast<std::size_t>(octant) % 8;
    return {kSin[k], kCos[k]};
  }
  const double rad = degrees_to_radians(reduced);
  return {std::sin(rad), std::cos(rad)};
}

Eigen::Matrix3d rotation_y(const SinCos& sc) {
  Eigen::Matrix3d r;
  r << sc.cos, 0.0, sc.sin,  //
      0.0, 1.0, 0.0,         //
      -sc.sin, 0.0, sc.cos;
  return r;
}

}  // namespace

void BBox2D::validate() const {
  if (!finite(x1) || !finite(y1) || !finite(x2) || !finite(y2)) {
    throw ValidationError("bbox has non-finite coordinates");
  }
  if (!(x1 < x2) || !(y1 < y2)) {
    throw ValidationError(
        fmt::format("invalid bbox [{}, {}, {}, {}]: need x1 < x2 and y1 < y2", x1, y1, x2, y2));
  }
}

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx,  //
      0.0, fy, cy,   //
      0.0, 0.0, 1.0;
  return k;
}

bool Intrinsics::contains(const PixelPoint& p) const noexcept {
  return p.x >= 0.0 && p.y >= 0.0 && p.x <= width && p.y <= height;
}

void Intrinsics::validate() const {
  if (!finite(fx) || !finite(fy) || !finite(cx) || !finite(cy) || !finite(width) ||
      !finite(height)) {
    throw ValidationError("intrinsics have non-finite values");
  }
  if (fx <= 0.0 || fy <= 0.0) throw ValidationError("focal lengths must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw ValidationError(fmt::format(
        "principal point ({}, {}) outside image {}x{}", cx, cy, width, height));
  }
}

void Extrinsics::validate(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw ValidationError("extrinsics have non-finite values");
  }
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  const double ortho_err = (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err > tolerance) {
    throw ValidationError(fmt::format("rotation is not orthonormal (max |RᵀR − I| = {:.3e})",
                                      ortho_err));
  }
  const double det = rotation.determinant();
  if (std::abs(det - 1.0) > tolerance) {
    throw ValidationError(fmt::format("rotation determinant is {} (expected 1)", det));
  }
}

PixelPoint bbox_center(const BBox2D& box) {
  box.validate();
  return {(box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0};
}

CamPoint backproject(const PixelPoint& u, double depth, const Intrinsics& k) {
  if (!finite(u.x) || !finite(u.y) || !finite(depth)) {
    throw ValidationError("backproject: non-finite pixel or depth");
  }
  if (depth <= 0.0) {
    throw DomainError(fmt::format("backproject: depth must be positive, got {}", depth));
  }
  return {depth * (u.x - k.cx) / k.fx, depth * (u.y - k.cy) / k.fy, depth};
}

Projection project(const CamPoint& p, const Intrinsics& k) {
  if (!finite(p.x) || !finite(p.y) || !finite(p.z)) {
    throw ValidationError("project: non-finite point");
  }
  if (p.z <= 0.0) {
    throw BehindCameraError(fmt::format("project: point is behind the camera (z = {})", p.z));
  }
  return {{k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy}, p.z};
}

GlobalPoint to_global(const CamPoint& p, const Extrinsics& e) {
  e.validate();
  return GlobalPoint::from(e.rotation * p.vec() + e.translation);
}

CamPoint to_camera(const GlobalPoint& p, const Extrinsics& e) {
  e.validate();
  return CamPoint::from(e.rotation.transpose() * (p.vec() - e.translation));
}

Extrinsics invert_extrinsics(const Extrinsics& e) {
  e.validate();
  Extrinsics inv;
  inv.rotation = e.rotation.transpose();
  inv.translation = -(inv.rotation * e.translation);
  return inv;
}

Eigen::Matrix3d rotation_about_y(double radians) {
  return rotation_y({std::sin(radians), std::cos(radians)});
}

Eigen::Matrix3d rotation_about_y_degrees(double degrees) {
  return rotation_y(sincos_degrees(degrees));
}

double canonical_yaw_degrees(View v) noexcept { return 45.0 * ring_index(v); }

double degrees_to_radians(double degrees) noexcept {
  return degrees * std::numbers::pi / 180.0;
}

double radians_to_degrees(double radians) noexcept {
  return radians * 180.0 / std::numbers::pi;
}

double focal_from_fov(double image_width, double horizontal_fov_degrees) {
  if (!(horizontal_fov_degrees >= 10.0 && horizontal_fov_degrees <= 170.0)) {
    throw ValidationError(
        fmt::format("field of view must be within [10, 170] degrees, got {}",
                    horizontal_fov_degrees));
  }
  if (!(image_width > 0.0)) throw ValidationError("image width must be positive");
  const SinCos half = sincos_degrees(horizontal_fov_degrees / 2.0);
  return (image_width / 2.0) * half.cos / half.sin;
}

std::vector<CameraCalibration> estimated_calibration(std::span<const View> views,
                                                     ImageSize image_size,
                                                     double horizontal_fov_degrees) {
  if (views.empty()) throw ValidationError("estimated calibration needs at least one view");
  if (std::find(views.begin(), views.end(), View::Front) == views.end()) {
    throw ValidationError("estimated calibration needs the Front view");
  }
  if (!(image_size.height > 0.0)) throw ValidationError("image height must be positive");
  const double f = focal_from_fov(image_size.width, horizontal_fov_degrees);

  std::set<View> seen;
  std::vector<CameraCalibration> out;
  for (View v : kViewRing) {
    if (std::find(views.begin(), views.end(), v) == views.end() || !seen.insert(v).second) {
      continue;
    }
    CameraCalibration c;
    c.view = v;
    c.intrinsics = {f, f, image_size.width / 2.0, image_size.height / 2.0,
                    image_size.width, image_size.height};
    c.extrinsics.rotation = rotation_about_y_degrees(canonical_yaw_degrees(v));
    c.extrinsics.translation.setZero();
    out.push_back(c);
  }
  return out;
}

double distance(const GlobalPoint& a, const GlobalPoint& b) noexcept {
  return (a.vec() - b.vec()).norm();
}

double ground_distance(const GlobalPoint& a, const GlobalPoint& b) noexcept {
  return std::hypot(a.x - b.x, a.z - b.z);
}

double range(const GlobalPoint& p) noexcept { return p.vec().norm(); }

namespace {

double number_at(const nlohmann::json& obj, const char* key) {
  if (!obj.contains(key) || !obj.at(key).is_number()) {
    throw ValidationError(fmt::format("calibration: missing numeric field '{}'", key));
  }
  return obj.at(key).get<double>();
}

std::vector<CameraCalibration> parse_calibration(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("views") || !j.at("views").is_array()) {
    throw ValidationError("calibration: expected an object with a 'views' array");
  }
  std::vector<CameraCalibration> out;
  std::set<View> seen;
  for (const auto& entry : j.at("views")) {
    if (!entry.is_object() || !entry.contains("view") || !entry.at("view").is_string()) {
      throw ValidationError("calibration: every view needs a 'view' label");
    }
    CameraCalibration c;
    c.view = view_from_string(entry.at("view").get<std::string>());
    if (!seen.insert(c.view).second) {
      throw ValidationError(fmt::format("calibration: duplicate view {}", view_id(c.view)));
    }
    if (!entry.contains("intrinsics")) throw ValidationError("calibration: missing intrinsics");
    const auto& in = entry.at("intrinsics");
    c.intrinsics = {number_at(in, "fx"), number_at(in, "fy"),    number_at(in, "cx"),
                    number_at(in, "cy"), number_at(in, "width"), number_at(in, "height")};
    c.intrinsics.validate();

    if (entry.contains("extrinsics")) {
      const auto& ex = entry.at("extrinsics");
      const auto& rot = ex.at("rotation");
      const auto& tr = ex.at("translation");
      if (!rot.is_array() || rot.size() != 3 || !tr.is_array() || tr.size() != 3) {
        throw ValidationError("calibration: rotation must be 3x3 and translation length 3");
      }
      for (int r = 0; r < 3; ++r) {
        if (!rot[r].is_array() || rot[r].size() != 3) {
          throw ValidationError("calibration: rotation rows must have 3 entries");
        }
        for (int col = 0; col < 3; ++col) c.extrinsics.rotation(r, col) = rot[r][col].get<double>();
        c.extrinsics.translation(r) = tr[r].get<double>();
      }
    }
    c.extrinsics.validate();
    if (c.view == View::Front) {
      const double dev = (c.extrinsics.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
      if (dev > 1e-9 || c.extrinsics.translation.cwiseAbs().maxCoeff() > 1e-9) {
        throw ValidationError("calibration: the Front camera defines the global frame and must "
                              "have identity extrinsics");
      }
    }
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return ring_index(a.view) < ring_index(b.view); });
  return out;
}

}  // namespace

std::vector<CameraCalibration> calibration_from_json(const nlohmann::json& j) {
  try {
    return parse_calibration(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("calibration: ") + e.what());
  }
}

nlohmann::json calibration_to_json(std::span<const CameraCalibration> calib) {
  nlohmann::json views = nlohmann::json::array();
  for (const auto& c : calib) {
    nlohmann::json rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) {
      rot.push_back({c.extrinsics.rotation(r, 0), c.extrinsics.rotation(r, 1),
                     c.extrinsics.rotation(r, 2)});
    }
    views.push_back({
        {"view", std::string(view_id(c.view))},
        {"intrinsics",
         {{"fx", c.intrinsics.fx},
          {"fy", c.intrinsics.fy},
          {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy},
          {"width", c.intrinsics.width},
          {"height", c.intrinsics.height}}},
        {"extrinsics",
         {{"rotation", rot},
          {"translation",
           {c.extrinsics.translation.x(), c.extrinsics.translation.y(),
            c.extrinsics.translation.z()}}}},
    });
  }
  return {{"views", views}};
}

std::vector<CameraCalibration> load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open calibration file " + path.string());
  try {
    return calibration_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("calibration file " + path.string() + ": " + e.what());
  }
}

const CameraCalibration* find_calibration(std::span<const CameraCalibration> calib,
                                          View view) noexcept {
  for (const auto& c : calib) {
    if (c.view == view) return &c;
  }
  return nullptr;
}

}  // namespace ego3d::geometry
