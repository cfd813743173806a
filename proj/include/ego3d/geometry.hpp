#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "ego3d/view.hpp"

// Frame convention used throughout the library: camera frames are x right,
// y down, z forward along the optical axis. The global frame is the front
// camera's frame, so the ego sits at the origin looking down +z and the
// ground plane is spanned by x and z.

namespace ego3d::geometry {

struct PixelPoint {
  double x = 0.0;  // from the left edge
  double y = 0.0;  // from the top edge
};

struct BBox2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }

  /// Throws ValidationError unless all coordinates are finite, x1 < x2 and y1 < y2.
  void validate() const;
};

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double width = 0.0;   // pixels
  double height = 0.0;  // pixels

  Eigen::Matrix3d matrix() const;
  bool contains(const PixelPoint& p) const noexcept;
  void validate() const;
};

/// Rigid transform from a camera frame into the global (front-camera) frame.
struct Extrinsics {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Extrinsics identity() { return {}; }

  /// RᵀR = I and det(R) = 1, both within `tolerance` per element.
  void validate(double tolerance = 1e-9) const;
};

struct CameraCalibration {
  View view = View::Front;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
};

struct CameraFrame {};
struct GlobalFrame {};

/// A 3D point in meters, tagged with the frame it is expressed in so camera
/// and global coordinates cannot be mixed by accident.
template <typename Frame>
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static Point3 from(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

  friend bool operator==(const Point3&, const Point3&) = default;
};

using CamPoint = Point3<CameraFrame>;
using GlobalPoint = Point3<GlobalFrame>;

struct Projection {
  PixelPoint pixel;
  double depth = 0.0;
};

struct ImageSize {
  double width = 0.0;
  double height = 0.0;
};

PixelPoint bbox_center(const BBox2D& box);

/// d · K⁻¹ · [x, y, 1]ᵀ. Throws DomainError for depth <= 0 and ValidationError
/// for non-finite input.
CamPoint backproject(const PixelPoint& u, double depth, const Intrinsics& k);

/// Pinhole projection; inverse of backproject. Throws BehindCameraError for z <= 0.
Projection project(const CamPoint& p, const Intrinsics& k);

/// R·p + T. Throws ValidationError when the rotation is not orthonormal.
GlobalPoint to_global(const CamPoint& p, const Extrinsics& e);

/// Inverse of to_global: Rᵀ·(p − T).
CamPoint to_camera(const GlobalPoint& p, const Extrinsics& e);

/// (Rᵀ, −Rᵀ·T).
Extrinsics invert_extrinsics(const Extrinsics& e);

/// Rotation about the camera y axis (pointing down). Positive angles turn the
/// optical axis from +z toward +x, i.e. clockwise seen from above.
Eigen::Matrix3d rotation_about_y(double radians);

/// Same rotation from an angle in degrees. Multiples of 45° yield exact
/// entries (0, ±1, ±√½ correctly rounded), so e.g. 180° is exactly diag(-1, 1, -1).
Eigen::Matrix3d rotation_about_y_degrees(double degrees);

/// Canonical yaw of a ring label: ring_index · 45°.
double canonical_yaw_degrees(View v) noexcept;

double degrees_to_radians(double degrees) noexcept;
double radians_to_degrees(double radians) noexcept;

/// Calibration synthesized when the real rig is unknown: every camera at the
/// origin, each rotated by its canonical yaw about y, focal length from the
/// horizontal field of view, principal point at the image center.
/// Requires Front among `views` and 10° <= fov <= 170°.
std::vector<CameraCalibration> estimated_calibration(std::span<const View> views,
                                                     ImageSize image_size,
                                                     double horizontal_fov_degrees);

/// Focal length in pixels for a horizontal field of view.
double focal_from_fov(double image_width, double horizontal_fov_degrees);

/// Euclidean distance in meters.
double distance(const GlobalPoint& a, const GlobalPoint& b) noexcept;

/// Distance projected onto the ground plane (x, z), ignoring height.
double ground_distance(const GlobalPoint& a, const GlobalPoint& b) noexcept;

/// Distance from the ego origin.
double range(const GlobalPoint& p) noexcept;

// Calibration file:
//   {"views":[{"view":"Front",
//              "intrinsics":{"fx":..,"fy":..,"cx":..,"cy":..,"width":..,"height":..},
//              "extrinsics":{"rotation":[[..],[..],[..]],"translation":[..]}}]}
// Rotation is row-major. Parsing validates every camera, rejects duplicate
// views, and requires the Front camera (when present) to be the identity.
std::vector<CameraCalibration> calibration_from_json(const nlohmann::json& j);
nlohmann::json calibration_to_json(std::span<const CameraCalibration> calib);
std::vector<CameraCalibration> load_calibration(const std::filesystem::path& path);

/// Finds the calibration for a view, or nullptr.
const CameraCalibration* find_calibration(std::span<const CameraCalibration> calib,
                                          View view) noexcept;

}  // namespace ego3d::geometry
