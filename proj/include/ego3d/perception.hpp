#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ego3d/geometry.hpp"
#include "ego3d/http.hpp"
#include "ego3d/view.hpp"

namespace ego3d::perception {

using ImageRef = std::filesystem::path;

/// A referring-expression match in one view.
struct Detection {
  View view = View::Front;
  geometry::BBox2D bbox;
  std::string expression;
  double score = 0.0;
};

struct DepthSample {
  View view = View::Front;
  geometry::PixelPoint point;
  double depth = 0.0;  // meters
};

/// What a REC backend returns for one image before view tagging and filtering.
struct RawDetection {
  geometry::BBox2D bbox;
  std::string expression;
  double score = 0.0;
};

class RecBackend {
 public:
  virtual ~RecBackend() = default;
  virtual std::vector<RawDetection> query(const ImageRef& image,
                                          std::span<const std::string> expressions) = 0;
};

class DepthBackend {
 public:
  virtual ~DepthBackend() = default;
  /// One metric depth per point, same order.
  virtual std::vector<double> query(const ImageRef& image,
                                    std::span<const geometry::PixelPoint> points) = 0;
};

// Wire format, REC:
//   POST {base_url}/detect   {"image_b64": "...", "expressions": ["...", ...]}
//   -> {"detections": [{"bbox": [x1, y1, x2, y2], "expression": "...", "score": s}]}
class HttpRecBackend final : public RecBackend {
 public:
  explicit HttpRecBackend(BackendConfig cfg) : client_(std::move(cfg)) {}
  std::vector<RawDetection> query(const ImageRef& image,
                                  std::span<const std::string> expressions) override;

 private:
  JsonHttpClient client_;
};

// Wire format, depth:
//   POST {base_url}/depth   {"image_b64": "...", "points": [[x, y], ...]}
//   -> {"depths": [d, ...]}   (meters)
class HttpDepthBackend final : public DepthBackend {
 public:
  explicit HttpDepthBackend(BackendConfig cfg) : client_(std::move(cfg)) {}
  std::vector<double> query(const ImageRef& image,
                            std::span<const geometry::PixelPoint> points) override;

 private:
  JsonHttpClient client_;
};

/// Offline REC backend. For image ".../<scene>/<name>" it reads
/// "<dir>/<scene>/<name>.rec.json", falling back to "<dir>/<name>.rec.json";
/// the file holds a REC response body. A stored detection is returned when
/// its expression equals a requested one (case-insensitive) or occurs inside
/// a longer requested text. Missing file means no detections.
class FixtureRecBackend final : public RecBackend {
 public:
  explicit FixtureRecBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::vector<RawDetection> query(const ImageRef& image,
                                  std::span<const std::string> expressions) override;

 private:
  std::filesystem::path dir_;
};

/// Offline depth backend reading "<name>.depth.json" (same lookup as the REC
/// fixture): {"default_depth": d, "samples": [{"x": .., "y": .., "depth": ..}]}.
/// A query at a stored pixel (within 1e-6 px) returns the stored depth,
/// anything else returns default_depth; with neither, ValidationError.
class FixtureDepthBackend final : public DepthBackend {
 public:
  explicit FixtureDepthBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::vector<double> query(const ImageRef& image,
                            std::span<const geometry::PixelPoint> points) override;

 private:
  std::filesystem::path dir_;
};

std::filesystem::path fixture_path(const std::filesystem::path& dir, const ImageRef& image,
                                   std::string_view suffix);

std::vector<RawDetection> parse_rec_response(const nlohmann::json& body);
std::vector<double> parse_depth_response(const nlohmann::json& body, std::size_t expected);

struct DetectOptions {
  double score_threshold = 0.35;
  bool best_match_only = false;  // keep only the top-scoring match per expression
};

struct DepthOptions {
  bool median_5x5 = false;  // sample a 5x5 neighbourhood and take the median
};

/// Detections for `expressions` in one view, thresholded. Throws
/// ValidationError for an empty expression list before contacting the backend.
std::vector<Detection> detect(RecBackend& backend, View view, const ImageRef& image,
                              std::span<const std::string> expressions,
                              const DetectOptions& opts = {});

/// Depth samples in request order. Every point must lie inside the image.
std::vector<DepthSample> depth_at(DepthBackend& backend, View view, const ImageRef& image,
                                  std::span<const geometry::PixelPoint> points,
                                  geometry::ImageSize image_size, const DepthOptions& opts = {});

struct ViewImage {
  View view = View::Front;
  ImageRef image;
};

struct LocatedObject {
  std::string expression;
  View view = View::Front;
  geometry::GlobalPoint position;
  geometry::CamPoint camera_point;
  geometry::BBox2D bbox;
  double depth = 0.0;
  double score = 0.0;
  double fy = 0.0;  // focal length of the observing camera
};

struct LocateResult {
  std::vector<LocatedObject> objects;  // sorted by (view ring order, expression)
  std::vector<std::string> warnings;   // e.g. views skipped for lack of calibration
};

struct LocateOptions {
  DetectOptions detect;
  DepthOptions depth;
};

/// Detect every expression in every view, sample depth at each box center,
/// back-project, and move the point into the global frame. Views run
/// concurrently; results are joined in ring order so output is deterministic.
LocateResult locate_expressions(std::span<const ViewImage> images,
                                std::span<const std::string> expressions,
                                std::span<const geometry::CameraCalibration> calib,
                                RecBackend& rec, DepthBackend& depth,
                                const LocateOptions& opts = {});

/// Per-view image files inside a directory, matched by stem ("front.jpg",
/// "CAM_FRONT_LEFT.png", "back-right.jpeg"). Sorted in ring order.
std::vector<ViewImage> discover_view_images(const std::filesystem::path& dir);

/// An object to plant in synthetic fixtures.
struct SyntheticObject {
  std::string expression;
  geometry::GlobalPoint position;
  double height_m = 1.5;
  double width_m = 1.5;
  double score = 0.9;
};

/// Forward-projects each object into every calibrated view and writes REC and
/// depth fixtures for `images` into `dir` (using the same lookup as the
/// fixture backends). Boxes are centered on the projected point; the depth
/// sample at that center is depth_scale · z, which lets tests simulate a
/// globally mis-scaled depth estimator. Returns the number of (object, view)
/// detections written.
std::size_t write_synthetic_fixtures(const std::filesystem::path& dir,
                                     std::span<const ViewImage> images,
                                     std::span<const SyntheticObject> objects,
                                     std::span<const geometry::CameraCalibration> calib,
                                     double depth_scale = 1.0);

}  // namespace ego3d::perception
