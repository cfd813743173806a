#include "ego3d/perception.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <set>

#include <fmt/format.h>

#include "ego3d/errors.hpp"

namespace ego3d::perception {

namespace fs = std::filesystem;
using geometry::BBox2D;
using geometry::PixelPoint;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open fixture " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError("fixture " + path.string() + " is not JSON: " + e.what());
  }
}

fs::path scene_fixture_path(const fs::path& dir, const ImageRef& image, std::string_view suffix) {
  const std::string name = image.filename().string() + std::string(suffix);
  const fs::path scene = image.parent_path().filename();
  return scene.empty() ? dir / name : dir / scene / name;
}

}  // namespace

fs::path fixture_path(const fs::path& dir, const ImageRef& image, std::string_view suffix) {
  const fs::path scoped = scene_fixture_path(dir, image, suffix);
  if (fs::exists(scoped)) return scoped;
  return dir / (image.filename().string() + std::string(suffix));
}

std::vector<RawDetection> parse_rec_response(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("detections") || !body.at("detections").is_array()) {
    throw ProtocolError("REC response needs a 'detections' array");
  }
  std::vector<RawDetection> out;
  for (const auto& d : body.at("detections")) {
    if (!d.is_object() || !d.contains("bbox") || !d.at("bbox").is_array() ||
        d.at("bbox").size() != 4 || !d.contains("expression") ||
        !d.at("expression").is_string() || !d.contains("score") || !d.at("score").is_number()) {
      throw ProtocolError("REC detection needs bbox[4], expression and score");
    }
    const auto& b = d.at("bbox");
    for (const auto& v : b) {
      if (!v.is_number()) throw ProtocolError("REC bbox entries must be numbers");
    }
    RawDetection r;
    r.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    r.expression = d.at("expression").get<std::string>();
    r.score = d.at("score").get<double>();
    try {
      r.bbox.validate();
    } catch (const ValidationError& e) {
      throw ProtocolError(std::string("REC returned ") + e.what());
    }
    if (r.expression.empty()) throw ProtocolError("REC detection has an empty expression");
    if (!(r.score >= 0.0 && r.score <= 1.0)) {
      throw ProtocolError(fmt::format("REC score {} outside [0, 1]", r.score));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> parse_depth_response(const nlohmann::json& body, std::size_t expected) {
  if (!body.is_object() || !body.contains("depths") || !body.at("depths").is_array()) {
    throw ProtocolError("depth response needs a 'depths' array");
  }
  const auto& arr = body.at("depths");
  if (arr.size() != expected) {
    throw ProtocolError(
        fmt::format("depth response has {} values for {} points", arr.size(), expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_number()) throw ProtocolError("depth values must be numbers");
    const double d = v.get<double>();
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw ProtocolError(fmt::format("depth backend returned non-positive depth {}", d));
    }
    out.push_back(d);
  }
  return out;
}

std::vector<RawDetection> HttpRecBackend::query(const ImageRef& image,
                                                std::span<const std::string> expressions) {
  nlohmann::json body = {{"image_b64", read_file_base64(image)},
                         {"expressions", std::vector<std::string>(expressions.begin(),
                                                                  expressions.end())}};
  return parse_rec_response(client_.post("/detect", body));
}

std::vector<double> HttpDepthBackend::query(const ImageRef& image,
                                            std::span<const PixelPoint> points) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) pts.push_back({p.x, p.y});
  nlohmann::json body = {{"image_b64", read_file_base64(image)}, {"points", pts}};
  return parse_depth_response(client_.post("/depth", body), points.size());
}

std::vector<RawDetection> FixtureRecBackend::query(const ImageRef& image,
                                                   std::span<const std::string> expressions) {
  const fs::path path = fixture_path(dir_, image, ".rec.json");
  if (!fs::exists(path)) return {};
  std::vector<std::string> wanted;
  for (const auto& e : expressions) wanted.push_back(lower(e));
  std::vector<RawDetection> out;
  for (auto& d : parse_rec_response(read_json(path))) {
    const std::string key = lower(d.expression);
    const bool hit = std::any_of(wanted.begin(), wanted.end(), [&](const std::string& w) {
      return w == key || w.find(key) != std::string::npos;
    });
    if (hit) out.push_back(std::move(d));
  }
  return out;
}

std::vector<double> FixtureDepthBackend::query(const ImageRef& image,
                                               std::span<const PixelPoint> points) {
  const fs::path path = fixture_path(dir_, image, ".depth.json");
  const nlohmann::json fx = read_json(path);
  std::optional<double> fallback;
  if (fx.contains("default_depth")) fallback = fx.at("default_depth").get<double>();
  std::vector<std::array<double, 3>> samples;
  if (fx.contains("samples")) {
    for (const auto& s : fx.at("samples")) {
      samples.push_back({s.at("x").get<double>(), s.at("y").get<double>(),
                         s.at("depth").get<double>()});
    }
  }
  nlohmann::json depths = nlohmann::json::array();
  for (const auto& p : points) {
    std::optional<double> hit;
    for (const auto& s : samples) {
      if (std::abs(s[0] - p.x) <= 1e-6 && std::abs(s[1] - p.y) <= 1e-6) {
        hit = s[2];
        break;
      }
    }
    if (!hit) hit = fallback;
    if (!hit) {
      throw ValidationError(
          fmt::format("depth fixture {} has no sample at ({}, {})", path.string(), p.x, p.y));
    }
    depths.push_back(*hit);
  }
  return parse_depth_response({{"depths", depths}}, points.size());
}

std::vector<Detection> detect(RecBackend& backend, View view, const ImageRef& image,
                              std::span<const std::string> expressions,
                              const DetectOptions& opts) {
  if (expressions.empty()) throw ValidationError("detect: expression list is empty");
  for (const auto& e : expressions) {
    if (e.empty()) throw ValidationError("detect: empty referring expression");
  }
  std::vector<Detection> out;
  for (auto& raw : backend.query(image, expressions)) {
    if (raw.score < opts.score_threshold) continue;
    out.push_back({view, raw.bbox, std::move(raw.expression), raw.score});
  }
  if (opts.best_match_only) {
    std::vector<Detection> best;
    for (auto& d : out) {
      auto it = std::find_if(best.begin(), best.end(),
                             [&](const Detection& b) { return b.expression == d.expression; });
      if (it == best.end()) {
        best.push_back(std::move(d));
      } else if (d.score > it->score) {
        *it = std::move(d);
      }
    }
    out = std::move(best);
  }
  return out;
}

std::vector<DepthSample> depth_at(DepthBackend& backend, View view, const ImageRef& image,
                                  std::span<const PixelPoint> points,
                                  geometry::ImageSize image_size, const DepthOptions& opts) {
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 ||
        p.x > image_size.width || p.y > image_size.height) {
      throw ValidationError(fmt::format("depth query ({}, {}) outside image {}x{}", p.x, p.y,
                                        image_size.width, image_size.height));
    }
  }
  std::vector<DepthSample> out;
  out.reserve(points.size());
  if (points.empty()) return out;

  if (!opts.median_5x5) {
    const auto depths = backend.query(image, points);
    if (depths.size() != points.size()) throw ProtocolError("depth backend returned wrong count");
    for (std::size_t i = 0; i < points.size(); ++i) out.push_back({view, points[i], depths[i]});
    return out;
  }

  constexpr int kWindow = 25;
  std::vector<PixelPoint> probes;
  probes.reserve(points.size() * kWindow);
  for (const auto& p : points) {
    for (int dy = -2; dy <= 2; ++dy) {
      for (int dx = -2; dx <= 2; ++dx) {
        probes.push_back({std::clamp(p.x + dx, 0.0, image_size.width),
                          std::clamp(p.y + dy, 0.0, image_size.height)});
      }
    }
  }
  auto depths = backend.query(image, probes);
  if (depths.size() != probes.size()) throw ProtocolError("depth backend returned wrong count");
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto first = depths.begin() + static_cast<std::ptrdiff_t>(i * kWindow);
    std::nth_element(first, first + kWindow / 2, first + kWindow);
    out.push_back({view, points[i], *(first + kWindow / 2)});
  }
  return out;
}

namespace {

struct ViewResult {
  std::vector<LocatedObject> objects;
};

ViewResult locate_in_view(const ViewImage& vi, std::span<const std::string> expressions,
                          const geometry::CameraCalibration& cal, RecBackend& rec,
                          DepthBackend& depth, const LocateOptions& opts) {
  ViewResult result;
  const auto detections = detect(rec, vi.view, vi.image, expressions, opts.detect);
  if (detections.empty()) return result;

  std::vector<PixelPoint> centers;
  centers.reserve(detections.size());
  for (const auto& d : detections) centers.push_back(geometry::bbox_center(d.bbox));
  const geometry::ImageSize size{cal.intrinsics.width, cal.intrinsics.height};
  const auto samples = depth_at(depth, vi.view, vi.image, centers, size, opts.depth);

  for (std::size_t i = 0; i < detections.size(); ++i) {
    LocatedObject obj;
    obj.expression = detections[i].expression;
    obj.view = vi.view;
    obj.bbox = detections[i].bbox;
    obj.score = detections[i].score;
    obj.depth = samples[i].depth;
    obj.fy = cal.intrinsics.fy;
    obj.camera_point = geometry::backproject(centers[i], obj.depth, cal.intrinsics);
    obj.position = geometry::to_global(obj.camera_point, cal.extrinsics);
    result.objects.push_back(std::move(obj));
  }
  return result;
}

}  // namespace

LocateResult locate_expressions(std::span<const ViewImage> images,
                                std::span<const std::string> expressions,
                                std::span<const geometry::CameraCalibration> calib,
                                RecBackend& rec, DepthBackend& depth,
                                const LocateOptions& opts) {
  if (expressions.empty()) throw ValidationError("locate: expression list is empty");
  LocateResult result;

  std::vector<std::pair<const ViewImage*, const geometry::CameraCalibration*>> work;
  for (const auto& vi : images) {
    const auto* cal = geometry::find_calibration(calib, vi.view);
    if (cal == nullptr) {
      result.warnings.push_back(
          fmt::format("view {} has no calibration; skipped", view_label(vi.view)));
      continue;
    }
    work.emplace_back(&vi, cal);
  }
  std::stable_sort(work.begin(), work.end(), [](const auto& a, const auto& b) {
    return ring_index(a.first->view) < ring_index(b.first->view);
  });

  std::vector<std::future<ViewResult>> pending;
  pending.reserve(work.size());
  for (const auto& [vi, cal] : work) {
    pending.push_back(std::async(std::launch::async, [&, vi = vi, cal = cal] {
      return locate_in_view(*vi, expressions, *cal, rec, depth, opts);
    }));
  }
  // Join everything before rethrowing so no task outlives the references it holds.
  std::exception_ptr first_error;
  for (auto& f : pending) {
    try {
      auto r = f.get();
      for (auto& o : r.objects) result.objects.push_back(std::move(o));
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  std::stable_sort(result.objects.begin(), result.objects.end(),
                   [](const LocatedObject& a, const LocatedObject& b) {
                     if (a.view != b.view) return ring_index(a.view) < ring_index(b.view);
                     return a.expression < b.expression;
                   });
  return result;
}

std::vector<ViewImage> discover_view_images(const fs::path& dir) {
  static const std::set<std::string> kExt = {".jpg", ".jpeg", ".png", ".webp", ".bmp"};
  if (!fs::is_directory(dir)) throw ValidationError("image directory not found: " + dir.string());
  std::vector<ViewImage> out;
  std::set<View> seen;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && kExt.count(lower(entry.path().extension().string()))) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto v = parse_view(f.stem().string());
    if (!v) continue;
    if (!seen.insert(*v).second) {
      throw ValidationError(fmt::format("two images for view {} in {}", view_id(*v), dir.string()));
    }
    out.push_back({*v, f});
  }
  std::sort(out.begin(), out.end(), [](const ViewImage& a, const ViewImage& b) {
    return ring_index(a.view) < ring_index(b.view);
  });
  return out;
}

std::size_t write_synthetic_fixtures(const fs::path& dir, std::span<const ViewImage> images,
                                     std::span<const SyntheticObject> objects,
                                     std::span<const geometry::CameraCalibration> calib,
                                     double depth_scale) {
  if (!(depth_scale > 0.0)) throw DomainError("depth_scale must be positive");
  std::size_t written = 0;
  for (const auto& vi : images) {
    const auto* cal = geometry::find_calibration(calib, vi.view);
    if (cal == nullptr) continue;
    const auto& k = cal->intrinsics;
    nlohmann::json detections = nlohmann::json::array();
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& obj : objects) {
      const auto cam = geometry::to_camera(obj.position, cal->extrinsics);
      if (cam.z <= 0.5) continue;
      const auto proj = geometry::project(cam, k);
      if (!k.contains(proj.pixel)) continue;
      const double half_w = 0.5 * obj.width_m * k.fx / cam.z;
      const double half_h = 0.5 * obj.height_m * k.fy / cam.z;
      const BBox2D box{proj.pixel.x - half_w, proj.pixel.y - half_h, proj.pixel.x + half_w,
                       proj.pixel.y + half_h};
      const PixelPoint center = geometry::bbox_center(box);
      detections.push_back({{"bbox", {box.x1, box.y1, box.x2, box.y2}},
                            {"expression", obj.expression},
                            {"score", obj.score}});
      samples.push_back({{"x", center.x}, {"y", center.y}, {"depth", depth_scale * cam.z}});
      ++written;
    }
    const fs::path rec_path = scene_fixture_path(dir, vi.image, ".rec.json");
    const fs::path depth_path = scene_fixture_path(dir, vi.image, ".depth.json");
    fs::create_directories(rec_path.parent_path());
    std::ofstream(rec_path) << nlohmann::json{{"detections", detections}}.dump(2) << '\n';
    std::ofstream(depth_path) << nlohmann::json{{"samples", samples}}.dump(2) << '\n';
  }
  return written;
}

}  // namespace ego3d::perception
