#include "ego3d/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "ego3d/errors.hpp"

namespace ego3d::pipeline {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

PipelineResult build_cognitive_map(std::span<const perception::ViewImage> images,
                                   std::span<const std::string> expressions,
                                   std::span<const geometry::CameraCalibration> calib,
                                   perception::RecBackend& rec, perception::DepthBackend& depth,
                                   const PipelineOptions& opts) {
  if (expressions.empty()) throw ValidationError("no referring expressions given");

  std::set<std::string> requested;
  for (const auto& e : expressions) requested.insert(lower(e));
  std::map<std::string, std::string> references;  // lowercase -> configured name
  std::vector<std::string> query(expressions.begin(), expressions.end());
  if (opts.relational_scaling) {
    for (const auto& c : opts.reference_classes) {
      references.emplace(lower(c.name), c.name);
      if (!requested.count(lower(c.name))) query.push_back(c.name);
    }
  }

  PipelineResult result;
  result.located =
      perception::locate_expressions(images, query, calib, rec, depth, opts.locate);

  std::vector<scaling::HeightObservation> observations;
  std::vector<cogmap::LocatedPoint> points;
  for (const auto& obj : result.located.objects) {
    const std::string key = lower(obj.expression);
    if (auto ref = references.find(key); ref != references.end()) {
      observations.push_back({ref->second, obj.bbox, obj.depth, obj.fy});
      if (!requested.count(key)) continue;
    }
    points.push_back({obj.expression, obj.view, obj.position});
  }

  std::optional<scaling::ScaleEstimate> scale;
  std::vector<std::string> warnings = result.located.warnings;
  if (opts.relational_scaling) {
    try {
      scale = scaling::estimate_scale(observations, opts.reference_classes);
    } catch (const NoReferenceError& e) {
      warnings.push_back(std::string("relational scaling skipped: ") + e.what());
    }
  }
  result.map = cogmap::build_map(points, scale);
  result.map.warnings = std::move(warnings);
  return result;
}

}  // namespace ego3d::pipeline
