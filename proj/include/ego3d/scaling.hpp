#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ego3d/geometry.hpp"

// Relational scaling: monocular metric depth is often off by a global factor
// outdoors. Objects of classes with a well-known height (people, cars, bikes)
// reveal that factor, and every 3D point is rescaled by canonical/observed.

namespace ego3d::scaling {

struct ReferenceClass {
  std::string name;
  double canonical_height = 0.0;  // meters
};

/// One reference-class detection: its box, the depth sampled at its center,
/// and the vertical focal length of the camera that saw it.
struct HeightObservation {
  std::string class_name;
  geometry::BBox2D bbox;
  double depth = 0.0;  // meters
  double fy = 0.0;     // pixels
};

struct ScaleEstimate {
  double factor = 1.0;
  double h_est = 0.0;  // meters
  std::string class_used;
  std::size_t n_observations = 0;
};

/// Metric height by similar triangles: bbox pixel height · depth / fy.
double observed_height(const HeightObservation& obs);

/// Picks the reference class with the most usable observations (ties go to
/// the taller class), averages the observed heights that fall within
/// [0.3, 3] × canonical height, and returns canonical / average.
/// Throws NoReferenceError when no observation is usable.
ScaleEstimate estimate_scale(std::span<const HeightObservation> observations,
                             std::span<const ReferenceClass> classes);

/// Throws DomainError unless s > 0.
std::vector<geometry::GlobalPoint> apply_scale(std::span<const geometry::GlobalPoint> points,
                                               double s);
geometry::GlobalPoint apply_scale(const geometry::GlobalPoint& p, double s);

/// person 1.7 m, sedan 1.5 m, bike 1.1 m.
std::vector<ReferenceClass> default_reference_classes();

// {"classes":[{"name":"person","canonical_height_m":1.7}, ...]}
std::vector<ReferenceClass> reference_classes_from_json(const nlohmann::json& j);
nlohmann::json reference_classes_to_json(std::span<const ReferenceClass> classes);
std::vector<ReferenceClass> load_reference_classes(const std::filesystem::path& path);

nlohmann::json scale_to_json(const ScaleEstimate& s);
ScaleEstimate scale_from_json(const nlohmann::json& j);

}  // namespace ego3d::scaling
