#pragma once

#include <span>
#include <string>
#include <vector>

#include "ego3d/cogmap.hpp"
#include "ego3d/perception.hpp"
#include "ego3d/scaling.hpp"

namespace ego3d::pipeline {

struct PipelineOptions {
  perception::LocateOptions locate;
  bool relational_scaling = true;
  std::vector<scaling::ReferenceClass> reference_classes = scaling::default_reference_classes();
};

struct PipelineResult {
  cogmap::CognitiveMap map;
  perception::LocateResult located;  // unscaled, including reference-class detections
};

/// Detection, depth, back-projection, relational scaling and map building in
/// one call. Reference-class names are queried alongside `expressions` to
/// estimate the scale; detections that only matched a reference class are
/// left out of the map. Without any usable reference the map is unscaled
/// and carries a warning.
PipelineResult build_cognitive_map(std::span<const perception::ViewImage> images,
                                   std::span<const std::string> expressions,
                                   std::span<const geometry::CameraCalibration> calib,
                                   perception::RecBackend& rec, perception::DepthBackend& depth,
                                   const PipelineOptions& opts = {});

}  // namespace ego3d::pipeline
