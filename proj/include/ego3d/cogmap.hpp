#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ego3d/geometry.hpp"
#include "ego3d/scaling.hpp"
#include "ego3d/view.hpp"

namespace ego3d::cogmap {

inline constexpr std::string_view kFrameNote =
    "ego at origin; x: right, y: down, z: forward; units meters";

struct LocatedPoint {
  std::string expression;
  View view = View::Front;
  geometry::GlobalPoint position;
};

struct MapEntry {
  std::string expression;
  View view = View::Front;
  geometry::GlobalPoint position;  // after scaling
  double range = 0.0;              // ‖position‖
  std::size_t match_index = 1;     // k in "(match k of n)"
  std::size_t match_count = 1;     // n: entries sharing this expression
};

struct CognitiveMap {
  std::vector<MapEntry> entries;  // sorted by (ring order, expression, range)
  std::string frame_note{kFrameNote};
  std::optional<scaling::ScaleEstimate> scale;
  std::vector<std::string> warnings;
};

/// Applies `scale` (when present) to every position, computes ranges, sorts,
/// and numbers duplicate expressions.
CognitiveMap build_map(std::span<const LocatedPoint> located,
                       const std::optional<scaling::ScaleEstimate>& scale = std::nullopt);

/// Header line, then one line per entry:
///   Front: 'red sedan' at (0.0, 0.0, 12.0), distance 12.0 m
std::string render_textual(const CognitiveMap& map);

/// Sorted keys, positions and ranges at 0.01 m.
std::string render_json(const CognitiveMap& map);
CognitiveMap parse_json(std::string_view text);

/// Top-down SVG, forward (+z) up and right (+x) right, 10 m range rings.
std::string render_visual(const CognitiveMap& map);

enum class MapFormat { Text, Json, Svg };

MapFormat parse_map_format(std::string_view text);
std::string render(const CognitiveMap& map, MapFormat format);

}  // namespace ego3d::cogmap
