#include "ego3d/cogmap.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ego3d/errors.hpp"

namespace ego3d::cogmap {

using geometry::GlobalPoint;

namespace {

// Fixed-point text without a "-0.0".
std::string fixed(double v, int digits) {
  std::string s = fmt::format("{:.{}f}", v, digits);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

// Nearest multiple of 1/per_unit, as the double closest to that decimal.
double round_to(double v, double per_unit) {
  const double r = std::round(v * per_unit) / per_unit;
  return r == 0.0 ? 0.0 : r;
}

void number_matches(std::vector<MapEntry>& entries) {
  std::map<std::string, std::size_t> totals;
  for (const auto& e : entries) ++totals[e.expression];
  std::map<std::string, std::size_t> seen;
  for (auto& e : entries) {
    e.match_index = ++seen[e.expression];
    e.match_count = totals[e.expression];
  }
}

void sort_entries(std::vector<MapEntry>& entries) {
  std::stable_sort(entries.begin(), entries.end(), [](const MapEntry& a, const MapEntry& b) {
    if (a.view != b.view) return ring_index(a.view) < ring_index(b.view);
    if (a.expression != b.expression) return a.expression < b.expression;
    return a.range < b.range;
  });
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string match_suffix(const MapEntry& e) {
  if (e.match_count <= 1) return {};
  return fmt::format(" (match {} of {})", e.match_index, e.match_count);
}

}  // namespace

CognitiveMap build_map(std::span<const LocatedPoint> located,
                       const std::optional<scaling::ScaleEstimate>& scale) {
  CognitiveMap map;
  map.scale = scale;
  const double s = scale ? scale->factor : 1.0;
  for (const auto& p : located) {
    if (!std::isfinite(p.position.x) || !std::isfinite(p.position.y) ||
        !std::isfinite(p.position.z)) {
      throw ValidationError("cognitive map position is not finite");
    }
    MapEntry e;
    e.expression = p.expression;
    e.view = p.view;
    e.position = scale ? scaling::apply_scale(p.position, s) : p.position;
    e.range = geometry::range(e.position);
    map.entries.push_back(std::move(e));
  }
  sort_entries(map.entries);
  number_matches(map.entries);
  return map;
}

std::string render_textual(const CognitiveMap& map) {
  std::string out = fmt::format("Cognitive map ({})\n", map.frame_note);
  if (map.entries.empty()) {
    out += "no referenced objects detected.\n";
    return out;
  }
  for (const auto& e : map.entries) {
    out += fmt::format("{}: '{}'{} at ({}, {}, {}), distance {} m\n", view_label(e.view),
                       e.expression, match_suffix(e), fixed(e.position.x, 1),
                       fixed(e.position.y, 1), fixed(e.position.z, 1), fixed(e.range, 1));
  }
  return out;
}

std::string render_json(const CognitiveMap& map) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : map.entries) {
    nlohmann::json j = {
        {"expression", e.expression},
        {"view", std::string(view_id(e.view))},
        {"position",
         {round_to(e.position.x, 100.0), round_to(e.position.y, 100.0),
          round_to(e.position.z, 100.0)}},
        {"range", round_to(e.range, 100.0)},
    };
    if (e.match_count > 1) j["match"] = {e.match_index, e.match_count};
    entries.push_back(std::move(j));
  }
  nlohmann::json doc = {{"frame", map.frame_note}, {"entries", entries}};
  if (map.scale) doc["scale"] = scaling::scale_to_json(*map.scale);
  if (!map.warnings.empty()) doc["warnings"] = map.warnings;
  return doc.dump(2) + "\n";
}

CognitiveMap parse_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    CognitiveMap map;
    map.frame_note = doc.at("frame").get<std::string>();
    for (const auto& j : doc.at("entries")) {
      MapEntry e;
      e.expression = j.at("expression").get<std::string>();
      e.view = view_from_string(j.at("view").get<std::string>());
      const auto& p = j.at("position");
      if (!p.is_array() || p.size() != 3) throw ValidationError("map position needs 3 values");
      e.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
      e.range = j.at("range").get<double>();
      map.entries.push_back(std::move(e));
    }
    if (doc.contains("scale")) map.scale = scaling::scale_from_json(doc.at("scale"));
    if (doc.contains("warnings")) map.warnings = doc.at("warnings").get<std::vector<std::string>>();
    sort_entries(map.entries);
    number_matches(map.entries);
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid cognitive map JSON: ") + e.what());
  }
}

std::string render_visual(const CognitiveMap& map) {
  constexpr double kSize = 640.0;
  constexpr double kCenter = kSize / 2.0;
  constexpr double kRadius = 300.0;

  double max_ground = 0.0;
  for (const auto& e : map.entries) {
    max_ground = std::max(max_ground, std::hypot(e.position.x, e.position.z));
  }
  const double outer = std::max(10.0, std::ceil(max_ground / 10.0) * 10.0);
  const double ppm = kRadius / outer;

  std::string out;
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{0}\" "
      "viewBox=\"0 0 {0} {0}\">\n",
      kSize);
  out += fmt::format("  <desc>{}</desc>\n", xml_escape(map.frame_note));
  out += fmt::format("  <rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n",
                     kSize);
  for (double r = 10.0; r <= outer + 1e-9; r += 10.0) {
    out += fmt::format(
        "  <circle cx=\"{0}\" cy=\"{0}\" r=\"{1}\" fill=\"none\" stroke=\"#cccccc\"/>\n", kCenter,
        fixed(r * ppm, 2));
    out += fmt::format(
        "  <text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#999999\">{} m</text>\n",
        fixed(kCenter + 2.0, 2), fixed(kCenter - r * ppm - 2.0, 2), fixed(r, 0));
  }
  out += fmt::format(
      "  <polygon id=\"ego\" points=\"{},{} {},{} {},{}\" fill=\"black\"/>\n", fixed(kCenter, 2),
      fixed(kCenter - 8.0, 2), fixed(kCenter - 6.0, 2), fixed(kCenter + 6.0, 2),
      fixed(kCenter + 6.0, 2), fixed(kCenter + 6.0, 2));
  for (const auto& e : map.entries) {
    const double sx = kCenter + e.position.x * ppm;
    const double sy = kCenter - e.position.z * ppm;
    out += fmt::format("  <circle class=\"entry\" cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"#d62728\"/>\n",
                       fixed(sx, 2), fixed(sy, 2));
    out += fmt::format("  <text x=\"{}\" y=\"{}\" font-size=\"11\">{}{} ({})</text>\n",
                       fixed(sx + 6.0, 2), fixed(sy - 6.0, 2), xml_escape(e.expression),
                       xml_escape(match_suffix(e)), view_label(e.view));
  }
  out += "</svg>\n";
  return out;
}

MapFormat parse_map_format(std::string_view text) {
  if (text == "text" || text == "textual") return MapFormat::Text;
  if (text == "json") return MapFormat::Json;
  if (text == "svg" || text == "visual") return MapFormat::Svg;
  throw ValidationError(fmt::format("unknown map format '{}'", text));
}

std::string render(const CognitiveMap& map, MapFormat format) {
  switch (format) {
    case MapFormat::Text: return render_textual(map);
    case MapFormat::Json: return render_json(map);
    case MapFormat::Svg: return render_visual(map);
  }
  return {};
}

}  // namespace ego3d::cogmap
