#include "ego3d/oracle.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ego3d/errors.hpp"

namespace ego3d::qa {

using geometry::GlobalPoint;

namespace {

GlobalPoint scaled(const GlobalPoint& p, double s) { return {p.x * s, p.y * s, p.z * s}; }

GlobalPoint object_center(const QAItem& item, const SceneSource& scene, std::size_t slot,
                          double s) {
  if (slot >= item.meta.object_ids.size()) {
    throw ValidationError(fmt::format("{}: missing object slot {}", item.id, slot + 1));
  }
  const auto* o = find_object(scene, item.meta.object_ids[slot]);
  if (o == nullptr) {
    throw ValidationError(fmt::format("{}: object '{}' not in scene '{}'", item.id,
                                      item.meta.object_ids[slot], scene.scene_id));
  }
  return scaled(o->center, s);
}

std::size_t nearest_option(const std::vector<double>& values, double v) {
  std::size_t best = 0;
  double err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::abs(values[i] - v) < err) {
      err = std::abs(values[i] - v);
      best = i;
    }
  }
  return best;
}

}  // namespace

OracleAnswer oracle_answer(const QAItem& item, const SceneSource& scene, double scale) {
  if (!(scale > 0.0)) throw DomainError("oracle scale must be positive");
  const GlobalPoint ego{0.0, 0.0, 0.0};
  const bool ego_view = item.perspective == Perspective::Ego;
  OracleAnswer ans;
  switch (item.category) {
    case Category::AbsDist: {
      const GlobalPoint a = object_center(item, scene, 0, scale);
      const GlobalPoint b = ego_view ? ego : object_center(item, scene, 1, scale);
      ans.value = geometry::distance(a, b);
      if (item.form == Form::MultiChoice) ans.index = nearest_option(item.option_values, ans.value);
      break;
    }
    case Category::RelDist: {
      const GlobalPoint anchor = ego_view ? ego : object_center(item, scene, 2, scale);
      const double d1 = geometry::distance(object_center(item, scene, 0, scale), anchor);
      const double d2 = geometry::distance(object_center(item, scene, 1, scale), anchor);
      ans.index = d1 < d2 ? 0 : 1;
      ans.value = std::min(d1, d2);
      break;
    }
    case Category::Localization: {
      const GlobalPoint target = object_center(item, scene, 0, scale);
      const GlobalPoint ref = object_center(item, scene, 1, scale);
      const auto* ref_obj = find_object(scene, item.meta.object_ids[1]);
      double hx = 0.0;
      double hz = 0.0;
      if (item.meta.heading_from_yaw) {
        if (!ref_obj->yaw) throw ValidationError(item.id + ": reference object has no yaw");
        hx = std::sin(*ref_obj->yaw);
        hz = std::cos(*ref_obj->yaw);
      } else {
        const double n = std::hypot(ref.x, ref.z);
        hx = ref.x / n;
        hz = ref.z / n;
      }
      ans.value = relative_bearing_deg(ref, target, hx, hz);
      const auto q = localization_quadrant(ans.value, 0.0);
      if (!q) throw ValidationError(item.id + ": target lies on a quadrant boundary");
      ans.index = *q;
      break;
    }
    case Category::Motion: {
      if (!item.meta.direction || !item.meta.move_m) {
        throw ValidationError(item.id + ": motion item lacks direction or distance");
      }
      const GlobalPoint from = ego_view ? ego : object_center(item, scene, 0, scale);
      const GlobalPoint target = object_center(item, scene, ego_view ? 0 : 1, scale);
      const auto v = direction_vector(*item.meta.direction);
      const double y = *item.meta.move_m * scale;
      const GlobalPoint moved{from.x + y * v[0], from.y + y * v[1], from.z + y * v[2]};
      const bool ground = item.meta.ground_plane.value_or(false);
      const auto dist = ground ? geometry::ground_distance : geometry::distance;
      const double d0 = dist(from, target);
      const double d1 = dist(moved, target);
      ans.index = d1 < d0 ? 0 : 1;
      ans.value = d1 - d0;
      break;
    }
    case Category::TravelTime: {
      if (!item.meta.speed_mps || !(*item.meta.speed_mps > 0.0)) {
        throw ValidationError(item.id + ": travel-time item lacks a speed");
      }
      const GlobalPoint from = ego_view ? ego : object_center(item, scene, 0, scale);
      const GlobalPoint target = object_center(item, scene, ego_view ? 0 : 1, scale);
      ans.value = geometry::distance(from, target) / *item.meta.speed_mps;
      ans.index = nearest_option(item.option_values, ans.value);
      break;
    }
  }
  return ans;
}

std::string oracle_reply(const QAItem& item, const OracleAnswer& answer) {
  std::string final;
  switch (item.form) {
    case Form::MultiChoice: final = std::string(1, static_cast<char>('A' + answer.index)); break;
    case Form::YesNo: final = kYesNoOptions.at(answer.index); break;
    case Form::AbsoluteMeters: final = fmt::format("{} meters", answer.value); break;
  }
  return fmt::format("<think>Computed from scene geometry.</think>\n<answer>{}</answer>", final);
}

SceneIndex index_scenes(std::span<const SceneSource> scenes) {
  SceneIndex out;
  for (const auto& s : scenes) {
    if (!out.emplace(s.scene_id, s).second) {
      throw ValidationError(fmt::format("duplicate scene id '{}'", s.scene_id));
    }
  }
  return out;
}

}  // namespace ego3d::qa
