#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ego3d/geometry.hpp"
#include "ego3d/rng.hpp"
#include "ego3d/view.hpp"

namespace ego3d::qa {

struct SceneObject {
  std::string id;
  std::string caption;
  geometry::GlobalPoint center;
  std::optional<double> yaw;  // radians; 0 faces +z, positive turns toward +x
  std::optional<std::array<double, 3>> size;  // l, w, h in meters
  std::vector<View> views;                    // ring order
  std::string category;                       // "pedestrian", "cyclist", "vehicle" or empty
};

struct SceneSource {
  std::string scene_id;
  std::vector<SceneObject> objects;
  std::vector<View> rig;
};

// {"scene_id": "...", "rig": ["Front", ...],
//  "objects": [{"id": "...", "caption": "...", "center": [x, y, z],
//               "yaw": rad?, "size": [l, w, h]?, "views": ["Front"], "category": "vehicle"?}]}
SceneSource scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSource& scene);
SceneSource load_scene(const std::filesystem::path& path);

const SceneObject* find_object(const SceneSource& scene, std::string_view id) noexcept;

/// The view an object is referred to by in question text: its first visible
/// view in ring order.
View primary_view(const SceneObject& obj);

enum class Category { AbsDist, RelDist, Localization, Motion, TravelTime };
enum class Perspective { Ego, Object };
enum class Form { MultiChoice, AbsoluteMeters, YesNo };

std::string_view to_string(Category c) noexcept;
std::string_view to_string(Perspective p) noexcept;
std::string_view to_string(Form f) noexcept;
Category parse_category(std::string_view text);
Perspective parse_perspective(std::string_view text);
Form parse_form(std::string_view text);

struct QAMeta {
  std::vector<std::string> object_ids;  // in placeholder order obj1, obj2, obj3
  std::vector<std::string> captions;
  std::vector<View> views;
  std::optional<std::string> direction;  // motion: north/east/south/west
  std::optional<double> move_m;          // motion: Y
  std::optional<double> speed_mps;       // travel time
  std::optional<bool> ground_plane;      // motion: distances measured on (x, z)
  bool heading_from_yaw = false;         // localization: reference faces its yaw
  double gt_value = 0.0;                 // exact meters or seconds before rounding
};

struct QAItem {
  std::string id;
  std::string scene_id;
  Category category = Category::AbsDist;
  Perspective perspective = Perspective::Ego;
  Form form = Form::MultiChoice;
  std::string question;
  std::vector<std::string> options;   // empty for AbsoluteMeters
  std::vector<double> option_values;  // numeric options (distance, time)
  std::size_t answer_index = 0;       // MultiChoice and YesNo (0 = yes)
  double answer_value = 0.0;          // AbsoluteMeters
  QAMeta meta;
};

nlohmann::json item_to_json(const QAItem& item);
QAItem item_from_json(const nlohmann::json& j);
std::string to_jsonl(std::span<const QAItem> items);
std::vector<QAItem> read_jsonl(const std::filesystem::path& path);
std::vector<QAItem> parse_jsonl(std::string_view text);

inline const std::vector<std::string> kLocalizationOptions = {"front-left", "front-right",
                                                              "rear-left", "rear-right"};
inline const std::vector<std::string> kYesNoOptions = {"yes", "no"};
inline const std::vector<std::string> kDirections = {"north", "east", "south", "west"};

struct GenOptions {
  std::set<Category> categories = {Category::AbsDist, Category::RelDist, Category::Localization,
                                   Category::Motion, Category::TravelTime};
  std::set<Perspective> perspectives = {Perspective::Ego, Perspective::Object};
  std::size_t max_per_group = 0;  // cap per (category, perspective, form); 0 = no cap
  std::size_t n_options = 4;
  double distance_gap_m = 8.0;
  double time_gap_s = 3.0;
  double time_rel_gap = 0.3;
  double reldist_tie_m = 1.0;
  double motion_tie_m = 0.25;
  double localization_margin_deg = 10.0;
  bool motion_ground_plane = false;
  double move_min_m = 2.0;
  double move_max_m = 5.0;
  std::map<std::string, double> speeds = {{"pedestrian", 1.5}, {"cyclist", 5.0},
                                          {"vehicle", 10.0}};
  std::string default_speed_class = "vehicle";
};

/// Numeric options on a 0.1 grid: `gt` (rounded) plus n−1 values drawn
/// uniformly among grid points in [lo, hi] that keep every pair at least
/// `min_gap` apart and, when rel_gap > 0, at least rel_gap · max(a, b) apart.
/// Shuffled with `rng`. Throws GenerationError when the constraints cannot be met.
std::vector<double> make_distractors(double gt, std::size_t n, double min_gap, double lo,
                                     double hi, Rng& rng, double rel_gap = 0.0);

std::vector<QAItem> gen_abs_distance(const SceneSource& scene, Perspective p, Form f,
                                     std::uint64_t seed, const GenOptions& opts = {});
std::vector<QAItem> gen_rel_distance(const SceneSource& scene, Perspective p, std::uint64_t seed,
                                     const GenOptions& opts = {});
std::vector<QAItem> gen_localization(const SceneSource& scene, std::uint64_t seed,
                                     const GenOptions& opts = {});
std::vector<QAItem> gen_motion(const SceneSource& scene, Perspective p, std::uint64_t seed,
                               const GenOptions& opts = {});
std::vector<QAItem> gen_travel_time(const SceneSource& scene, Perspective p, std::uint64_t seed,
                                    const GenOptions& opts = {});

/// Every enabled category, perspective and form for one scene.
std::vector<QAItem> generate_scene(const SceneSource& scene, std::uint64_t seed,
                                   const GenOptions& opts = {});

/// Bearing of `target` seen from `reference` facing `heading` (ground-plane
/// unit vector (x, z)), in degrees, left positive, in (−180, 180].
double relative_bearing_deg(const geometry::GlobalPoint& reference,
                            const geometry::GlobalPoint& target, double heading_x,
                            double heading_z);

/// Quadrant label for a bearing, or nullopt within `margin` degrees of 0, ±90 or 180.
std::optional<std::size_t> localization_quadrant(double bearing_deg, double margin_deg);

/// Ground-plane unit vector for a cardinal direction (north = +z, east = +x).
std::array<double, 3> direction_vector(std::string_view direction);

/// Template text with {obj1}, {view1}, ... placeholders for an item's kind.
std::string_view question_template(Category c, Perspective p, Form f, bool heading_from_yaw);

/// Regex equivalent of question_template with each placeholder as a capture.
std::regex template_regex(Category c, Perspective p, Form f, bool heading_from_yaw);

struct Violation {
  std::string item_id;
  std::string message;
};

/// Checks item invariants: unique ids, option counts, exactly one option at
/// the ground truth, gap rules, template match, answer range.
std::vector<Violation> validate_qaset(std::span<const QAItem> items,
                                      const GenOptions& opts = {});

}  // namespace ego3d::qa
