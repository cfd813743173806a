#include "ego3d/qa.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "ego3d/errors.hpp"

namespace ego3d::qa {

namespace fs = std::filesystem;
using geometry::GlobalPoint;
using nlohmann::json;

namespace {

constexpr GlobalPoint kEgo{0.0, 0.0, 0.0};

// Templates. Placeholders: {obj1..3} object phrases, {view1..3} view phrases,
// {Y} meters, {direction}, {speed} m/s.
constexpr std::string_view kAbsEgoMc = "How far is {obj1} in {view1} from the ego?";
constexpr std::string_view kAbsEgoAbs = "How far is {obj1} in {view1} from the ego in meters?";
constexpr std::string_view kAbsObjMc = "How far is {obj1} in {view1} from {obj2} in {view2}?";
constexpr std::string_view kAbsObjAbs =
    "How far is {obj1} in {view1} from {obj2} in {view2} in meters?";
constexpr std::string_view kRelEgo =
    "Which is closer to the ego, {obj1} in {view1} or {obj2} in {view2}?";
constexpr std::string_view kRelObj =
    "Which is closer to {obj3} in {view3}, {obj1} in {view1} or {obj2} in {view2}?";
constexpr std::string_view kLocYaw =
    "From the perspective of {obj2} in {view2}, facing its heading direction, where is {obj1} "
    "in {view1} located?";
constexpr std::string_view kLocNoYaw =
    "From the perspective of {obj2} in {view2}, facing away from the ego, where is {obj1} in "
    "{view1} located?";
constexpr std::string_view kMotionEgo =
    "Assume north is the ego's forward direction, east is the ego's right, south is behind "
    "the ego, and west is the ego's left. If the ego moves {Y} meters to the {direction}, will "
    "it get closer to {obj1} in {view1}?";
constexpr std::string_view kMotionObj =
    "Assume north is the ego's forward direction, east is the ego's right, south is behind "
    "the ego, and west is the ego's left. If {obj1} in {view1} moves {Y} meters to the "
    "{direction}, will it get closer to {obj2} in {view2}?";
constexpr std::string_view kTravelEgo =
    "If the ego moves at a constant speed of {speed} m/s, how long will it take to reach {obj1} "
    "in {view1}?";
constexpr std::string_view kTravelObj =
    "If {obj1} in {view1} moves at a constant speed of {speed} m/s, how long will it take to "
    "reach {obj2} in {view2}?";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double round_tenth(double v) { return std::round(v * 10.0) / 10.0; }

std::string tenths(double v) { return fmt::format("{:.1f}", v); }

std::string object_phrase(const SceneObject& o) {
  const std::string l = lower(o.caption);
  if (l.rfind("the ", 0) == 0) return o.caption;
  return "the " + o.caption;
}

std::string view_phrase(View v) { return fmt::format("the {} view", view_label(v)); }

std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      const std::string key(tmpl.substr(i + 1, close - i - 1));
      out += values.at(key);
      i = close + 1;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::string_view category_tag(Category c) {
  switch (c) {
    case Category::AbsDist: return "absdist";
    case Category::RelDist: return "reldist";
    case Category::Localization: return "loc";
    case Category::Motion: return "motion";
    case Category::TravelTime: return "travel";
  }
  return "";
}

std::string_view perspective_tag(Perspective p) { return p == Perspective::Ego ? "ego" : "obj"; }

std::string_view form_tag(Form f) {
  switch (f) {
    case Form::MultiChoice: return "mc";
    case Form::AbsoluteMeters: return "abs";
    case Form::YesNo: return "yn";
  }
  return "";
}

struct Group {
  const SceneSource& scene;
  Category category;
  Perspective perspective;
  Form form;
  Rng rng;

  Group(const SceneSource& s, Category c, Perspective p, Form f, std::uint64_t seed)
      : scene(s),
        category(c),
        perspective(p),
        form(f),
        rng(derive_seed(seed, fmt::format("{}/{}/{}/{}", s.scene_id, to_string(c), to_string(p),
                                          to_string(f)))) {}

  QAItem item(std::size_t k) const {
    QAItem it;
    it.id = fmt::format("{}-{}-{}-{}-{:04d}", scene.scene_id, category_tag(category),
                        perspective_tag(perspective), form_tag(form), k);
    it.scene_id = scene.scene_id;
    it.category = category;
    it.perspective = perspective;
    it.form = form;
    return it;
  }
};

// Keeps at most `cap` candidates, chosen uniformly, in original order.
template <typename T>
std::vector<T> cap_candidates(std::vector<T> candidates, std::size_t cap, Rng& rng) {
  if (cap == 0 || candidates.size() <= cap) return candidates;
  std::vector<std::size_t> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(cap);
  for (auto i : idx) out.push_back(std::move(candidates[i]));
  return out;
}

void add_object(QAMeta& meta, std::map<std::string, std::string>& slots, const SceneObject& o,
                int slot) {
  meta.object_ids.push_back(o.id);
  meta.captions.push_back(o.caption);
  const View v = primary_view(o);
  meta.views.push_back(v);
  slots[fmt::format("obj{}", slot)] = object_phrase(o);
  slots[fmt::format("view{}", slot)] = view_phrase(v);
}

std::string option_phrase(const SceneObject& o) {
  return object_phrase(o) + " in " + view_phrase(primary_view(o));
}

void set_numeric_options(QAItem& item, std::vector<double> values, double gt,
                         std::string_view unit) {
  const double g = round_tenth(gt);
  item.option_values = std::move(values);
  for (std::size_t i = 0; i < item.option_values.size(); ++i) {
    item.options.push_back(fmt::format("{} {}", tenths(item.option_values[i]), unit));
    if (std::abs(item.option_values[i] - g) < 1e-9) item.answer_index = i;
  }
}

double speed_for(const SceneObject* mover, const GenOptions& opts) {
  const std::string cls =
      (mover != nullptr && opts.speeds.count(mover->category)) ? mover->category
                                                               : opts.default_speed_class;
  const auto it = opts.speeds.find(cls);
  if (it == opts.speeds.end() || !(it->second > 0.0)) {
    throw ValidationError(fmt::format("no positive speed configured for '{}'", cls));
  }
  return it->second;
}

double mover_distance(const GlobalPoint& a, const GlobalPoint& b, bool ground) {
  return ground ? geometry::ground_distance(a, b) : geometry::distance(a, b);
}

GlobalPoint point_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("center needs [x, y, z]");
  GlobalPoint p{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
    throw ValidationError("center must be finite");
  }
  return p;
}

std::vector<View> views_from_json(const json& j) {
  std::vector<View> out;
  for (const auto& v : j) {
    const View view = view_from_string(v.get<std::string>());
    if (std::find(out.begin(), out.end(), view) == out.end()) out.push_back(view);
  }
  std::sort(out.begin(), out.end(),
            [](View a, View b) { return ring_index(a) < ring_index(b); });
  return out;
}

json views_to_json(const std::vector<View>& views) {
  json out = json::array();
  for (View v : views) out.push_back(std::string(view_id(v)));
  return out;
}

SceneSource parse_scene(const json& j) {
  SceneSource s;
  s.scene_id = j.at("scene_id").get<std::string>();
  if (s.scene_id.empty()) throw ValidationError("scene_id is empty");
  std::set<std::string> ids;
  std::set<std::string> captions;
  for (const auto& o : j.at("objects")) {
    SceneObject obj;
    obj.id = o.at("id").get<std::string>();
    obj.caption = o.at("caption").get<std::string>();
    obj.center = point_from_json(o.at("center"));
    if (o.contains("yaw") && !o.at("yaw").is_null()) obj.yaw = o.at("yaw").get<double>();
    if (o.contains("size") && !o.at("size").is_null()) {
      const auto& sz = o.at("size");
      if (!sz.is_array() || sz.size() != 3) throw ValidationError("size needs [l, w, h]");
      obj.size = std::array<double, 3>{sz[0].get<double>(), sz[1].get<double>(),
                                       sz[2].get<double>()};
    }
    obj.views = views_from_json(o.at("views"));
    if (o.contains("category")) obj.category = lower(o.at("category").get<std::string>());
    if (obj.id.empty() || obj.caption.empty()) {
      throw ValidationError("scene object needs a non-empty id and caption");
    }
    if (obj.views.empty()) throw ValidationError(fmt::format("object '{}' has no views", obj.id));
    if (!ids.insert(obj.id).second) {
      throw ValidationError(fmt::format("duplicate object id '{}'", obj.id));
    }
    if (!captions.insert(lower(obj.caption)).second) {
      throw ValidationError(fmt::format("caption '{}' is not unique", obj.caption));
    }
    s.objects.push_back(std::move(obj));
  }
  if (j.contains("rig")) {
    s.rig = views_from_json(j.at("rig"));
    for (const auto& o : s.objects) {
      for (View v : o.views) {
        if (std::find(s.rig.begin(), s.rig.end(), v) == s.rig.end()) {
          throw ValidationError(
              fmt::format("object '{}' is visible in {} which is not in the rig", o.id,
                          view_id(v)));
        }
      }
    }
  } else {
    for (const auto& o : s.objects) {
      for (View v : o.views) {
        if (std::find(s.rig.begin(), s.rig.end(), v) == s.rig.end()) s.rig.push_back(v);
      }
    }
    std::sort(s.rig.begin(), s.rig.end(),
              [](View a, View b) { return ring_index(a) < ring_index(b); });
  }
  return s;
}

}  // namespace

SceneSource scene_from_json(const json& j) {
  try {
    return parse_scene(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid scene file: ") + e.what());
  }
}

json scene_to_json(const SceneSource& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    json jo = {{"id", o.id},
               {"caption", o.caption},
               {"center", {o.center.x, o.center.y, o.center.z}},
               {"views", views_to_json(o.views)}};
    if (o.yaw) jo["yaw"] = *o.yaw;
    if (o.size) jo["size"] = *o.size;
    if (!o.category.empty()) jo["category"] = o.category;
    objects.push_back(std::move(jo));
  }
  return {{"scene_id", scene.scene_id}, {"rig", views_to_json(scene.rig)}, {"objects", objects}};
}

SceneSource load_scene(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scene file " + path.string());
  try {
    return scene_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

const SceneObject* find_object(const SceneSource& scene, std::string_view id) noexcept {
  for (const auto& o : scene.objects) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

View primary_view(const SceneObject& obj) {
  if (obj.views.empty()) throw ValidationError(fmt::format("object '{}' has no views", obj.id));
  return *std::min_element(obj.views.begin(), obj.views.end(),
                           [](View a, View b) { return ring_index(a) < ring_index(b); });
}

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::AbsDist: return "AbsDist";
    case Category::RelDist: return "RelDist";
    case Category::Localization: return "Localization";
    case Category::Motion: return "Motion";
    case Category::TravelTime: return "TravelTime";
  }
  return "";
}

std::string_view to_string(Perspective p) noexcept {
  return p == Perspective::Ego ? "Ego" : "Object";
}

std::string_view to_string(Form f) noexcept {
  switch (f) {
    case Form::MultiChoice: return "MultiChoice";
    case Form::AbsoluteMeters: return "AbsoluteMeters";
    case Form::YesNo: return "YesNo";
  }
  return "";
}

Category parse_category(std::string_view text) {
  const std::string t = lower(text);
  if (t == "absdist" || t == "abs-dist" || t == "absolute-distance") return Category::AbsDist;
  if (t == "reldist" || t == "rel-dist" || t == "relative-distance") return Category::RelDist;
  if (t == "localization" || t == "loc") return Category::Localization;
  if (t == "motion") return Category::Motion;
  if (t == "traveltime" || t == "travel-time" || t == "travel") return Category::TravelTime;
  throw ValidationError(fmt::format("unknown category '{}'", text));
}

Perspective parse_perspective(std::string_view text) {
  const std::string t = lower(text);
  if (t == "ego") return Perspective::Ego;
  if (t == "object" || t == "obj") return Perspective::Object;
  throw ValidationError(fmt::format("unknown perspective '{}'", text));
}

Form parse_form(std::string_view text) {
  const std::string t = lower(text);
  if (t == "multichoice" || t == "mc") return Form::MultiChoice;
  if (t == "absolutemeters" || t == "abs") return Form::AbsoluteMeters;
  if (t == "yesno" || t == "yn") return Form::YesNo;
  throw ValidationError(fmt::format("unknown form '{}'", text));
}

json item_to_json(const QAItem& item) {
  json meta = {{"object_ids", item.meta.object_ids},
               {"captions", item.meta.captions},
               {"views", views_to_json(item.meta.views)},
               {"gt_value", item.meta.gt_value}};
  if (item.meta.direction) meta["direction"] = *item.meta.direction;
  if (item.meta.move_m) meta["move_m"] = *item.meta.move_m;
  if (item.meta.speed_mps) meta["speed_mps"] = *item.meta.speed_mps;
  if (item.meta.ground_plane) meta["ground_plane"] = *item.meta.ground_plane;
  if (item.category == Category::Localization) {
    meta["heading_from_yaw"] = item.meta.heading_from_yaw;
  }
  json j = {{"id", item.id},
            {"scene_id", item.scene_id},
            {"category", to_string(item.category)},
            {"perspective", to_string(item.perspective)},
            {"form", to_string(item.form)},
            {"question", item.question},
            {"options", item.options},
            {"option_values", item.option_values},
            {"meta", meta}};
  switch (item.form) {
    case Form::MultiChoice: j["answer"] = item.answer_index; break;
    case Form::YesNo: j["answer"] = kYesNoOptions.at(item.answer_index); break;
    case Form::AbsoluteMeters: j["answer"] = item.answer_value; break;
  }
  return j;
}

QAItem item_from_json(const json& j) {
  try {
    QAItem it;
    it.id = j.at("id").get<std::string>();
    it.scene_id = j.at("scene_id").get<std::string>();
    it.category = parse_category(j.at("category").get<std::string>());
    it.perspective = parse_perspective(j.at("perspective").get<std::string>());
    it.form = parse_form(j.at("form").get<std::string>());
    it.question = j.at("question").get<std::string>();
    it.options = j.value("options", std::vector<std::string>{});
    it.option_values = j.value("option_values", std::vector<double>{});
    const auto& a = j.at("answer");
    switch (it.form) {
      case Form::MultiChoice: it.answer_index = a.get<std::size_t>(); break;
      case Form::YesNo: {
        const std::string s = lower(a.get<std::string>());
        if (s != "yes" && s != "no") throw ValidationError("yes/no answer must be yes or no");
        it.answer_index = s == "yes" ? 0 : 1;
        break;
      }
      case Form::AbsoluteMeters: it.answer_value = a.get<double>(); break;
    }
    const auto& m = j.at("meta");
    it.meta.object_ids = m.at("object_ids").get<std::vector<std::string>>();
    it.meta.captions = m.value("captions", std::vector<std::string>{});
    for (const auto& v : m.value("views", json::array())) {
      it.meta.views.push_back(view_from_string(v.get<std::string>()));
    }
    it.meta.gt_value = m.value("gt_value", 0.0);
    if (m.contains("direction")) it.meta.direction = m.at("direction").get<std::string>();
    if (m.contains("move_m")) it.meta.move_m = m.at("move_m").get<double>();
    if (m.contains("speed_mps")) it.meta.speed_mps = m.at("speed_mps").get<double>();
    if (m.contains("ground_plane")) it.meta.ground_plane = m.at("ground_plane").get<bool>();
    it.meta.heading_from_yaw = m.value("heading_from_yaw", false);
    return it;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid QA item: ") + e.what());
  }
}

std::string to_jsonl(std::span<const QAItem> items) {
  std::string out;
  for (const auto& it : items) {
    out += item_to_json(it).dump();
    out += '\n';
  }
  return out;
}

std::vector<QAItem> parse_jsonl(std::string_view text) {
  std::vector<QAItem> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(item_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ValidationError(fmt::format("line {}: {}", lineno, e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

std::vector<QAItem> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_jsonl(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<double> make_distractors(double gt, std::size_t n, double min_gap, double lo,
                                     double hi, Rng& rng, double rel_gap) {
  if (n < 2) throw GenerationError("need at least two options");
  if (!std::isfinite(gt) || !(min_gap >= 0.0) || !(rel_gap >= 0.0) || rel_gap >= 1.0) {
    throw GenerationError("invalid option constraints");
  }
  const auto gt_t = static_cast<std::int64_t>(std::llround(gt * 10.0));
  const auto lo_t = static_cast<std::int64_t>(std::ceil(lo * 10.0 - 1e-9));
  const auto hi_t = static_cast<std::int64_t>(std::floor(hi * 10.0 + 1e-9));
  const auto gap_t = static_cast<std::int64_t>(std::ceil(min_gap * 10.0 - 1e-9));
  if (lo_t < 1 || gt_t < lo_t || gt_t > hi_t) {
    throw GenerationError(fmt::format("ground truth {} outside option bounds [{}, {}]", gt, lo, hi));
  }
  auto compatible = [&](std::int64_t a, std::int64_t b) {
    const std::int64_t d = a > b ? a - b : b - a;
    if (d < gap_t || d == 0) return false;
    return rel_gap <= 0.0 || static_cast<double>(d) >= rel_gap * static_cast<double>(std::max(a, b)) - 1e-9;
  };

  constexpr int kAttempts = 64;
  std::vector<std::int64_t> candidates;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::vector<std::int64_t> chosen = {gt_t};
    while (chosen.size() < n) {
      candidates.clear();
      for (std::int64_t t = lo_t; t <= hi_t; ++t) {
        if (std::all_of(chosen.begin(), chosen.end(),
                        [&](std::int64_t c) { return compatible(t, c); })) {
          candidates.push_back(t);
        }
      }
      if (candidates.empty()) break;
      chosen.push_back(candidates[rng.uniform_index(candidates.size())]);
    }
    if (chosen.size() == n) {
      rng.shuffle(chosen);
      std::vector<double> out;
      out.reserve(n);
      for (auto t : chosen) out.push_back(static_cast<double>(t) / 10.0);
      return out;
    }
  }
  throw GenerationError(
      fmt::format("cannot place {} options around {} with gap {} in [{}, {}]", n, gt, min_gap, lo, hi));
}

std::vector<QAItem> gen_abs_distance(const SceneSource& scene, Perspective p, Form f,
                                     std::uint64_t seed, const GenOptions& opts) {
  if (f == Form::YesNo) throw ValidationError("absolute distance has no yes/no form");
  Group g(scene, Category::AbsDist, p, f, seed);
  const auto& objs = scene.objects;
  struct Cand {
    std::size_t a;
    std::optional<std::size_t> b;
  };
  std::vector<Cand> cands;
  if (p == Perspective::Ego) {
    for (std::size_t i = 0; i < objs.size(); ++i) cands.push_back({i, std::nullopt});
  } else {
    for (std::size_t i = 0; i < objs.size(); ++i) {
      for (std::size_t j = i + 1; j < objs.size(); ++j) {
        if (primary_view(objs[i]) == primary_view(objs[j])) continue;
        if (g.rng.uniform_index(2) == 0) {
          cands.push_back({i, j});
        } else {
          cands.push_back({j, i});
        }
      }
    }
  }
  cands = cap_candidates(std::move(cands), opts.max_per_group, g.rng);

  std::vector<QAItem> out;
  for (const auto& c : cands) {
    const auto& o1 = objs[c.a];
    const GlobalPoint from = c.b ? objs[*c.b].center : kEgo;
    const double gt = geometry::distance(o1.center, from);
    if (round_tenth(gt) < 0.1) continue;
    QAItem it = g.item(out.size());
    std::map<std::string, std::string> slots;
    add_object(it.meta, slots, o1, 1);
    if (c.b) add_object(it.meta, slots, objs[*c.b], 2);
    const bool mc = f == Form::MultiChoice;
    it.question = fill(question_template(Category::AbsDist, p, f, false), slots);
    it.meta.gt_value = gt;
    if (mc) {
      const double n = static_cast<double>(opts.n_options);
      const double hi = std::max(2.0 * gt, gt + 2.0 * n * opts.distance_gap_m);
      set_numeric_options(
          it, make_distractors(gt, opts.n_options, opts.distance_gap_m, 0.1, hi, g.rng), gt, "m");
    } else {
      it.answer_value = gt;
    }
    out.push_back(std::move(it));
  }
  return out;
}

std::vector<QAItem> gen_rel_distance(const SceneSource& scene, Perspective p, std::uint64_t seed,
                                     const GenOptions& opts) {
  Group g(scene, Category::RelDist, p, Form::MultiChoice, seed);
  const auto& objs = scene.objects;
  struct Cand {
    std::size_t a, b;
    std::optional<std::size_t> ref;
  };
  std::vector<Cand> cands;
  auto consider = [&](std::size_t i, std::size_t j, std::optional<std::size_t> ref) {
    const GlobalPoint anchor = ref ? objs[*ref].center : kEgo;
    const double di = geometry::distance(objs[i].center, anchor);
    const double dj = geometry::distance(objs[j].center, anchor);
    if (std::abs(di - dj) < opts.reldist_tie_m) return;
    if (g.rng.uniform_index(2) == 0) {
      cands.push_back({i, j, ref});
    } else {
      cands.push_back({j, i, ref});
    }
  };
  if (p == Perspective::Ego) {
    for (std::size_t i = 0; i < objs.size(); ++i) {
      for (std::size_t j = i + 1; j < objs.size(); ++j) consider(i, j, std::nullopt);
    }
  } else {
    for (std::size_t k = 0; k < objs.size(); ++k) {
      for (std::size_t i = 0; i < objs.size(); ++i) {
        if (i == k) continue;
        for (std::size_t j = i + 1; j < objs.size(); ++j) {
          if (j != k) consider(i, j, k);
        }
      }
    }
  }
  cands = cap_candidates(std::move(cands), opts.max_per_group, g.rng);

  std::vector<QAItem> out;
  for (const auto& c : cands) {
    QAItem it = g.item(out.size());
    std::map<std::string, std::string> slots;
    add_object(it.meta, slots, objs[c.a], 1);
    add_object(it.meta, slots, objs[c.b], 2);
    if (c.ref) add_object(it.meta, slots, objs[*c.ref], 3);
    it.question = fill(question_template(Category::RelDist, p, Form::MultiChoice, false), slots);
    it.options = {option_phrase(objs[c.a]), option_phrase(objs[c.b])};
    const GlobalPoint anchor = c.ref ? objs[*c.ref].center : kEgo;
    const double da = geometry::distance(objs[c.a].center, anchor);
    const double db = geometry::distance(objs[c.b].center, anchor);
    it.answer_index = da < db ? 0 : 1;
    it.meta.gt_value = std::min(da, db);
    out.push_back(std::move(it));
  }
  return out;
}

double relative_bearing_deg(const GlobalPoint& reference, const GlobalPoint& target,
                            double heading_x, double heading_z) {
  const double rx = target.x - reference.x;
  const double rz = target.z - reference.z;
  const double forward = rx * heading_x + rz * heading_z;
  const double left = rz * heading_x - rx * heading_z;
  return geometry::radians_to_degrees(std::atan2(left, forward));
}

std::optional<std::size_t> localization_quadrant(double bearing_deg, double margin_deg) {
  const double a = std::abs(bearing_deg);
  if (!std::isfinite(bearing_deg) || a < margin_deg || std::abs(a - 90.0) < margin_deg ||
      a > 180.0 - margin_deg) {
    return std::nullopt;
  }
  const bool front = a < 90.0;
  const bool left = bearing_deg > 0.0;
  if (front) return left ? 0 : 1;
  return left ? 2 : 3;
}

std::vector<QAItem> gen_localization(const SceneSource& scene, std::uint64_t seed,
                                     const GenOptions& opts) {
  Group g(scene, Category::Localization, Perspective::Object, Form::MultiChoice, seed);
  const auto& objs = scene.objects;
  struct Cand {
    std::size_t target, ref;
    std::size_t quadrant;
    double bearing;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    for (std::size_t j = 0; j < objs.size(); ++j) {
      if (i == j) continue;
      const auto& ref = objs[j];
      double hx = 0.0;
      double hz = 0.0;
      if (ref.yaw) {
        hx = std::sin(*ref.yaw);
        hz = std::cos(*ref.yaw);
      } else {
        const double n = std::hypot(ref.center.x, ref.center.z);
        if (n < 1e-6) continue;
        hx = ref.center.x / n;
        hz = ref.center.z / n;
      }
      if (geometry::ground_distance(objs[i].center, ref.center) < 1e-6) continue;
      const double b = relative_bearing_deg(ref.center, objs[i].center, hx, hz);
      const auto q = localization_quadrant(b, opts.localization_margin_deg);
      if (q) cands.push_back({i, j, *q, b});
    }
  }
  cands = cap_candidates(std::move(cands), opts.max_per_group, g.rng);

  std::vector<QAItem> out;
  for (const auto& c : cands) {
    QAItem it = g.item(out.size());
    std::map<std::string, std::string> slots;
    add_object(it.meta, slots, objs[c.target], 1);
    add_object(it.meta, slots, objs[c.ref], 2);
    it.meta.heading_from_yaw = objs[c.ref].yaw.has_value();
    it.question = fill(question_template(Category::Localization, Perspective::Object,
                                         Form::MultiChoice, it.meta.heading_from_yaw),
                       slots);
    it.options = kLocalizationOptions;
    it.answer_index = c.quadrant;
    it.meta.gt_value = c.bearing;
    out.push_back(std::move(it));
  }
  return out;
}

std::array<double, 3> direction_vector(std::string_view direction) {
  if (direction == "north") return {0.0, 0.0, 1.0};
  if (direction == "east") return {1.0, 0.0, 0.0};
  if (direction == "south") return {0.0, 0.0, -1.0};
  if (direction == "west") return {-1.0, 0.0, 0.0};
  throw ValidationError(fmt::format("unknown direction '{}'", direction));
}

std::vector<QAItem> gen_motion(const SceneSource& scene, Perspective p, std::uint64_t seed,
                               const GenOptions& opts) {
  Group g(scene, Category::Motion, p, Form::YesNo, seed);
  const auto& objs = scene.objects;
  const auto y_lo = static_cast<std::int64_t>(std::llround(opts.move_min_m * 10.0));
  const auto y_hi = static_cast<std::int64_t>(std::llround(opts.move_max_m * 10.0));
  if (y_lo <= 0 || y_hi < y_lo) throw ValidationError("invalid motion distance range");
  struct Cand {
    std::optional<std::size_t> mover;
    std::size_t target;
    std::size_t dir;
    double y;
    double d0, d1;
  };
  std::vector<Cand> cands;
  auto consider = [&](std::optional<std::size_t> mover, std::size_t target) {
    const GlobalPoint from = mover ? objs[*mover].center : kEgo;
    for (std::size_t d = 0; d < kDirections.size(); ++d) {
      const double y = static_cast<double>(g.rng.uniform_int(y_lo, y_hi)) / 10.0;
      const auto v = direction_vector(kDirections[d]);
      const GlobalPoint moved{from.x + y * v[0], from.y + y * v[1], from.z + y * v[2]};
      const double d0 = mover_distance(from, objs[target].center, opts.motion_ground_plane);
      const double d1 = mover_distance(moved, objs[target].center, opts.motion_ground_plane);
      if (std::abs(d1 - d0) < opts.motion_tie_m) continue;
      cands.push_back({mover, target, d, y, d0, d1});
    }
  };
  if (p == Perspective::Ego) {
    for (std::size_t t = 0; t < objs.size(); ++t) consider(std::nullopt, t);
  } else {
    for (std::size_t m = 0; m < objs.size(); ++m) {
      for (std::size_t t = 0; t < objs.size(); ++t) {
        if (m != t) consider(m, t);
      }
    }
  }
  cands = cap_candidates(std::move(cands), opts.max_per_group, g.rng);

  std::vector<QAItem> out;
  for (const auto& c : cands) {
    QAItem it = g.item(out.size());
    std::map<std::string, std::string> slots;
    int slot = 1;
    if (c.mover) add_object(it.meta, slots, objs[*c.mover], slot++);
    add_object(it.meta, slots, objs[c.target], slot);
    slots["Y"] = tenths(c.y);
    slots["direction"] = kDirections[c.dir];
    it.question = fill(question_template(Category::Motion, p, Form::YesNo, false), slots);
    it.options = kYesNoOptions;
    it.answer_index = c.d1 < c.d0 ? 0 : 1;
    it.meta.direction = kDirections[c.dir];
    it.meta.move_m = c.y;
    it.meta.ground_plane = opts.motion_ground_plane;
    it.meta.gt_value = c.d1 - c.d0;
    out.push_back(std::move(it));
  }
  return out;
}

std::vector<QAItem> gen_travel_time(const SceneSource& scene, Perspective p, std::uint64_t seed,
                                    const GenOptions& opts) {
  Group g(scene, Category::TravelTime, p, Form::MultiChoice, seed);
  const auto& objs = scene.objects;
  struct Cand {
    std::optional<std::size_t> mover;
    std::size_t target;
  };
  std::vector<Cand> cands;
  if (p == Perspective::Ego) {
    for (std::size_t t = 0; t < objs.size(); ++t) cands.push_back({std::nullopt, t});
  } else {
    for (std::size_t m = 0; m < objs.size(); ++m) {
      for (std::size_t t = 0; t < objs.size(); ++t) {
        if (m != t) cands.push_back({m, t});
      }
    }
  }
  cands = cap_candidates(std::move(cands), opts.max_per_group, g.rng);

  std::vector<QAItem> out;
  for (const auto& c : cands) {
    const SceneObject* mover = c.mover ? &objs[*c.mover] : nullptr;
    const double speed = speed_for(mover, opts);
    const GlobalPoint from = mover ? mover->center : kEgo;
    const double t = geometry::distance(from, objs[c.target].center) / speed;
    if (round_tenth(t) < 0.1) continue;
    QAItem it = g.item(out.size());
    std::map<std::string, std::string> slots;
    int slot = 1;
    if (mover) add_object(it.meta, slots, *mover, slot++);
    add_object(it.meta, slots, objs[c.target], slot);
    slots["speed"] = tenths(speed);
    it.question = fill(question_template(Category::TravelTime, p, Form::MultiChoice, false), slots);
    it.meta.speed_mps = speed;
    it.meta.gt_value = t;
    const double n = static_cast<double>(opts.n_options);
    const double hi = std::max(4.0 * t, t + 4.0 * n * opts.time_gap_s);
    set_numeric_options(it,
                        make_distractors(t, opts.n_options, opts.time_gap_s, 0.1, hi, g.rng,
                                         opts.time_rel_gap),
                        t, "s");
    out.push_back(std::move(it));
  }
  return out;
}

std::vector<QAItem> generate_scene(const SceneSource& scene, std::uint64_t seed,
                                   const GenOptions& opts) {
  std::vector<QAItem> out;
  auto append = [&](std::vector<QAItem> items) {
    for (auto& it : items) out.push_back(std::move(it));
  };
  const bool ego = opts.perspectives.count(Perspective::Ego) > 0;
  const bool obj = opts.perspectives.count(Perspective::Object) > 0;
  if (opts.categories.count(Category::AbsDist)) {
    for (Form f : {Form::MultiChoice, Form::AbsoluteMeters}) {
      if (ego) append(gen_abs_distance(scene, Perspective::Ego, f, seed, opts));
      if (obj) append(gen_abs_distance(scene, Perspective::Object, f, seed, opts));
    }
  }
  if (opts.categories.count(Category::RelDist)) {
    if (ego) append(gen_rel_distance(scene, Perspective::Ego, seed, opts));
    if (obj) append(gen_rel_distance(scene, Perspective::Object, seed, opts));
  }
  if (opts.categories.count(Category::Localization) && obj) {
    append(gen_localization(scene, seed, opts));
  }
  if (opts.categories.count(Category::Motion)) {
    if (ego) append(gen_motion(scene, Perspective::Ego, seed, opts));
    if (obj) append(gen_motion(scene, Perspective::Object, seed, opts));
  }
  if (opts.categories.count(Category::TravelTime)) {
    if (ego) append(gen_travel_time(scene, Perspective::Ego, seed, opts));
    if (obj) append(gen_travel_time(scene, Perspective::Object, seed, opts));
  }
  return out;
}

std::string_view question_template(Category c, Perspective p, Form f, bool heading_from_yaw) {
  const bool ego = p == Perspective::Ego;
  switch (c) {
    case Category::AbsDist:
      if (f == Form::AbsoluteMeters) return ego ? kAbsEgoAbs : kAbsObjAbs;
      return ego ? kAbsEgoMc : kAbsObjMc;
    case Category::RelDist: return ego ? kRelEgo : kRelObj;
    case Category::Localization: return heading_from_yaw ? kLocYaw : kLocNoYaw;
    case Category::Motion: return ego ? kMotionEgo : kMotionObj;
    case Category::TravelTime: return ego ? kTravelEgo : kTravelObj;
  }
  return {};
}

std::regex template_regex(Category c, Perspective p, Form f, bool heading_from_yaw) {
  static const std::string kSpecial = R"(\^$.|?*+()[]{})";
  std::string views;
  for (View v : kViewRing) {
    if (!views.empty()) views += '|';
    views += view_label(v);
  }
  const std::string_view tmpl = question_template(c, p, f, heading_from_yaw);
  std::string re;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i);
      const std::string_view key = tmpl.substr(i + 1, close - i - 1);
      if (key.rfind("obj", 0) == 0) {
        re += "(the .+?)";
      } else if (key.rfind("view", 0) == 0) {
        re += "(the (?:" + views + ") view)";
      } else if (key == "direction") {
        re += "(north|east|south|west)";
      } else {
        re += "([0-9]+\\.[0-9])";
      }
      i = close + 1;
    } else {
      if (kSpecial.find(tmpl[i]) != std::string::npos) re += '\\';
      re += tmpl[i++];
    }
  }
  return std::regex(re);
}

std::vector<Violation> validate_qaset(std::span<const QAItem> items, const GenOptions& opts) {
  std::vector<Violation> out;
  auto flag = [&](const QAItem& it, std::string msg) { out.push_back({it.id, std::move(msg)}); };
  std::set<std::string> ids;
  std::map<std::tuple<Category, Perspective, Form, bool>, std::regex> regexes;

  for (const auto& it : items) {
    if (it.id.empty()) flag(it, "empty id");
    if (!ids.insert(it.id).second) flag(it, "duplicate id");

    const bool form_ok = [&] {
      switch (it.category) {
        case Category::AbsDist: return it.form != Form::YesNo;
        case Category::Motion: return it.form == Form::YesNo;
        case Category::Localization:
          return it.form == Form::MultiChoice && it.perspective == Perspective::Object;
        default: return it.form == Form::MultiChoice;
      }
    }();
    if (!form_ok) {
      flag(it, "form or perspective not valid for category");
      continue;
    }

    const auto key = std::make_tuple(it.category, it.perspective, it.form,
                                     it.category == Category::Localization &&
                                         it.meta.heading_from_yaw);
    auto rit = regexes.find(key);
    if (rit == regexes.end()) {
      rit = regexes.emplace(key, template_regex(it.category, it.perspective, it.form,
                                                std::get<3>(key)))
                .first;
    }
    if (it.question.find('{') != std::string::npos) flag(it, "unfilled placeholder");
    if (!std::regex_match(it.question, rit->second)) flag(it, "question does not match template");

    if (it.meta.object_ids.empty()) flag(it, "no object ids");
    if (it.meta.captions.size() != it.meta.object_ids.size() ||
        it.meta.views.size() != it.meta.object_ids.size()) {
      flag(it, "meta captions/views do not align with object ids");
    }

    if (it.form == Form::AbsoluteMeters) {
      if (!it.options.empty()) flag(it, "absolute-meter item has options");
      if (!std::isfinite(it.answer_value) || it.answer_value < 0.0) flag(it, "invalid meters");
      continue;
    }

    if (it.options.size() < 2) {
      flag(it, "fewer than two options");
      continue;
    }
    if (it.answer_index >= it.options.size()) flag(it, "answer index out of range");
    std::set<std::string> uniq(it.options.begin(), it.options.end());
    if (uniq.size() != it.options.size()) flag(it, "duplicate options");

    if (it.form == Form::YesNo) {
      if (it.options != kYesNoOptions) flag(it, "yes/no options must be [yes, no]");
      continue;
    }
    if (it.category == Category::Localization && it.options != kLocalizationOptions) {
      flag(it, "localization options must be the four quadrants");
    }
    if (it.category == Category::RelDist && it.options.size() != 2) {
      flag(it, "relative distance needs two options");
    }
    if (it.category != Category::AbsDist && it.category != Category::TravelTime) continue;

    const auto& v = it.option_values;
    if (v.size() != it.options.size()) {
      flag(it, "option values do not align with options");
      continue;
    }
    const double gt = round_tenth(it.meta.gt_value);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0.0)) flag(it, fmt::format("option {} not positive", i));
      if (std::abs(v[i] - gt) < 1e-6) {
        ++hits;
        if (i != it.answer_index) flag(it, "answer index does not point at the ground truth");
      }
    }
    if (hits != 1) flag(it, fmt::format("{} options equal the ground truth", hits));
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = i + 1; j < v.size(); ++j) {
        const double d = std::abs(v[i] - v[j]);
        if (it.category == Category::AbsDist && d < opts.distance_gap_m - 1e-6) {
          flag(it, fmt::format("options {} and {} are {:.1f} m apart (< {:.1f} m)", i, j, d,
                               opts.distance_gap_m));
        }
        if (it.category == Category::TravelTime &&
            (d < opts.time_gap_s - 1e-6 ||
             d < opts.time_rel_gap * std::max(v[i], v[j]) - 1e-6)) {
          flag(it, fmt::format("options {} and {} violate the time gap rule", i, j));
        }
      }
    }
  }
  return out;
}

}  // namespace ego3d::qa
