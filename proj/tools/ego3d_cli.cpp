// ego3d command-line front end.
//
// Exit codes: 0 success, 2 validation, 3 transport, 4 partial (some items
// failed; the outputs that did succeed are written).

#include <fnmatch.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ego3d/cogmap.hpp"
#include "ego3d/errors.hpp"
#include "ego3d/eval.hpp"
#include "ego3d/geometry.hpp"
#include "ego3d/http.hpp"
#include "ego3d/oracle.hpp"
#include "ego3d/perception.hpp"
#include "ego3d/pipeline.hpp"
#include "ego3d/qa.hpp"
#include "ego3d/rng.hpp"
#include "ego3d/scaling.hpp"
#include "ego3d/vlm.hpp"

#ifndef EGO3D_VERSION
#define EGO3D_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace ego3d::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitTransport = 3;
constexpr int kExitPartial = 4;

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& p, std::string_view data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << data;
}

// Paths straight, directories as their *.json files, or shell-style globs
// in the last path component. Sorted and de-duplicated.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& patterns) {
  std::set<fs::path> out;
  for (const auto& pat : patterns) {
    const fs::path p(pat);
    if (pat.find_first_of("*?[") != std::string::npos) {
      const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
      if (!fs::is_directory(dir)) throw ValidationError("no such directory: " + dir.string());
      const std::string glob = p.filename().string();
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() &&
            fnmatch(glob.c_str(), e.path().filename().c_str(), 0) == 0) {
          out.insert(e.path());
        }
      }
    } else if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".json") out.insert(e.path());
      }
    } else if (fs::exists(p)) {
      out.insert(p);
    } else {
      throw ValidationError("input not found: " + pat);
    }
  }
  if (out.empty()) throw ValidationError("no input files matched");
  return {out.begin(), out.end()};
}

std::vector<qa::SceneSource> load_scenes(const std::vector<fs::path>& files) {
  std::vector<qa::SceneSource> scenes;
  for (const auto& f : files) scenes.push_back(qa::load_scene(f));
  std::sort(scenes.begin(), scenes.end(),
            [](const auto& a, const auto& b) { return a.scene_id < b.scene_id; });
  return scenes;
}

geometry::ImageSize parse_image_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    geometry::ImageSize size{std::stod(s.substr(0, x)), std::stod(s.substr(x + 1))};
    if (!(size.width > 0 && size.height > 0)) throw std::invalid_argument(s);
    return size;
  } catch (const std::exception&) {
    throw ValidationError("image size must look like 1600x900, got '" + s + "'");
  }
}

struct Manifest {
  std::string command;
  std::string subcommand;
  json seeds = json::object();
  std::vector<fs::path> inputs;
  std::string started_at = utc_now();

  void write(const fs::path& out, const CLI::App& app) const {
    json in = json::array();
    for (const auto& p : inputs) {
      if (fs::is_regular_file(p)) {
        in.push_back({{"path", p.string()}, {"sha256", sha256_hex_file(p)}});
      }
    }
    json m = {{"command", command},
              {"subcommand", subcommand},
              {"config", app.config_to_str(true, false)},
              {"seeds", seeds},
              {"inputs", in},
              {"versions",
               {{"ego3d", EGO3D_VERSION},
                {"cli11", CLI11_VERSION},
                {"compiler", __VERSION__},
                {"cxx", __cplusplus}}},
              {"started_at", started_at},
              {"finished_at", utc_now()}};
    write_file(out.string() + ".manifest.json", m.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------- backends

struct PerceptionFlags {
  std::string rec_url;
  std::string depth_url;
  std::string rec_fixtures;
  std::string depth_fixtures;
  double timeout_s = 60.0;
  int max_in_flight = 4;
  double score_threshold = 0.35;
  bool best_match = false;
  bool median_depth = false;
  bool no_scaling = false;
  std::string reference_classes;
  std::string calib;
  std::optional<double> estimate_fov;
  std::string image_size;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--rec-url", rec_url, "REC backend base URL");
    cmd->add_option("--depth-url", depth_url, "Depth backend base URL");
    cmd->add_option("--rec-fixtures", rec_fixtures, "Directory of REC fixtures (offline)");
    cmd->add_option("--depth-fixtures", depth_fixtures, "Directory of depth fixtures (offline)");
    cmd->add_option("--backend-timeout", timeout_s, "Perception request timeout in seconds");
    cmd->add_option("--backend-max-in-flight", max_in_flight,
                    "Concurrent requests per perception backend");
    cmd->add_option("--score-threshold", score_threshold, "Drop detections scoring below this");
    cmd->add_flag("--best-match", best_match, "Keep only the best match per expression and view");
    cmd->add_flag("--median-depth", median_depth, "Median of a 5x5 window instead of one pixel");
    cmd->add_flag("--no-scaling", no_scaling, "Disable relational scaling");
    cmd->add_option("--reference-classes", reference_classes, "Reference-class heights JSON");
    cmd->add_option("--calib", calib, "Calibration JSON");
    cmd->add_option("--estimate-calib", estimate_fov,
                    "Estimate calibration from this horizontal FOV in degrees");
    cmd->add_option("--image-size", image_size, "Image size WxH for --estimate-calib");
  }

  std::unique_ptr<perception::RecBackend> rec() const {
    if (!rec_url.empty() == !rec_fixtures.empty()) {
      throw ValidationError("give exactly one of --rec-url or --rec-fixtures");
    }
    if (!rec_fixtures.empty()) return std::make_unique<perception::FixtureRecBackend>(rec_fixtures);
    return std::make_unique<perception::HttpRecBackend>(
        BackendConfig{rec_url, timeout_s, max_in_flight, "EGO3D_REC_TOKEN"});
  }

  std::unique_ptr<perception::DepthBackend> depth() const {
    if (!depth_url.empty() == !depth_fixtures.empty()) {
      throw ValidationError("give exactly one of --depth-url or --depth-fixtures");
    }
    if (!depth_fixtures.empty()) {
      return std::make_unique<perception::FixtureDepthBackend>(depth_fixtures);
    }
    return std::make_unique<perception::HttpDepthBackend>(
        BackendConfig{depth_url, timeout_s, max_in_flight, "EGO3D_DEPTH_TOKEN"});
  }

  std::vector<geometry::CameraCalibration> calibration(
      std::span<const perception::ViewImage> images) const {
    if (!calib.empty() && estimate_fov) {
      throw ValidationError("--calib and --estimate-calib are mutually exclusive");
    }
    if (!calib.empty()) return geometry::load_calibration(calib);
    if (!estimate_fov) throw ValidationError("give --calib or --estimate-calib <fov>");
    if (image_size.empty()) throw ValidationError("--estimate-calib needs --image-size WxH");
    std::vector<View> views;
    for (const auto& vi : images) views.push_back(vi.view);
    return geometry::estimated_calibration(views, parse_image_size(image_size), *estimate_fov);
  }

  pipeline::PipelineOptions options() const {
    pipeline::PipelineOptions o;
    o.locate.detect.score_threshold = score_threshold;
    o.locate.detect.best_match_only = best_match;
    o.locate.depth.median_5x5 = median_depth;
    o.relational_scaling = !no_scaling;
    if (!reference_classes.empty()) {
      o.reference_classes = scaling::load_reference_classes(reference_classes);
    }
    return o;
  }
};

// ------------------------------------------------------------------ gen-qa

struct GenQaFlags {
  std::vector<std::string> scenes;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;
  std::vector<std::string> perspectives;
  std::size_t max_per_group = 0;
  bool ground_plane = false;
};

int run_gen_qa(const GenQaFlags& f, Manifest& manifest, const CLI::App& app) {
  qa::GenOptions opts;
  if (!f.categories.empty()) {
    opts.categories.clear();
    for (const auto& c : f.categories) opts.categories.insert(qa::parse_category(c));
  }
  if (!f.perspectives.empty()) {
    opts.perspectives.clear();
    for (const auto& p : f.perspectives) opts.perspectives.insert(qa::parse_perspective(p));
  }
  opts.max_per_group = f.max_per_group;
  opts.motion_ground_plane = f.ground_plane;

  const auto files = expand_inputs(f.scenes);
  manifest.inputs = files;
  manifest.seeds = {{"seed", f.seed}};
  const auto scenes = load_scenes(files);
  for (std::size_t i = 1; i < scenes.size(); ++i) {
    if (scenes[i].scene_id == scenes[i - 1].scene_id) {
      throw ValidationError("duplicate scene id " + scenes[i].scene_id);
    }
  }
  std::vector<qa::QAItem> items;
  for (const auto& s : scenes) {
    for (auto& it : qa::generate_scene(s, f.seed, opts)) items.push_back(std::move(it));
  }
  const auto violations = qa::validate_qaset(items, opts);
  for (const auto& v : violations) std::cerr << v.item_id << ": " << v.message << "\n";
  write_file(f.out, qa::to_jsonl(items));
  manifest.write(f.out, app);
  std::cerr << fmt::format("wrote {} items from {} scenes to {}\n", items.size(), scenes.size(),
                           f.out);
  return violations.empty() ? kExitOk : kExitValidation;
}

// ------------------------------------------------------------------ cogmap

struct CogmapFlags {
  std::string images;
  std::vector<std::string> expressions;
  std::string from_qa;
  std::string qa_id;
  std::string format = "text";
  std::string out;
  PerceptionFlags perception;
};

int run_cogmap(const CogmapFlags& f, Manifest& manifest, const CLI::App& app) {
  const auto format = cogmap::parse_map_format(f.format);
  std::vector<std::string> expressions = f.expressions;
  if (!f.from_qa.empty()) {
    if (!expressions.empty()) throw ValidationError("--expressions and --from-qa are exclusive");
    std::set<std::string> seen;
    for (const auto& it : qa::read_jsonl(f.from_qa)) {
      if (!f.qa_id.empty() && it.id != f.qa_id) continue;
      for (const auto& c : it.meta.captions) {
        if (seen.insert(c).second) expressions.push_back(c);
      }
    }
    manifest.inputs.push_back(f.from_qa);
  }
  if (expressions.empty()) throw ValidationError("no expressions: use --expressions or --from-qa");

  const auto images = perception::discover_view_images(f.images);
  if (images.empty()) throw ValidationError("no per-view images in " + f.images);
  for (const auto& vi : images) manifest.inputs.push_back(vi.image);
  if (!f.perception.calib.empty()) manifest.inputs.push_back(f.perception.calib);
  const auto calib = f.perception.calibration(images);
  auto rec = f.perception.rec();
  auto depth = f.perception.depth();
  const auto result = pipeline::build_cognitive_map(images, expressions, calib, *rec, *depth,
                                                    f.perception.options());
  for (const auto& w : result.map.warnings) std::cerr << "warning: " << w << "\n";
  const std::string text = cogmap::render(result.map, format);
  if (f.out.empty()) {
    std::cout << text;
  } else {
    write_file(f.out, text);
    manifest.write(f.out, app);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateFlags {
  std::string qa;
  std::string mode = "baseline";
  std::string out;
  std::string vlm_url;
  std::string model = "default";
  double timeout_s = 120.0;
  int max_in_flight = 4;
  int retries = 2;
  double backoff_s = 0.5;
  int max_tokens = 2048;
  std::string mock_scripted;
  bool mock_oracle = false;
  std::string mock_log;
  std::vector<std::string> scenes;
  std::string images_root;
  std::string map_source = "gt";
  std::string map_format = "text";
  bool resume = false;
  PerceptionFlags perception;
};

std::vector<eval::Prediction> read_existing(const fs::path& p) {
  if (!fs::exists(p)) return {};
  return eval::read_predictions(p);
}

int run_evaluate(const EvaluateFlags& f, Manifest& manifest, const CLI::App& app) {
  const auto mode = vlm::parse_mode(f.mode);
  const auto map_format = cogmap::parse_map_format(f.map_format);
  if (f.map_source != "gt" && f.map_source != "perception") {
    throw ValidationError("--map-source must be gt or perception");
  }
  const bool needs_map = mode == vlm::Mode::Ego3D || mode == vlm::Mode::BlindCogmap;
  const bool needs_list = mode == vlm::Mode::DepthRecList;
  const bool use_perception = (needs_map && f.map_source == "perception") || needs_list;

  auto items = qa::read_jsonl(f.qa);
  manifest.inputs.push_back(f.qa);

  std::vector<qa::SceneSource> scenes;
  if (!f.scenes.empty()) {
    const auto files = expand_inputs(f.scenes);
    for (const auto& p : files) manifest.inputs.push_back(p);
    scenes = load_scenes(files);
  }
  const auto scene_index = qa::index_scenes(scenes);
  if (needs_map && f.map_source == "gt" && scenes.empty()) {
    throw ValidationError("--map-source gt needs --scenes");
  }

  std::unique_ptr<vlm::VlmBackend> backend;
  vlm::MockVlmBackend* mock = nullptr;
  const int backends = int(!f.vlm_url.empty()) + int(!f.mock_scripted.empty()) + int(f.mock_oracle);
  if (backends != 1) {
    throw ValidationError("give exactly one of --vlm-url, --mock-scripted or --mock-oracle");
  }
  if (!f.vlm_url.empty()) {
    backend = std::make_unique<vlm::HttpVlmBackend>(
        BackendConfig{f.vlm_url, f.timeout_s, f.max_in_flight, "EGO3D_VLM_TOKEN", f.retries,
                      f.backoff_s},
        vlm::ChatOptions{f.model, 0.0, f.max_tokens});
  } else {
    auto m = f.mock_oracle ? vlm::MockVlmBackend::oracle(items, scenes)
                           : vlm::MockVlmBackend::scripted(f.mock_scripted);
    auto owned = std::make_unique<vlm::MockVlmBackend>(std::move(m));
    mock = owned.get();
    backend = std::move(owned);
  }
  if (mock != nullptr && !f.mock_log.empty()) {
    if (fs::path(f.mock_log).has_parent_path()) {
      fs::create_directories(fs::path(f.mock_log).parent_path());
    }
    std::ofstream(f.mock_log, std::ios::trunc);
    mock->set_log_path(f.mock_log);
  }

  std::unique_ptr<perception::RecBackend> rec;
  std::unique_ptr<perception::DepthBackend> depth;
  if (use_perception) {
    rec = f.perception.rec();
    depth = f.perception.depth();
  }
  const auto pipeline_opts = f.perception.options();

  // Resume: keep answered items, re-ask the rest.
  std::map<std::string, eval::Prediction> done;
  if (f.resume) {
    for (auto& p : read_existing(f.out)) done.emplace(p.qa_id, std::move(p));
  }
  std::vector<const qa::QAItem*> todo;
  for (const auto& it : items) {
    if (!done.count(it.id)) todo.push_back(&it);
  }

  auto images_for = [&](const qa::QAItem& it) -> std::vector<perception::ViewImage> {
    if (f.images_root.empty()) return {};
    const fs::path dir = fs::path(f.images_root) / it.scene_id;
    if (!fs::is_directory(dir)) return {};
    return perception::discover_view_images(dir);
  };

  auto answer = [&](const qa::QAItem& it) -> eval::Prediction {
    const auto images = images_for(it);
    cogmap::CognitiveMap map;
    std::vector<vlm::ListDetection> list;
    vlm::PromptInputs in;
    in.images = images;
    in.map_format = map_format;
    if (use_perception) {
      if (images.empty()) {
        throw ValidationError(it.id + ": perception needs images under --images-root");
      }
      const auto calib = f.perception.calibration(images);
      auto result = pipeline::build_cognitive_map(images, it.meta.captions, calib, *rec, *depth,
                                                  pipeline_opts);
      map = std::move(result.map);
      for (const auto& o : result.located.objects) {
        list.push_back({o.view, o.expression, o.bbox, o.depth});
      }
    } else if (needs_map) {
      const auto s = scene_index.find(it.scene_id);
      if (s == scene_index.end()) throw ValidationError(it.id + ": scene not provided");
      std::vector<cogmap::LocatedPoint> pts;
      for (const auto& id : it.meta.object_ids) {
        const auto* o = qa::find_object(s->second, id);
        if (o == nullptr) throw ValidationError(it.id + ": unknown object " + id);
        pts.push_back({o->caption, qa::primary_view(*o), o->center});
      }
      map = cogmap::build_map(pts);
    }
    if (needs_map) in.map = &map;
    if (needs_list) in.detections = &list;
    const auto bundle = vlm::assemble_prompt(it, mode, in);
    const auto reply = backend->chat(bundle);
    return eval::parse_answer(reply.raw_text, it);
  };

  struct Outcome {
    std::optional<eval::Prediction> pred;
    std::string error;
    bool transport = false;
  };
  std::vector<Outcome> outcomes(todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        outcomes[i].pred = answer(*todo[i]);
      } catch (const TransportError& e) {
        outcomes[i].error = e.what();
        outcomes[i].transport = true;
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(std::max(1, f.max_in_flight), std::max<std::size_t>(1, todo.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::size_t failed = 0;
  std::size_t transport_failed = 0;
  std::size_t succeeded = 0;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    auto& o = outcomes[i];
    if (o.pred) {
      done.emplace(todo[i]->id, std::move(*o.pred));
      ++succeeded;
    } else {
      ++failed;
      if (o.transport) ++transport_failed;
      std::cerr << todo[i]->id << ": " << o.error << "\n";
    }
  }
  std::string text;
  for (const auto& [id, p] : done) text += eval::prediction_to_json(p).dump() + "\n";
  write_file(f.out, text);
  manifest.write(f.out, app);
  std::cerr << fmt::format("{} answered, {} failed, {} written to {}\n", succeeded, failed,
                           done.size(), f.out);
  if (failed == 0) return kExitOk;
  if (succeeded == 0 && transport_failed == failed && done.empty()) return kExitTransport;
  return kExitPartial;
}

// ------------------------------------------------------------------ report

struct ReportFlags {
  std::string preds;
  std::string qa;
  std::string out;
  std::string csv;
  std::string mode;
  std::string model;
};

int run_report(const ReportFlags& f, Manifest& manifest, const CLI::App& app) {
  const auto items = qa::read_jsonl(f.qa);
  const auto preds = eval::read_predictions(f.preds);
  manifest.inputs = {f.qa, f.preds};
  const auto report = eval::score(preds, items, f.mode, f.model);
  const std::string text = eval::report_to_json(report).dump(2) + "\n";
  if (f.out.empty()) {
    std::cout << text;
  } else {
    write_file(f.out, text);
    manifest.write(f.out, app);
  }
  if (!f.csv.empty()) write_file(f.csv, eval::report_csv(report));
  return kExitOk;
}

// ------------------------------------------------------------------ chance

struct ChanceFlags {
  std::string qa;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  std::string out;
};

int run_chance(const ChanceFlags& f, Manifest& manifest, const CLI::App& app) {
  const auto items = qa::read_jsonl(f.qa);
  manifest.inputs = {f.qa};
  manifest.seeds = {{"seed", f.seed}};
  const auto levels = eval::chance_level(items, f.trials, f.seed);
  json j = {{"trials", f.trials}, {"seed", f.seed}, {"accuracy", levels}};
  double sum = 0.0;
  for (const auto& [k, v] : levels) sum += v;
  j["avg_accuracy"] = levels.empty() ? json(nullptr) : json(sum / double(levels.size()));
  const std::string text = j.dump(2) + "\n";
  if (f.out.empty()) {
    std::cout << text;
  } else {
    write_file(f.out, text);
    manifest.write(f.out, app);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- validate

int run_validate(const std::string& qa_path) {
  const auto items = qa::read_jsonl(qa_path);
  const auto violations = qa::validate_qaset(items);
  for (const auto& v : violations) std::cout << v.item_id << ": " << v.message << "\n";
  std::cerr << fmt::format("{} items, {} violations\n", items.size(), violations.size());
  return violations.empty() ? kExitOk : kExitValidation;
}

// ---------------------------------------------------------- synth-fixtures

struct SynthFlags {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n_scenes = 3;
  std::size_t n_objects = 6;
  double depth_scale = 1.0;
};

struct Kind {
  const char* noun;
  const char* category;
  double height;
  const char* reference;  // reference-class name planted alongside, if any
};

int run_synth(const SynthFlags& f) {
  static const std::vector<Kind> kKinds = {
      {"sedan", "vehicle", 1.5, "sedan"},     {"truck", "vehicle", 3.0, nullptr},
      {"bus", "vehicle", 3.2, nullptr},       {"pedestrian", "pedestrian", 1.7, "person"},
      {"cyclist", "cyclist", 1.7, nullptr},   {"traffic cone", "", 0.7, nullptr},
  };
  static const std::vector<std::string> kColors = {"red",   "blue",  "white", "black",
                                                   "green", "yellow", "gray", "orange"};
  if (f.n_objects > kKinds.size() * kColors.size()) {
    throw ValidationError("too many objects for unique captions");
  }
  const std::vector<View> rig = {View::Front, View::FrontRight, View::BackRight,
                                 View::Back,  View::BackLeft,   View::FrontLeft};
  const geometry::ImageSize size{1600.0, 900.0};
  const auto calib = geometry::estimated_calibration(rig, size, 90.0);
  const fs::path root(f.out);
  write_file(root / "calib.json", geometry::calibration_to_json(calib).dump(2) + "\n");

  constexpr double kCameraHeight = 1.5;
  for (std::size_t s = 0; s < f.n_scenes; ++s) {
    const std::string scene_id = fmt::format("synth{:03d}", s);
    Rng rng(derive_seed(f.seed, scene_id));
    std::vector<std::size_t> pool(kKinds.size() * kColors.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    rng.shuffle(pool);

    qa::SceneSource scene;
    scene.scene_id = scene_id;
    scene.rig = rig;
    std::vector<perception::SyntheticObject> planted;
    for (std::size_t k = 0; k < f.n_objects; ++k) {
      const Kind& kind = kKinds[pool[k] % kKinds.size()];
      const std::string& color = kColors[pool[k] / kKinds.size()];
      qa::SceneObject obj;
      obj.id = fmt::format("{}-o{}", scene_id, k);
      obj.caption = kind.category == std::string("pedestrian")
                        ? fmt::format("pedestrian in {} jacket", color)
                        : fmt::format("{} {}", color, kind.noun);
      obj.category = kind.category;
      for (int attempt = 0; attempt < 100 && obj.views.empty(); ++attempt) {
        const View v = rig[rng.uniform_index(rig.size())];
        const double bearing = geometry::canonical_yaw_degrees(v) + (rng.uniform01() * 70.0 - 35.0);
        const double r = 6.0 + rng.uniform01() * 44.0;
        const double rad = geometry::degrees_to_radians(bearing);
        obj.center = {r * std::sin(rad), kCameraHeight - kind.height / 2.0, r * std::cos(rad)};
        for (const auto& cal : calib) {
          const auto cam = geometry::to_camera(obj.center, cal.extrinsics);
          if (cam.z <= 0.5) continue;
          if (cal.intrinsics.contains(geometry::project(cam, cal.intrinsics).pixel)) {
            obj.views.push_back(cal.view);
          }
        }
      }
      if (obj.views.empty()) throw GenerationError("could not place a visible object");
      if (kind.category != std::string("pedestrian")) {
        obj.yaw = (rng.uniform01() * 2.0 - 1.0) * 3.141592653589793;
      }
      obj.size = std::array<double, 3>{kind.height * 2.0, kind.height, kind.height};
      planted.push_back({obj.caption, obj.center, kind.height, kind.height});
      if (kind.reference != nullptr) {
        planted.push_back({kind.reference, obj.center, kind.height, kind.height * 0.6});
      }
      scene.objects.push_back(std::move(obj));
    }
    write_file(root / "scenes" / (scene_id + ".json"), qa::scene_to_json(scene).dump(2) + "\n");

    std::vector<perception::ViewImage> images;
    for (View v : rig) {
      const fs::path img = root / "images" / scene_id / (std::string(view_id(v)) + ".jpg");
      write_file(img, fmt::format("placeholder image {} {}\n", scene_id, view_id(v)));
      images.push_back({v, img});
    }
    perception::write_synthetic_fixtures(root / "fixtures", images, planted, calib, f.depth_scale);
  }
  std::cerr << fmt::format("wrote {} synthetic scenes to {}\n", f.n_scenes, f.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ego-centric multi-view spatial QA: generation, cognitive maps, evaluation"};
  app.set_config("--config", "", "TOML config file; command-line flags override it");
  app.set_version_flag("--version", EGO3D_VERSION);
  app.require_subcommand(1);

  Manifest manifest;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) manifest.command += ' ';
    manifest.command += argv[i];
  }

  GenQaFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-qa", "Generate QA items from scene source files");
  gen_cmd->add_option("--scenes", gen.scenes, "Scene files, directories or globs")->required();
  gen_cmd->add_option("--out", gen.out, "Output QA JSONL")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generation seed");
  gen_cmd->add_option("--categories", gen.categories, "Subset of categories")->delimiter(',');
  gen_cmd->add_option("--perspectives", gen.perspectives, "ego and/or object")->delimiter(',');
  gen_cmd->add_option("--max-per-group", gen.max_per_group,
                      "Cap items per scene, category, perspective and form (0 = all)");
  gen_cmd->add_flag("--ground-plane", gen.ground_plane, "Motion distances on the ground plane");

  CogmapFlags cm;
  auto* cm_cmd = app.add_subcommand("cogmap", "Build a cognitive map from per-view images");
  cm_cmd->add_option("--images", cm.images, "Directory of per-view images")->required();
  cm_cmd->add_option("--expressions", cm.expressions, "Referring expressions")->delimiter(',');
  cm_cmd->add_option("--from-qa", cm.from_qa, "Take expressions from a QA file's captions");
  cm_cmd->add_option("--qa-id", cm.qa_id, "With --from-qa, only this item");
  cm_cmd->add_option("--format", cm.format, "text, json or svg");
  cm_cmd->add_option("--out", cm.out, "Output file (stdout when absent)");
  cm.perception.add_to(cm_cmd);

  EvaluateFlags ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Ask a VLM every question and parse its replies");
  ev_cmd->add_option("--qa", ev.qa, "QA JSONL")->required();
  ev_cmd->add_option("--mode", ev.mode, "baseline, ego3d, blind, blind-cogmap or list");
  ev_cmd->add_option("--out", ev.out, "Predictions JSONL")->required();
  ev_cmd->add_option("--vlm-url", ev.vlm_url, "Chat-completions base URL");
  ev_cmd->add_option("--model", ev.model, "Model name sent to the backend");
  ev_cmd->add_option("--timeout", ev.timeout_s, "VLM request timeout in seconds");
  ev_cmd->add_option("--max-in-flight", ev.max_in_flight, "Concurrent VLM requests");
  ev_cmd->add_option("--retries", ev.retries, "Extra attempts after a failed VLM request");
  ev_cmd->add_option("--backoff", ev.backoff_s, "First retry delay in seconds; doubles each retry");
  ev_cmd->add_option("--max-tokens", ev.max_tokens, "Completion token limit");
  ev_cmd->add_option("--mock-scripted", ev.mock_scripted, "Directory of <qa_id>.txt replies");
  ev_cmd->add_flag("--mock-oracle", ev.mock_oracle, "Answer from scene geometry (needs --scenes)");
  ev_cmd->add_option("--mock-log", ev.mock_log, "Write mock requests as JSONL");
  ev_cmd->add_option("--scenes", ev.scenes, "Scene files for gt maps and the oracle");
  ev_cmd->add_option("--images-root", ev.images_root, "Directory holding <scene_id>/ images");
  ev_cmd->add_option("--map-source", ev.map_source, "gt or perception");
  ev_cmd->add_option("--map-format", ev.map_format, "text or json");
  ev_cmd->add_flag("--resume", ev.resume, "Skip qa_ids already in --out");
  ev.perception.add_to(ev_cmd);

  ReportFlags rp;
  auto* rp_cmd = app.add_subcommand("report", "Score predictions");
  rp_cmd->add_option("--preds", rp.preds, "Predictions JSONL")->required();
  rp_cmd->add_option("--qa", rp.qa, "QA JSONL")->required();
  rp_cmd->add_option("--out", rp.out, "Report JSON (stdout when absent)");
  rp_cmd->add_option("--csv", rp.csv, "Also write a one-row CSV summary");
  rp_cmd->add_option("--mode", rp.mode, "Mode label for the report");
  rp_cmd->add_option("--model", rp.model, "Model label for the report");

  ChanceFlags ch;
  auto* ch_cmd = app.add_subcommand("chance", "Chance level by uniform random selection");
  ch_cmd->add_option("--qa", ch.qa, "QA JSONL")->required();
  ch_cmd->add_option("--trials", ch.trials, "Passes over the set");
  ch_cmd->add_option("--seed", ch.seed, "Seed");
  ch_cmd->add_option("--out", ch.out, "Output JSON (stdout when absent)");

  std::string validate_qa;
  auto* va_cmd = app.add_subcommand("validate", "Check QA item invariants");
  va_cmd->add_option("--qa", validate_qa, "QA JSONL")->required();

  SynthFlags sy;
  auto* sy_cmd = app.add_subcommand("synth-fixtures", "Write a synthetic scene set with fixtures");
  sy_cmd->add_option("--out", sy.out, "Output directory")->required();
  sy_cmd->add_option("--seed", sy.seed, "Seed");
  sy_cmd->add_option("--scenes", sy.n_scenes, "Number of scenes");
  sy_cmd->add_option("--objects", sy.n_objects, "Objects per scene");
  sy_cmd->add_option("--depth-scale", sy.depth_scale, "Multiply fixture depths (scale error)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*gen_cmd) {
      manifest.subcommand = "gen-qa";
      return run_gen_qa(gen, manifest, app);
    }
    if (*cm_cmd) {
      manifest.subcommand = "cogmap";
      return run_cogmap(cm, manifest, app);
    }
    if (*ev_cmd) {
      manifest.subcommand = "evaluate";
      return run_evaluate(ev, manifest, app);
    }
    if (*rp_cmd) {
      manifest.subcommand = "report";
      return run_report(rp, manifest, app);
    }
    if (*ch_cmd) {
      manifest.subcommand = "chance";
      return run_chance(ch, manifest, app);
    }
    if (*va_cmd) return run_validate(validate_qa);
    if (*sy_cmd) return run_synth(sy);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

}  // namespace ego3d::cli

int main(int argc, char** argv) { return ego3d::cli::main(argc, argv); }
