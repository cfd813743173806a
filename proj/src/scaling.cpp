#include "ego3d/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "ego3d/errors.hpp"

namespace ego3d::scaling {

namespace {

constexpr double kMinRatio = 0.3;
constexpr double kMaxRatio = 3.0;

}  // namespace

double observed_height(const HeightObservation& obs) {
  obs.bbox.validate();
  if (!(obs.depth > 0.0) || !std::isfinite(obs.depth)) {
    throw ValidationError("height observation needs a positive depth");
  }
  if (!(obs.fy > 0.0) || !std::isfinite(obs.fy)) {
    throw ValidationError("height observation needs a positive focal length");
  }
  return obs.bbox.height() * obs.depth / obs.fy;
}

ScaleEstimate estimate_scale(std::span<const HeightObservation> observations,
                             std::span<const ReferenceClass> classes) {
  struct Pool {
    const ReferenceClass* cls = nullptr;
    std::vector<double> heights;
  };
  std::map<std::string, Pool> pools;
  for (const auto& c : classes) {
    if (!(c.canonical_height > 0.0)) {
      throw ValidationError(fmt::format("reference class '{}' needs a positive height", c.name));
    }
    pools[c.name].cls = &c;
  }

  for (const auto& obs : observations) {
    auto it = pools.find(obs.class_name);
    if (it == pools.end()) continue;
    const double h = observed_height(obs);
    const double hcs = it->second.cls->canonical_height;
    if (h >= kMinRatio * hcs && h <= kMaxRatio * hcs) it->second.heights.push_back(h);
  }

  const Pool* best = nullptr;
  for (const auto& [name, pool] : pools) {
    if (pool.heights.empty()) continue;
    if (best == nullptr || pool.heights.size() > best->heights.size() ||
        (pool.heights.size() == best->heights.size() &&
         pool.cls->canonical_height > best->cls->canonical_height)) {
      best = &pool;
    }
  }
  if (best == nullptr) throw NoReferenceError("no usable reference-class observations");

  double sum = 0.0;
  for (double h : best->heights) sum += h;
  ScaleEstimate est;
  est.h_est = sum / static_cast<double>(best->heights.size());
  est.factor = best->cls->canonical_height / est.h_est;
  est.class_used = best->cls->name;
  est.n_observations = best->heights.size();
  return est;
}

geometry::GlobalPoint apply_scale(const geometry::GlobalPoint& p, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw DomainError(fmt::format("scale factor must be positive, got {}", s));
  }
  return {p.x * s, p.y * s, p.z * s};
}

std::vector<geometry::GlobalPoint> apply_scale(std::span<const geometry::GlobalPoint> points,
                                               double s) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw DomainError(fmt::format("scale factor must be positive, got {}", s));
  }
  std::vector<geometry::GlobalPoint> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({p.x * s, p.y * s, p.z * s});
  return out;
}

std::vector<ReferenceClass> default_reference_classes() {
  return {{"person", 1.7}, {"sedan", 1.5}, {"bike", 1.1}};
}

std::vector<ReferenceClass> reference_classes_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("classes") || !j.at("classes").is_array()) {
    throw ValidationError("reference classes: expected {\"classes\": [...]}");
  }
  std::vector<ReferenceClass> out;
  for (const auto& c : j.at("classes")) {
    if (!c.is_object() || !c.contains("name") || !c.at("name").is_string() ||
        !c.contains("canonical_height_m") || !c.at("canonical_height_m").is_number()) {
      throw ValidationError("reference classes: entries need name and canonical_height_m");
    }
    ReferenceClass rc{c.at("name").get<std::string>(), c.at("canonical_height_m").get<double>()};
    if (!(rc.canonical_height > 0.0)) {
      throw ValidationError(fmt::format("reference class '{}' needs a positive height", rc.name));
    }
    out.push_back(std::move(rc));
  }
  return out;
}

nlohmann::json reference_classes_to_json(std::span<const ReferenceClass> classes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : classes) {
    arr.push_back({{"name", c.name}, {"canonical_height_m", c.canonical_height}});
  }
  return {{"classes", arr}};
}

std::vector<ReferenceClass> load_reference_classes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open reference class file " + path.string());
  try {
    return reference_classes_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("reference class file " + path.string() + ": " + e.what());
  }
}

nlohmann::json scale_to_json(const ScaleEstimate& s) {
  return {{"factor", s.factor},
          {"h_est_m", s.h_est},
          {"class_used", s.class_used},
          {"n_observations", s.n_observations}};
}

ScaleEstimate scale_from_json(const nlohmann::json& j) {
  try {
    return {j.at("factor").get<double>(), j.at("h_est_m").get<double>(),
            j.at("class_used").get<std::string>(), j.at("n_observations").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scale estimate: ") + e.what());
  }
}

}  // namespace ego3d::scaling
