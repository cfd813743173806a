#include "ego3d/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ego3d/errors.hpp"
#include "ego3d/rng.hpp"

namespace ego3d::eval {

namespace fs = std::filesystem;
using nlohmann::json;
using qa::Category;
using qa::Form;
using qa::Perspective;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::optional<std::size_t> find_letter(std::string_view text, std::size_t n_options) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    if (c < 'A' || c >= static_cast<char>('A' + n_options)) continue;
    const bool before = i == 0 || !is_alnum(text[i - 1]);
    const bool after = i + 1 == text.size() || !is_alnum(text[i + 1]);
    if (before && after) return static_cast<std::size_t>(c - 'A');
  }
  return std::nullopt;
}

std::optional<std::size_t> find_option_text(std::string_view text,
                                            const std::vector<std::string>& options) {
  const std::string t = lower(text);
  std::optional<std::size_t> best;
  std::size_t best_pos = std::string::npos;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const std::string o = lower(options[i]);
    if (o.empty()) continue;
    for (auto pos = t.find(o); pos != std::string::npos; pos = t.find(o, pos + 1)) {
      const bool before = pos == 0 || !is_alnum(t[pos - 1]);
      const std::size_t end = pos + o.size();
      const bool after = end == t.size() || (!is_alnum(t[end]) && t[end] != '-');
      if (before && after) {
        // Prefer the earliest match, and the longer option at the same spot.
        if (pos < best_pos || (pos == best_pos && o.size() > lower(options[*best]).size())) {
          best = i;
          best_pos = pos;
        }
        break;
      }
    }
  }
  return best;
}

std::optional<std::size_t> find_yes_no(std::string_view text) {
  static const std::regex re(R"(\b(yes|no)\b)", std::regex::icase);
  std::cmatch m;
  if (!std::regex_search(text.data(), text.data() + text.size(), m, re)) return std::nullopt;
  return lower(m[1].str()) == "yes" ? 0 : 1;
}

std::optional<double> find_number(std::string_view text) {
  static const std::regex re(R"([-+]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][-+]?[0-9]+)?)");
  std::cmatch m;
  if (!std::regex_search(text.data(), text.data() + text.size(), m, re)) return std::nullopt;
  try {
    const double v = std::stod(m[0].str());
    if (std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

std::optional<double> mean(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string cell(const std::optional<double>& v, int digits) {
  return v ? fmt::format("{:.{}f}", *v, digits) : std::string("-");
}

}  // namespace

std::optional<std::string> answer_block(std::string_view raw) {
  const std::string l = lower(raw);
  const auto open = l.find("<answer>");
  if (open == std::string::npos) return std::nullopt;
  const auto start = open + std::string_view("<answer>").size();
  const auto close = l.find("</answer>", start);
  return std::string(raw.substr(start, close == std::string::npos ? std::string::npos
                                                                  : close - start));
}

Prediction parse_answer(std::string_view raw, const qa::QAItem& item) {
  Prediction p;
  p.qa_id = item.id;
  p.raw_text = std::string(raw);
  const auto block = answer_block(raw);
  const std::string_view text = block ? std::string_view(*block) : raw;
  switch (item.form) {
    case Form::MultiChoice:
      p.choice = find_letter(text, item.options.size());
      if (!p.choice) p.choice = find_option_text(text, item.options);
      break;
    case Form::YesNo: p.choice = find_yes_no(text); break;
    case Form::AbsoluteMeters: p.meters = find_number(text); break;
  }
  return p;
}

json prediction_to_json(const Prediction& p) {
  json parsed = nullptr;
  if (p.meters) {
    parsed = *p.meters;
  } else if (p.choice) {
    parsed = *p.choice;
  }
  return {{"qa_id", p.qa_id}, {"parsed", parsed}, {"raw_text", p.raw_text}};
}

Prediction prediction_from_json(const json& j) {
  try {
    Prediction p;
    p.qa_id = j.at("qa_id").get<std::string>();
    p.raw_text = j.value("raw_text", "");
    const auto& v = j.at("parsed");
    if (v.is_number_unsigned() || v.is_number_integer()) {
      p.choice = v.get<std::size_t>();
    } else if (v.is_number_float()) {
      p.meters = v.get<double>();
    } else if (!v.is_null()) {
      throw ValidationError("'parsed' must be an option index, a number or null");
    }
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid prediction: ") + e.what());
  }
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ValidationError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

std::optional<std::size_t> accuracy_column(const qa::QAItem& item) noexcept {
  if (item.form == Form::AbsoluteMeters) return std::nullopt;
  const bool ego = item.perspective == Perspective::Ego;
  switch (item.category) {
    case Category::AbsDist: return ego ? 0 : 1;
    case Category::Localization: return 2;
    case Category::Motion: return ego ? 3 : 4;
    case Category::TravelTime: return 5;
    case Category::RelDist: return ego ? 6 : 7;
  }
  return std::nullopt;
}

std::optional<std::size_t> rmse_column(const qa::QAItem& item) noexcept {
  if (item.form != Form::AbsoluteMeters || item.category != Category::AbsDist) {
    return std::nullopt;
  }
  return item.perspective == Perspective::Ego ? 0 : 1;
}

EvalReport score(std::span<const Prediction> preds, std::span<const qa::QAItem> items,
                 std::string mode, std::string model) {
  std::map<std::string_view, const qa::QAItem*> by_id;
  for (const auto& it : items) {
    if (!by_id.emplace(it.id, &it).second) {
      throw ValidationError(fmt::format("duplicate QA id '{}'", it.id));
    }
  }
  EvalReport r;
  r.mode = std::move(mode);
  r.model = std::move(model);
  r.n_items = items.size();
  r.n_predictions = preds.size();

  std::array<double, 2> sq_err{};
  std::set<std::string_view> answered;
  for (const auto& p : preds) {
    const auto found = by_id.find(p.qa_id);
    if (found == by_id.end()) {
      throw ValidationError(fmt::format("prediction for unknown qa_id '{}'", p.qa_id));
    }
    if (!answered.insert(found->first).second) {
      throw ValidationError(fmt::format("two predictions for qa_id '{}'", p.qa_id));
    }
    const auto& item = *found->second;
    if (p.parse_failed()) ++r.n_parse_failures;
    if (const auto c = accuracy_column(item)) {
      auto& cell = r.accuracy[*c];
      ++cell.total;
      if (!p.choice) {
        ++cell.parse_failures;
      } else if (*p.choice == item.answer_index) {
        ++cell.correct;
      }
    } else if (const auto c = rmse_column(item)) {
      auto& cell = r.rmse[*c];
      ++cell.total;
      if (!p.meters) {
        ++cell.parse_failures;
      } else {
        ++cell.parsed;
        const double e = *p.meters - item.answer_value;
        sq_err[*c] += e * e;
      }
    }
  }
  r.n_missing = items.size() - answered.size();
  r.parse_failure_rate =
      preds.empty() ? 0.0
                    : static_cast<double>(r.n_parse_failures) / static_cast<double>(preds.size());

  std::vector<double> accs;
  for (auto& cell : r.accuracy) {
    if (cell.total == 0) continue;
    cell.accuracy = 100.0 * static_cast<double>(cell.correct) / static_cast<double>(cell.total);
    accs.push_back(*cell.accuracy);
  }
  std::vector<double> rmses;
  for (std::size_t i = 0; i < r.rmse.size(); ++i) {
    auto& cell = r.rmse[i];
    if (cell.parsed == 0) continue;
    cell.rmse = std::sqrt(sq_err[i] / static_cast<double>(cell.parsed));
    rmses.push_back(*cell.rmse);
  }
  r.avg_accuracy = mean(accs);
  r.avg_rmse = mean(rmses);
  return r;
}

std::map<std::string, double> chance_level(std::span<const qa::QAItem> items, std::size_t trials,
                                           std::uint64_t seed) {
  if (trials == 0) throw ValidationError("chance level needs at least one trial");
  Rng rng(derive_seed(seed, "chance"));
  std::array<std::size_t, 8> hits{};
  std::array<std::size_t, 8> totals{};
  for (std::size_t t = 0; t < trials; ++t) {
    for (const auto& it : items) {
      const auto c = accuracy_column(it);
      if (!c || it.options.empty()) continue;
      ++totals[*c];
      if (rng.uniform_index(it.options.size()) == it.answer_index) ++hits[*c];
    }
  }
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < kAccuracyColumns.size(); ++i) {
    if (totals[i] == 0) continue;
    out[std::string(kAccuracyColumns[i])] =
        100.0 * static_cast<double>(hits[i]) / static_cast<double>(totals[i]);
  }
  return out;
}

json report_to_json(const EvalReport& r) {
  json acc = json::object();
  for (std::size_t i = 0; i < r.accuracy.size(); ++i) {
    const auto& c = r.accuracy[i];
    acc[std::string(kAccuracyColumns[i])] = {{"accuracy", opt_number(c.accuracy)},
                                             {"correct", c.correct},
                                             {"total", c.total},
                                             {"parse_failures", c.parse_failures}};
  }
  json rmse = json::object();
  for (std::size_t i = 0; i < r.rmse.size(); ++i) {
    const auto& c = r.rmse[i];
    const double rate = c.total == 0 ? 0.0
                                     : static_cast<double>(c.parse_failures) /
                                           static_cast<double>(c.total);
    rmse[std::string(kRmseColumns[i])] = {{"rmse", opt_number(c.rmse)},
                                          {"parsed", c.parsed},
                                          {"total", c.total},
                                          {"parse_failures", c.parse_failures},
                                          {"parse_failure_rate", rate}};
  }
  return {{"report_version", 1},
          {"mode", r.mode},
          {"model", r.model},
          {"accuracy", acc},
          {"rmse", rmse},
          {"avg_accuracy", opt_number(r.avg_accuracy)},
          {"avg_rmse", opt_number(r.avg_rmse)},
          {"parse_failure_rate", r.parse_failure_rate},
          {"counts",
           {{"items", r.n_items},
            {"predictions", r.n_predictions},
            {"missing", r.n_missing},
            {"parse_failures", r.n_parse_failures}}}};
}

std::string report_csv(const EvalReport& r) {
  std::string header = "model,mode";
  std::string row = fmt::format("{},{}", r.model, r.mode);
  for (std::size_t i = 0; i < r.accuracy.size(); ++i) {
    header += fmt::format(",{}", kAccuracyColumns[i]);
    row += "," + cell(r.accuracy[i].accuracy, 1);
  }
  header += ",Avg";
  row += "," + cell(r.avg_accuracy, 1);
  for (std::size_t i = 0; i < r.rmse.size(); ++i) {
    header += fmt::format(",RMSE_{}", kRmseColumns[i]);
    row += "," + cell(r.rmse[i].rmse, 2);
  }
  header += ",RMSE_Avg";
  row += "," + cell(r.avg_rmse, 2);
  return header + "\n" + row + "\n";
}

}  // namespace ego3d::eval
