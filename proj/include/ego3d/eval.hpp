#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ego3d/qa.hpp"

namespace ego3d::eval {

struct Prediction {
  std::string qa_id;
  std::optional<std::size_t> choice;  // MultiChoice option index; YesNo: 0 yes, 1 no
  std::optional<double> meters;       // AbsoluteMeters
  std::string raw_text;

  bool parse_failed() const noexcept { return !choice && !meters; }
};

/// Contents of the first <answer>...</answer> block, if any.
std::optional<std::string> answer_block(std::string_view raw);

/// Parses the answer block (or, without one, the whole reply):
///   MultiChoice: first standalone letter within the item's option range,
///                case-insensitive; failing that, an option's text
///   YesNo:       first "yes" or "no" word
///   Absolute:    first real number
Prediction parse_answer(std::string_view raw, const qa::QAItem& item);

nlohmann::json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

/// Table columns: accuracy in this order, then the two RMSE columns.
inline constexpr std::array<std::string_view, 8> kAccuracyColumns = {
    "EgoDist", "ObjDist", "Loc", "EgoMot", "ObjMot", "TravelTime", "EgoRel", "ObjRel"};
inline constexpr std::array<std::string_view, 2> kRmseColumns = {"EgoDist", "ObjDist"};

/// Index into kAccuracyColumns for a MultiChoice / YesNo item.
std::optional<std::size_t> accuracy_column(const qa::QAItem& item) noexcept;
/// Index into kRmseColumns for an AbsoluteMeters item.
std::optional<std::size_t> rmse_column(const qa::QAItem& item) noexcept;

struct AccuracyCell {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t parse_failures = 0;  // counted as incorrect
  std::optional<double> accuracy;  // percent; absent when total == 0
};

struct RmseCell {
  std::size_t total = 0;
  std::size_t parsed = 0;
  std::size_t parse_failures = 0;  // excluded from the RMSE
  std::optional<double> rmse;      // meters; absent when nothing parsed
};

struct EvalReport {
  std::string mode;
  std::string model;
  std::array<AccuracyCell, 8> accuracy;
  std::array<RmseCell, 2> rmse;
  std::optional<double> avg_accuracy;  // mean of columns with items
  std::optional<double> avg_rmse;      // mean of defined RMSE columns
  std::size_t n_items = 0;
  std::size_t n_predictions = 0;
  std::size_t n_missing = 0;  // items without a prediction, excluded everywhere
  std::size_t n_parse_failures = 0;
  double parse_failure_rate = 0.0;  // over predictions
};

/// Throws ValidationError for predictions naming unknown or repeated qa_ids.
EvalReport score(std::span<const Prediction> preds, std::span<const qa::QAItem> items,
                 std::string mode = {}, std::string model = {});

/// Accuracy (%) per column of uniform random option selection, `trials`
/// passes over the set.
std::map<std::string, double> chance_level(std::span<const qa::QAItem> items,
                                           std::size_t trials, std::uint64_t seed);

nlohmann::json report_to_json(const EvalReport& r);
std::string report_csv(const EvalReport& r);

}  // namespace ego3d::eval
