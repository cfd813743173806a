#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ego3d/errors.hpp"
#include "ego3d/eval.hpp"

using namespace ego3d;
using namespace ego3d::eval;
using qa::Category;
using qa::Form;
using qa::Perspective;

namespace {

qa::QAItem mc(std::string id, std::size_t n_options, std::size_t answer,
              Category c = Category::Localization, Perspective p = Perspective::Ego) {
  qa::QAItem it;
  it.id = std::move(id);
  it.category = c;
  it.perspective = p;
  it.form = Form::MultiChoice;
  for (std::size_t i = 0; i < n_options; ++i) it.options.push_back("option " + std::to_string(i));
  it.answer_index = answer;
  return it;
}

qa::QAItem abs_item(std::string id, double meters, Perspective p = Perspective::Ego) {
  qa::QAItem it;
  it.id = std::move(id);
  it.category = Category::AbsDist;
  it.perspective = p;
  it.form = Form::AbsoluteMeters;
  it.answer_value = meters;
  return it;
}

qa::QAItem yn(std::string id, std::size_t answer) {
  qa::QAItem it;
  it.id = std::move(id);
  it.category = Category::Motion;
  it.form = Form::YesNo;
  it.options = qa::kYesNoOptions;
  it.answer_index = answer;
  return it;
}

Prediction choice(std::string id, std::size_t c) { return {std::move(id), c, std::nullopt, ""}; }
Prediction meters(std::string id, double m) { return {std::move(id), std::nullopt, m, ""}; }
Prediction failed(std::string id) { return {std::move(id), std::nullopt, std::nullopt, ""}; }

}  // namespace

TEST(ParseAnswer, Examples) {
  const auto item = mc("a", 4, 1);
  auto p = parse_answer("<think>the car is left</think><answer>B</answer>", item);
  ASSERT_TRUE(p.choice);
  EXPECT_EQ(*p.choice, 1u);
  p = parse_answer("no tags, final answer: C.", item);
  ASSERT_TRUE(p.choice);
  EXPECT_EQ(*p.choice, 2u);
  p = parse_answer("<answer>about 12.5 meters</answer>", abs_item("m", 10));
  ASSERT_TRUE(p.meters);
  EXPECT_DOUBLE_EQ(*p.meters, 12.5);
  p = parse_answer("<answer>12m</answer>", abs_item("m", 10));
  ASSERT_TRUE(p.meters);
  EXPECT_DOUBLE_EQ(*p.meters, 12.0);
}

TEST(ParseAnswer, LettersAndFallbacks) {
  const auto item = mc("a", 4, 1);
  EXPECT_EQ(parse_answer("<answer>(d)</answer>", item).choice, 3u);
  EXPECT_EQ(parse_answer("<ANSWER> a </ANSWER>", item).choice, 0u);
  // Letter outside the option range is ignored.
  EXPECT_FALSE(parse_answer("<answer>E</answer>", item).choice.has_value());
  // Think block mentions other letters; only the answer block counts.
  EXPECT_EQ(parse_answer("<think>A or B?</think><answer>D</answer>", item).choice, 3u);
  // Option text instead of a letter.
  EXPECT_EQ(parse_answer("<answer>option 2</answer>", item).choice, 2u);
  EXPECT_TRUE(parse_answer("<answer></answer>", item).parse_failed());
  EXPECT_TRUE(parse_answer("I cannot tell.", mc("b", 2, 0)).parse_failed());
}

TEST(ParseAnswer, YesNo) {
  EXPECT_EQ(parse_answer("<answer>Yes.</answer>", yn("y", 0)).choice, 0u);
  EXPECT_EQ(parse_answer("<answer>no</answer>", yn("y", 0)).choice, 1u);
  EXPECT_EQ(parse_answer("it will not get closer, so: No", yn("y", 0)).choice, 1u);
  EXPECT_TRUE(parse_answer("<answer>maybe</answer>", yn("y", 0)).parse_failed());
  EXPECT_TRUE(parse_answer("<answer>nothing</answer>", yn("y", 0)).parse_failed());
}

TEST(ParseAnswer, NumberForms) {
  const auto it = abs_item("m", 1);
  EXPECT_DOUBLE_EQ(*parse_answer("<answer>-3.5e1</answer>", it).meters, -35.0);
  EXPECT_DOUBLE_EQ(*parse_answer("<answer>.5 meters</answer>", it).meters, 0.5);
  EXPECT_TRUE(parse_answer("<answer>far</answer>", it).parse_failed());
}

TEST(PredictionJson, RoundTrip) {
  for (const auto& p : {choice("a", 2), meters("b", 12.0), failed("c")}) {
    const auto back = prediction_from_json(prediction_to_json(p));
    EXPECT_EQ(back.qa_id, p.qa_id);
    EXPECT_EQ(back.choice, p.choice);
    EXPECT_EQ(back.meters, p.meters);
  }
}

TEST(Score, Accuracy) {
  const std::vector<qa::QAItem> items = {mc("a", 4, 0), mc("b", 4, 1), mc("c", 4, 2), mc("d", 4, 3)};
  const std::vector<Prediction> preds = {choice("a", 0), choice("b", 1), choice("c", 2), choice("d", 0)};
  const auto r = score(preds, items);
  EXPECT_EQ(r.accuracy[2].total, 4u);
  EXPECT_EQ(r.accuracy[2].correct, 3u);
  EXPECT_DOUBLE_EQ(*r.accuracy[2].accuracy, 75.0);
  EXPECT_DOUBLE_EQ(*r.avg_accuracy, 75.0);
  auto shuffled = preds;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(report_to_json(score(shuffled, items)), report_to_json(r));
}

TEST(Score, Rmse) {
  const std::vector<qa::QAItem> items = {abs_item("a", 13), abs_item("b", 16)};
  const std::vector<Prediction> preds = {meters("a", 10), meters("b", 20)};
  const auto r = score(preds, items);
  ASSERT_TRUE(r.rmse[0].rmse);
  EXPECT_NEAR(*r.rmse[0].rmse, std::sqrt((9.0 + 16.0) / 2.0), 1e-12);
  EXPECT_NEAR(*r.rmse[0].rmse, 3.5355, 1e-4);
  EXPECT_FALSE(r.rmse[1].rmse);
  EXPECT_NEAR(*r.avg_rmse, *r.rmse[0].rmse, 1e-12);
}

TEST(Score, AllParseFailures) {
  const std::vector<qa::QAItem> items = {abs_item("a", 13), abs_item("b", 16)};
  const std::vector<Prediction> preds = {failed("a"), failed("b")};
  const auto r = score(preds, items);
  EXPECT_FALSE(r.rmse[0].rmse.has_value());
  EXPECT_EQ(r.rmse[0].parse_failures, 2u);
  EXPECT_DOUBLE_EQ(r.parse_failure_rate, 1.0);
  const auto j = report_to_json(r);
  EXPECT_TRUE(j.at("rmse").at("EgoDist").at("rmse").is_null());
  EXPECT_EQ(j.at("rmse").at("EgoDist").at("parse_failure_rate"), 1.0);
}

TEST(Score, ParseFailureCountsWrongForChoices) {
  const std::vector<qa::QAItem> items = {mc("a", 2, 0), mc("b", 2, 1)};
  const std::vector<Prediction> preds = {failed("a"), choice("b", 1)};
  const auto r = score(preds, items);
  EXPECT_DOUBLE_EQ(*r.accuracy[2].accuracy, 50.0);
  EXPECT_EQ(r.accuracy[2].parse_failures, 1u);
}

TEST(Score, AveragesAreColumnMeans) {
  const std::vector<qa::QAItem> items = {
      mc("a", 4, 0, Category::AbsDist), mc("b", 4, 0, Category::AbsDist, Perspective::Object),
      mc("c", 2, 0, Category::RelDist), mc("d", 2, 1, Category::RelDist),
      abs_item("e", 10), abs_item("f", 10, Perspective::Object)};
  const std::vector<Prediction> preds = {choice("a", 0), choice("b", 1), choice("c", 0),
                                         choice("d", 0), meters("e", 12), meters("f", 6)};
  const auto r = score(preds, items);
  EXPECT_NEAR(*r.avg_accuracy, (100.0 + 0.0 + 50.0) / 3.0, 1e-9);
  EXPECT_NEAR(*r.avg_rmse, (2.0 + 4.0) / 2.0, 1e-9);
}

TEST(Score, Errors) {
  const std::vector<qa::QAItem> items = {mc("a", 4, 0)};
  const std::vector<Prediction> unknown = {choice("zzz", 0)};
  EXPECT_THROW(score(unknown, items), ValidationError);
  const std::vector<Prediction> twice = {choice("a", 0), choice("a", 1)};
  EXPECT_THROW(score(twice, items), ValidationError);
  const std::vector<Prediction> none;
  const auto r = score(none, items);
  EXPECT_EQ(r.n_missing, 1u);
  EXPECT_FALSE(r.avg_accuracy.has_value());
}

TEST(Chance, ConvergesToOneOverN) {
  std::vector<qa::QAItem> items;
  for (int i = 0; i < 500; ++i) items.push_back(mc("l" + std::to_string(i), 4, i % 4));
  for (int i = 0; i < 500; ++i) {
    items.push_back(mc("r" + std::to_string(i), 2, i % 2, Category::RelDist));
  }
  const std::size_t trials = 20;
  const auto c = chance_level(items, trials, 5);
  const double n = 500.0 * trials;
  EXPECT_NEAR(c.at("Loc"), 25.0, 300.0 * std::sqrt(0.25 * 0.75 / n));
  EXPECT_NEAR(c.at("EgoRel"), 50.0, 300.0 * std::sqrt(0.25 / n));
  EXPECT_EQ(c, chance_level(items, trials, 5));
}

TEST(Report, CsvAndVersion) {
  const std::vector<qa::QAItem> items = {mc("a", 4, 0), abs_item("b", 10)};
  const std::vector<Prediction> preds = {choice("a", 0), meters("b", 11)};
  const auto r = score(preds, items, "ego3d", "m");
  EXPECT_EQ(report_to_json(r).at("report_version"), 1);
  const auto csv = report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,mode,EgoDist,ObjDist,Loc,EgoMot,ObjMot,TravelTime,EgoRel,ObjRel,Avg,"
            "RMSE_EgoDist,RMSE_ObjDist,RMSE_Avg");
  EXPECT_NE(csv.find("m,ego3d,-,-,100.0,-,-,-,-,-,100.0,1.00,-,1.00"), std::string::npos) << csv;
}
