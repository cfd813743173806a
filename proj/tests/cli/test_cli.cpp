#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <regex>
#include <set>
#include <string>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ego3d/eval.hpp"
#include "ego3d/qa.hpp"
#include "../unit/test_support.hpp"

namespace fs = std::filesystem;
using ego3d::test::expect_golden;
using ego3d::test::read_text;
using ego3d::test::TempDir;
using ego3d::test::write_text;
using nlohmann::json;

namespace {

const fs::path kGolden = EGO3D_GOLDEN_DIR;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run ego3d_cli(const TempDir& t, const std::string& args) {
  const auto out = t / "stdout.txt";
  const auto err = t / "stderr.txt";
  const std::string cmd = std::string("'") + EGO3D_CLI + "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(out), read_text(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Synthetic rig with fixtures: calib.json, scenes/, images/<scene>/, fixtures/.
fs::path synth(const TempDir& t, int objects = 5) {
  const auto dir = t / "synth";
  const auto r = ego3d_cli(t, "synth-fixtures --out " + q(dir) + " --seed 3 --scenes 2 --objects " +
                                  std::to_string(objects));
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(read_text(p));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

}  // namespace

TEST(GenQa, MatchesGoldenAndWritesManifest) {
  TempDir t;
  const auto out = t / "qa.jsonl";
  auto r = ego3d_cli(t, "gen-qa --scenes " + q(kGolden / "scene.json") + " --out " + q(out) + " --seed 42");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text(out), read_text(kGolden / "qa.jsonl"));
  const auto m = json::parse(read_text(out.string() + ".manifest.json"));
  EXPECT_EQ(m.at("subcommand"), "gen-qa");
  EXPECT_EQ(m.at("seeds").at("seed"), 42);
  ASSERT_EQ(m.at("inputs").size(), 1u);
  EXPECT_EQ(m.at("inputs")[0].at("sha256").get<std::string>().size(), 64u);
  EXPECT_NE(m.at("config").get<std::string>().find("seed=42"), std::string::npos);
  EXPECT_TRUE(m.contains("started_at"));
  EXPECT_TRUE(m.at("versions").contains("ego3d"));

  // Same seed again: byte-identical.
  const auto out2 = t / "qa2.jsonl";
  r = ego3d_cli(t, "gen-qa --scenes " + q(kGolden / "scene.json") + " --out " + q(out2) + " --seed 42");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(read_text(out2), read_text(out));
}

TEST(GenQa, TwoObjectSceneCoversCategories) {
  TempDir t;
  write_text(t / "s.json", R"({"scene_id":"two","rig":["Front","BackLeft"],"objects":[
      {"id":"a","caption":"red sedan","center":[2,0,12],"views":["Front"],"category":"vehicle"},
      {"id":"b","caption":"green bus","center":[-12,0,-9],"views":["BackLeft"],"yaw":1.0}]})");
  const auto r = ego3d_cli(t, "gen-qa --scenes " + q(t / "s.json") + " --out " + q(t / "qa.jsonl"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::set<std::string> cats;
  for (const auto& j : read_jsonl(t / "qa.jsonl")) cats.insert(j.at("category").get<std::string>());
  EXPECT_EQ(cats, (std::set<std::string>{"AbsDist", "RelDist", "Localization", "Motion", "TravelTime"}));
}

TEST(GenQa, GlobsFiltersAndErrors) {
  TempDir t;
  const auto dir = synth(t);
  auto r = ego3d_cli(t, "gen-qa --scenes " + q(dir / "scenes/*.json") + " --out " + q(t / "qa.jsonl") +
                            " --categories Motion,RelDist --perspectives object --max-per-group 3");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto items = read_jsonl(t / "qa.jsonl");
  EXPECT_FALSE(items.empty());
  EXPECT_LE(items.size(), 2u * 2u * 3u);
  for (const auto& j : items) {
    EXPECT_TRUE(j.at("category") == "Motion" || j.at("category") == "RelDist");
    EXPECT_EQ(j.at("perspective"), "Object");
  }

  write_text(t / "bad.json", "{ this is not json");
  r = ego3d_cli(t, "gen-qa --scenes " + q(t / "bad.json") + " --out " + q(t / "x.jsonl"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  r = ego3d_cli(t, "gen-qa --scenes " + q(t / "missing.json") + " --out " + q(t / "x.jsonl"));
  EXPECT_EQ(r.code, 2);
  r = ego3d_cli(t, "gen-qa --out x.jsonl");
  EXPECT_EQ(r.code, 2);
}

TEST(Config, FileValuesAndFlagOverrides) {
  TempDir t;
  write_text(t / "run.toml", "[gen-qa]\nscenes=[\"" + (kGolden / "scene.json").string() +
                                 "\"]\nout=\"" + (t / "qa.jsonl").string() + "\"\nseed=42\n");
  auto r = ego3d_cli(t, "--config " + q(t / "run.toml") + " gen-qa");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text(t / "qa.jsonl"), read_text(kGolden / "qa.jsonl"));
  r = ego3d_cli(t, "--config " + q(t / "run.toml") + " gen-qa --seed 43");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(read_text(t / "qa.jsonl"), read_text(kGolden / "qa.jsonl"));
}

TEST(Validate, ExitCodes) {
  TempDir t;
  auto r = ego3d_cli(t, "validate --qa " + q(kGolden / "qa.jsonl"));
  EXPECT_EQ(r.code, 0) << r.out;
  auto items = ego3d::qa::read_jsonl(kGolden / "qa.jsonl");
  items[0].options[1] = items[0].options[0];
  items[0].option_values[1] = items[0].option_values[0];
  write_text(t / "bad.jsonl", ego3d::qa::to_jsonl(items));
  r = ego3d_cli(t, "validate --qa " + q(t / "bad.jsonl"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find(items[0].id), std::string::npos);
}

TEST(Cogmap, FixtureBackendsMatchGolden) {
  TempDir t;
  const auto dir = synth(t);
  const std::string base = "cogmap --images " + q(dir / "images/synth000") + " --rec-fixtures " +
                           q(dir / "fixtures") + " --depth-fixtures " + q(dir / "fixtures");
  const auto scene = ego3d::qa::load_scene(dir / "scenes/synth000.json");
  std::string ex;
  for (const auto& o : scene.objects) ex += (ex.empty() ? "" : ",") + o.caption;
  auto r = ego3d_cli(t, base + " --calib " + q(dir / "calib.json") + " --expressions '" + ex +
                            "' --out " + q(t / "map.txt"));
  ASSERT_EQ(r.code, 0) << r.err;
  expect_golden("cli_map.txt", read_text(t / "map.txt"));
  EXPECT_TRUE(fs::exists(t / "map.txt.manifest.json"));

  // The synthetic rig is the estimated one, so the estimate path gives the same map.
  r = ego3d_cli(t, base + " --estimate-calib 90 --image-size 1600x900 --expressions '" + ex + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, read_text(t / "map.txt"));

  r = ego3d_cli(t, base + " --calib " + q(dir / "calib.json") + " --expressions '" + ex +
                       "' --format json");
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t sightings = 0;
  for (const auto& o : scene.objects) sightings += o.views.size();
  EXPECT_EQ(json::parse(r.out).at("entries").size(), sightings);
  r = ego3d_cli(t, base + " --calib " + q(dir / "calib.json") + " --expressions '" + ex +
                       "' --format svg");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("<svg", 0), 0u);

  r = ego3d_cli(t, base + " --expressions '" + ex + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--calib"), std::string::npos);
}

TEST(Cogmap, FromQa) {
  TempDir t;
  const auto dir = synth(t);
  ASSERT_EQ(ego3d_cli(t, "gen-qa --scenes " + q(dir / "scenes") + " --out " + q(t / "qa.jsonl")).code, 0);
  const auto items = ego3d::qa::read_jsonl(t / "qa.jsonl");
  const auto& it = *std::find_if(items.begin(), items.end(), [](const auto& x) {
    return x.scene_id == "synth000" && x.meta.captions.size() == 2;
  });
  const auto r = ego3d_cli(t, "cogmap --images " + q(dir / "images/synth000") + " --calib " +
                                  q(dir / "calib.json") + " --rec-fixtures " + q(dir / "fixtures") +
                                  " --depth-fixtures " + q(dir / "fixtures") + " --from-qa " +
                                  q(t / "qa.jsonl") + " --qa-id " + it.id);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& c : it.meta.captions) EXPECT_NE(r.out.find("'" + c + "'"), std::string::npos);
}

class Evaluate : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = synth(t_);
    ASSERT_EQ(ego3d_cli(t_, "gen-qa --scenes " + q(dir_ / "scenes") + " --out " + q(qa()) +
                                " --max-per-group 4").code,
              0);
  }
  fs::path qa() const { return t_ / "qa.jsonl"; }
  std::string common() const {
    return "--qa " + q(qa()) + " --scenes " + q(dir_ / "scenes") + " --images-root " +
           q(dir_ / "images") + " --calib " + q(dir_ / "calib.json") + " --rec-fixtures " +
           q(dir_ / "fixtures") + " --depth-fixtures " + q(dir_ / "fixtures");
  }
  TempDir t_;
  fs::path dir_;
};

TEST_F(Evaluate, OracleMockIsPerfectInEveryMode) {
  const auto n = ego3d::qa::read_jsonl(qa()).size();
  for (const std::string mode : {"baseline", "ego3d", "blind", "blind-cogmap", "list"}) {
    const auto preds = t_ / ("p_" + mode + ".jsonl");
    const auto log = t_ / ("log_" + mode + ".jsonl");
    auto r = ego3d_cli(t_, "evaluate " + common() + " --mode " + mode + " --mock-oracle --mock-log " +
                               q(log) + " --out " + q(preds) + " --map-source perception");
    ASSERT_EQ(r.code, 0) << mode << ": " << r.err;
    const auto p = read_jsonl(preds);
    ASSERT_EQ(p.size(), n);
    for (std::size_t i = 1; i < p.size(); ++i) {
      EXPECT_LT(p[i - 1].at("qa_id").get<std::string>(), p[i].at("qa_id").get<std::string>());
    }
    r = ego3d_cli(t_, "report --preds " + q(preds) + " --qa " + q(qa()) + " --mode " + mode +
                          " --out " + q(t_ / "report.json") + " --csv " + q(t_ / "report.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = json::parse(read_text(t_ / "report.json"));
    for (const auto& [k, v] : rep.at("accuracy").items()) {
      if (!v.at("accuracy").is_null()) EXPECT_EQ(v.at("accuracy"), 100.0) << mode << " " << k;
    }
    for (const auto& [k, v] : rep.at("rmse").items()) {
      if (!v.at("rmse").is_null()) EXPECT_LT(v.at("rmse").get<double>(), 1e-6) << mode << " " << k;
    }
    EXPECT_EQ(rep.at("parse_failure_rate"), 0.0);

    const auto reqs = read_jsonl(log);
    ASSERT_EQ(reqs.size(), n);
    for (const auto& q : reqs) {
      const std::string user = q.at("user_text");
      if (mode == "blind" || mode == "blind-cogmap") {
        EXPECT_EQ(q.at("n_images"), 0);
      } else {
        EXPECT_EQ(q.at("n_images"), 6);
      }
      const bool has_map = user.find("Cognitive map of the referenced objects:") != std::string::npos;
      EXPECT_EQ(has_map, mode == "ego3d" || mode == "blind-cogmap");
      const bool has_list = user.find("Detected objects:\n") != std::string::npos;
      EXPECT_EQ(has_list, mode == "list");
      if (mode == "list") {
        EXPECT_TRUE(std::regex_search(
            user, std::regex(R"(\n[A-Za-z-]+-View: Detected .+ at bbox \[-?\d+,-?\d+,-?\d+,-?\d+\], depth: \d+\.\d\n)")))
            << user;
      }
    }
  }
}

TEST_F(Evaluate, GroundTruthMapSource) {
  const auto log = t_ / "log.jsonl";
  const auto r = ego3d_cli(t_, "evaluate " + common() + " --mode blind-cogmap --mock-oracle --mock-log " +
                                   q(log) + " --out " + q(t_ / "p.jsonl"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto items = ego3d::qa::read_jsonl(qa());
  for (const auto& rq : read_jsonl(log)) {
    const auto& it = *std::find_if(items.begin(), items.end(),
                                   [&](const auto& x) { return x.id == rq.at("qa_id"); });
    for (const auto& c : it.meta.captions) {
      EXPECT_NE(rq.at("user_text").get<std::string>().find("'" + c + "'"), std::string::npos);
    }
  }
}

TEST_F(Evaluate, ResumeSkipsAnsweredItems) {
  const auto items = ego3d::qa::read_jsonl(qa());
  ASSERT_GT(items.size(), 4u);
  // First pass: scripted replies for only half the items -> partial exit.
  const auto script = t_ / "script";
  fs::create_directories(script);
  for (std::size_t i = 0; i < items.size(); i += 2) {
    write_text(script / (items[i].id + ".txt"), "<answer>A</answer>");
  }
  const auto preds = t_ / "p.jsonl";
  auto r = ego3d_cli(t_, "evaluate " + common() + " --mode blind --mock-scripted " + q(script) +
                             " --out " + q(preds));
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_EQ(read_jsonl(preds).size(), (items.size() + 1) / 2);

  for (std::size_t i = 1; i < items.size(); i += 2) {
    write_text(script / (items[i].id + ".txt"), "<answer>B</answer>");
  }
  const auto log = t_ / "log.jsonl";
  r = ego3d_cli(t_, "evaluate " + common() + " --mode blind --mock-scripted " + q(script) +
                        " --resume --mock-log " + q(log) + " --out " + q(preds));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_jsonl(preds).size(), items.size());
  const auto reqs = read_jsonl(log);
  EXPECT_EQ(reqs.size(), items.size() / 2);
  std::set<std::string> asked;
  for (const auto& x : reqs) asked.insert(x.at("qa_id").get<std::string>());
  for (std::size_t i = 0; i < items.size(); i += 2) EXPECT_FALSE(asked.count(items[i].id));
}

TEST_F(Evaluate, TransportFailureExitCode) {
  const auto r = ego3d_cli(t_, "evaluate " + common() + " --mode blind --vlm-url http://127.0.0.1:9 "
                               "--timeout 0.5 --retries 1 --backoff 0.01 --out " + q(t_ / "p.jsonl"));
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Evaluate, UsageErrors) {
  auto r = ego3d_cli(t_, "evaluate " + common() + " --mode ego3d --out " + q(t_ / "p.jsonl"));
  EXPECT_EQ(r.code, 2);
  r = ego3d_cli(t_, "evaluate " + common() + " --mode telepathy --mock-oracle --out " + q(t_ / "p.jsonl"));
  EXPECT_EQ(r.code, 2);
}

TEST(Report, HandScoredFixture) {
  TempDir t;
  const auto items = ego3d::qa::read_jsonl(kGolden / "qa.jsonl");
  auto pick = [&](const std::string& cat, const std::string& persp, const std::string& form, int k) {
    int seen = 0;
    for (const auto& it : items) {
      if (std::string(ego3d::qa::to_string(it.category)) == cat &&
          std::string(ego3d::qa::to_string(it.perspective)) == persp &&
          std::string(ego3d::qa::to_string(it.form)) == form && seen++ == k) {
        return it;
      }
    }
    throw std::runtime_error("no such item");
  };
  // Localization: 1 of 2 right. EgoRel: 1 of 1 right. EgoDist MC: a parse failure.
  // Ego absolute distance: off by 3 m and by 4 m.
  std::vector<ego3d::qa::QAItem> set = {pick("Localization", "Object", "MultiChoice", 0),
                                        pick("Localization", "Object", "MultiChoice", 1),
                                        pick("RelDist", "Ego", "MultiChoice", 0),
                                        pick("AbsDist", "Ego", "MultiChoice", 0),
                                        pick("AbsDist", "Ego", "AbsoluteMeters", 0),
                                        pick("AbsDist", "Ego", "AbsoluteMeters", 1)};
  write_text(t / "qa.jsonl", ego3d::qa::to_jsonl(set));
  const char letters[] = "ABCD";
  std::string preds;
  auto line = [&](const ego3d::qa::QAItem& it, const std::string& raw) {
    preds += ego3d::eval::prediction_to_json(ego3d::eval::parse_answer(raw, it)).dump() + "\n";
  };
  line(set[0], std::string("<answer>") + letters[set[0].answer_index] + "</answer>");
  line(set[1], std::string("<answer>") + letters[(set[1].answer_index + 1) % 4] + "</answer>");
  line(set[2], std::string("<answer>") + letters[set[2].answer_index] + "</answer>");
  line(set[3], "<answer>I am not sure</answer>");
  line(set[4], fmt::format("<answer>{} m</answer>", set[4].answer_value + 3.0));
  line(set[5], fmt::format("<answer>{} m</answer>", set[5].answer_value - 4.0));
  write_text(t / "p.jsonl", preds);
  const auto r = ego3d_cli(t, "report --preds " + q(t / "p.jsonl") + " --qa " + q(t / "qa.jsonl") +
                                  " --model hand --mode fixture --csv " + q(t / "r.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(r.out);
  EXPECT_EQ(rep.at("accuracy").at("Loc").at("accuracy"), 50.0);
  EXPECT_EQ(rep.at("accuracy").at("EgoRel").at("accuracy"), 100.0);
  EXPECT_EQ(rep.at("accuracy").at("EgoDist").at("accuracy"), 0.0);
  EXPECT_EQ(rep.at("accuracy").at("EgoDist").at("parse_failures"), 1);
  EXPECT_NEAR(rep.at("rmse").at("EgoDist").at("rmse").get<double>(), std::sqrt((9.0 + 16.0) / 2), 1e-9);
  EXPECT_TRUE(rep.at("rmse").at("ObjDist").at("rmse").is_null());
  EXPECT_NEAR(rep.at("avg_accuracy").get<double>(), 50.0, 1e-9);
  EXPECT_NEAR(rep.at("parse_failure_rate").get<double>(), 1.0 / 6.0, 1e-12);
  const auto csv = read_text(t / "r.csv");
  EXPECT_NE(csv.find("hand,fixture,0.0,-,50.0,-,-,-,100.0,-,50.0,3.54,-,3.54"), std::string::npos) << csv;
}

TEST(Chance, ReproducesOneOverN) {
  TempDir t;
  const auto dir = synth(t, 8);
  ASSERT_EQ(ego3d_cli(t, "gen-qa --scenes " + q(dir / "scenes") + " --out " + q(t / "qa.jsonl") +
                             " --categories Localization,RelDist")
                .code,
            0);
  const auto r = ego3d_cli(t, "chance --qa " + q(t / "qa.jsonl") + " --trials 400 --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j.at("accuracy").at("Loc").get<double>(), 25.0, 2.0);
  EXPECT_NEAR(j.at("accuracy").at("EgoRel").get<double>(), 50.0, 2.5);
  EXPECT_NEAR(j.at("accuracy").at("ObjRel").get<double>(), 50.0, 2.5);
}

TEST(Cli, HelpAndVersion) {
  TempDir t;
  auto r = ego3d_cli(t, "--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("gen-qa"), std::string::npos);
  r = ego3d_cli(t, "--version");
  EXPECT_EQ(r.code, 0);
  r = ego3d_cli(t, "");
  EXPECT_EQ(r.code, 2);
}
