#include <algorithm>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ego3d/errors.hpp"
#include "ego3d/eval.hpp"
#include "ego3d/oracle.hpp"
#include "ego3d/vlm.hpp"
#include "../common/golden_inputs.hpp"
#include "test_support.hpp"

using namespace ego3d;
using namespace ego3d::vlm;
using namespace ego3d::test;
using ego3d::test::LocalServer;
using ego3d::test::TempDir;
using ego3d::test::write_text;
using nlohmann::json;

namespace {

const std::vector<qa::QAItem>& golden_items() {
  static const auto items = qa::generate_scene(golden_scene(), kGoldenSeed);
  return items;
}

const qa::QAItem& first_of(qa::Category c, qa::Form f) {
  const auto& items = golden_items();
  return *std::find_if(items.begin(), items.end(),
                       [&](const qa::QAItem& q) { return q.category == c && q.form == f; });
}

}  // namespace

TEST(FormatDetection, ListLine) {
  const ListDetection d{View::Front, "pedestrian with red hat", {100, 40, 140, 180}, 9.8};
  EXPECT_EQ(format_detection(d),
            "Front-View: Detected pedestrian with red hat at bbox [100,40,140,180], depth: 9.8");
}

TEST(AssemblePrompt, BlindHasNoImagesNoMap) {
  const auto& it = first_of(qa::Category::RelDist, qa::Form::MultiChoice);
  const auto imgs = fake_images();
  PromptInputs in;
  in.images = imgs;
  const auto b = assemble_prompt(it, Mode::Blind, in);
  EXPECT_TRUE(b.images.empty());
  EXPECT_EQ(b.user_text.find("Cognitive map"), std::string::npos);
  EXPECT_EQ(b.user_text.find("Detected objects"), std::string::npos);
  EXPECT_NE(b.user_text.find("Question: " + it.question), std::string::npos);
  EXPECT_NE(b.user_text.find("A. " + it.options[0]), std::string::npos);
  EXPECT_NE(b.system_text.find("<think>"), std::string::npos);
  EXPECT_NE(b.system_text.find("<answer>"), std::string::npos);
}

TEST(AssemblePrompt, ModeContracts) {
  const auto& it = first_of(qa::Category::Localization, qa::Form::MultiChoice);
  const auto map = small_map();
  const auto list = small_list();
  const auto imgs = fake_images();
  PromptInputs in;
  in.map = &map;
  in.detections = &list;
  in.images = imgs;

  const auto ego = assemble_prompt(it, Mode::Ego3D, in);
  ASSERT_EQ(ego.images.size(), 3u);
  EXPECT_EQ(ego.images[0].view, View::Front);
  EXPECT_EQ(ego.images[1].view, View::FrontRight);
  EXPECT_EQ(ego.images[2].view, View::Back);
  EXPECT_NE(ego.user_text.find(cogmap::render_textual(map)), std::string::npos);
  EXPECT_LT(ego.user_text.find("Cognitive map"), ego.user_text.find("Question:"));

  const auto bc = assemble_prompt(it, Mode::BlindCogmap, in);
  EXPECT_TRUE(bc.images.empty());
  EXPECT_NE(bc.user_text.find(cogmap::render_textual(map)), std::string::npos);

  const auto li = assemble_prompt(it, Mode::DepthRecList, in);
  EXPECT_EQ(li.images.size(), 3u);
  EXPECT_NE(li.user_text.find("Front-View: Detected red sedan at bbox [700,400,900,520], depth: 12.0\n"),
            std::string::npos);
  EXPECT_EQ(li.user_text.find("Cognitive map"), std::string::npos);

  const auto base = assemble_prompt(it, Mode::Baseline, in);
  EXPECT_EQ(base.images.size(), 3u);
  EXPECT_EQ(base.user_text.find("Cognitive map"), std::string::npos);

  in.map_format = cogmap::MapFormat::Json;
  const auto js = assemble_prompt(it, Mode::Ego3D, in);
  EXPECT_NE(js.user_text.find(cogmap::render_json(map)), std::string::npos);
  in.map_format = cogmap::MapFormat::Svg;
  EXPECT_THROW(assemble_prompt(it, Mode::Ego3D, in), ValidationError);
}

TEST(AssemblePrompt, MissingInputs) {
  const auto& it = first_of(qa::Category::AbsDist, qa::Form::MultiChoice);
  const auto imgs = fake_images();
  PromptInputs in;
  in.images = imgs;
  EXPECT_THROW(assemble_prompt(it, Mode::Ego3D, in), ValidationError);
  EXPECT_THROW(assemble_prompt(it, Mode::BlindCogmap, in), ValidationError);
  EXPECT_THROW(assemble_prompt(it, Mode::DepthRecList, in), ValidationError);
  PromptInputs none;
  EXPECT_THROW(assemble_prompt(it, Mode::Baseline, none), ValidationError);
  EXPECT_NO_THROW(assemble_prompt(it, Mode::Blind, none));
}

TEST(AssemblePrompt, Deterministic) {
  const auto map = small_map();
  const auto imgs = fake_images();
  PromptInputs in;
  in.map = &map;
  in.images = imgs;
  for (const auto& it : golden_items()) {
    EXPECT_EQ(bundle_json(assemble_prompt(it, Mode::Ego3D, in)),
              bundle_json(assemble_prompt(it, Mode::Ego3D, in)));
  }
}

TEST(AssemblePrompt, FormsHaveMatchingInstructions) {
  PromptInputs none;
  const auto abs = assemble_prompt(first_of(qa::Category::AbsDist, qa::Form::AbsoluteMeters), Mode::Blind, none);
  EXPECT_EQ(abs.user_text.find("Options:"), std::string::npos);
  EXPECT_NE(abs.user_text.find("meters"), std::string::npos);
  const auto yn = assemble_prompt(first_of(qa::Category::Motion, qa::Form::YesNo), Mode::Blind, none);
  EXPECT_NE(yn.user_text.find("yes or no"), std::string::npos);
}

TEST(AssemblePrompt, Goldens) {
  expect_golden("prompts.jsonl", golden_prompts_text());
  expect_golden("system_prompt.txt", std::string(system_prompt()) + "\n");
}

TEST(ChatRequest, InterleavesLabelsAndImages) {
  TempDir t;
  write_text(t / "Front.png", "PNG");
  write_text(t / "Back.jpg", "JPG");
  PromptBundle b;
  b.system_text = "sys";
  b.user_text = "user";
  b.images = {{View::Front, t / "Front.png"}, {View::Back, t / "Back.jpg"}};
  const auto j = build_chat_request(b, ChatOptions{"m1", 0.0, 64});
  EXPECT_EQ(j.at("model"), "m1");
  EXPECT_EQ(j.at("max_tokens"), 64);
  const auto& msgs = j.at("messages");
  EXPECT_EQ(msgs[0].at("role"), "system");
  EXPECT_EQ(msgs[0].at("content"), "sys");
  const auto& c = msgs[1].at("content");
  ASSERT_EQ(c.size(), 5u);
  EXPECT_EQ(c[0].at("text"), "Image 1: Front camera");
  EXPECT_EQ(c[1].at("image_url").at("url"), "data:image/png;base64,UE5H");
  EXPECT_EQ(c[2].at("text"), "Image 2: Back camera");
  EXPECT_EQ(c[3].at("image_url").at("url"), "data:image/jpeg;base64,SlBH");
  EXPECT_EQ(c[4].at("text"), "user");
}

TEST(ChatResponse, Parsing) {
  auto r = parse_chat_response(json::parse(
      R"({"choices":[{"message":{"content":"<answer>A</answer>"}}],"usage":{"prompt_tokens":10,"completion_tokens":3}})"));
  EXPECT_EQ(r.raw_text, "<answer>A</answer>");
  EXPECT_EQ(r.prompt_tokens, 10);
  EXPECT_EQ(r.completion_tokens, 3);
  r = parse_chat_response(json::parse(
      R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})"));
  EXPECT_EQ(r.raw_text, "ab");
  EXPECT_THROW(parse_chat_response(json::parse(R"({"choices":[]})")), ProtocolError);
  EXPECT_THROW(parse_chat_response(json::parse(R"({"choices":[{"message":{"content":5}}]})")), ProtocolError);
}

TEST(HttpVlm, PostsChatCompletions) {
  LocalServer srv;
  json seen;
  std::string auth;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"<answer>B</answer>"}}]})", "application/json");
  });
  srv.start();
  ::setenv("EGO3D_TEST_VLM", "tok", 1);
  HttpVlmBackend vlm(BackendConfig{srv.url(), 5.0, 1, "EGO3D_TEST_VLM"}, ChatOptions{"mm", 0.0, 16});
  PromptBundle b;
  b.system_text = "s";
  b.user_text = "u";
  const auto r = vlm.chat(b);
  EXPECT_EQ(r.raw_text, "<answer>B</answer>");
  EXPECT_GE(r.latency_s, 0.0);
  EXPECT_EQ(seen.at("model"), "mm");
  EXPECT_EQ(auth, "Bearer tok");
}

TEST(HttpVlm, TimeoutIsRetryable) {
  LocalServer srv;
  int calls = 0;
  srv.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    res.set_content("{}", "application/json");
  });
  srv.start();
  HttpVlmBackend vlm(BackendConfig{srv.url(), 0.15, 1, "", 1, 0.01}, {});
  EXPECT_THROW(vlm.chat(PromptBundle{}), TransportError);
  EXPECT_EQ(calls, 2);
}

TEST(MockVlm, ScriptedEchoAndLog) {
  TempDir t;
  write_text(t / "script/q1.txt", "<think>x</think><answer>C</answer>");
  auto m = MockVlmBackend::scripted(t / "script");
  m.set_log_path(t / "log.jsonl");
  PromptBundle b;
  b.qa_id = "q1";
  b.mode = Mode::Blind;
  b.user_text = "hello";
  EXPECT_EQ(m.chat(b).raw_text, "<think>x</think><answer>C</answer>");
  b.qa_id = "missing";
  EXPECT_THROW(m.chat(b), ProtocolError);
  const auto reqs = m.requests();
  ASSERT_EQ(reqs.size(), 2u);
  EXPECT_EQ(reqs[0].n_images, 0u);
  const auto log = ego3d::test::read_text(t / "log.jsonl");
  const auto first = json::parse(log.substr(0, log.find('\n')));
  EXPECT_EQ(first.at("qa_id"), "q1");
  EXPECT_EQ(first.at("mode"), "blind");
  EXPECT_EQ(first.at("user_text"), "hello");
  EXPECT_THROW(MockVlmBackend::scripted(t / "nope"), ValidationError);
}

TEST(MockVlm, OracleAnswersGroundTruth) {
  const auto scenes = std::vector<qa::SceneSource>{golden_scene()};
  auto m = MockVlmBackend::oracle(golden_items(), scenes);
  PromptInputs none;
  for (const auto& it : golden_items()) {
    const auto reply = m.chat(assemble_prompt(it, Mode::Blind, none));
    const auto p = eval::parse_answer(reply.raw_text, it);
    if (it.form == qa::Form::AbsoluteMeters) {
      ASSERT_TRUE(p.meters.has_value());
      EXPECT_NEAR(*p.meters, it.answer_value, 1e-9);
    } else {
      ASSERT_TRUE(p.choice.has_value()) << reply.raw_text;
      EXPECT_EQ(*p.choice, it.answer_index);
    }
  }
}

TEST(Modes, Parse) {
  EXPECT_EQ(parse_mode("blind-cogmap"), Mode::BlindCogmap);
  EXPECT_EQ(parse_mode("list"), Mode::DepthRecList);
  EXPECT_THROW(parse_mode("vision"), ValidationError);
  EXPECT_FALSE(mode_uses_images(Mode::Blind));
  EXPECT_TRUE(mode_uses_images(Mode::DepthRecList));
}
