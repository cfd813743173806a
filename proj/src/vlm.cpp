#include "ego3d/vlm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ego3d/errors.hpp"

namespace ego3d::vlm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kSystemPrompt =
    "You are a spatial reasoning assistant for an ego vehicle that carries several cameras "
    "looking in different directions. Use every piece of information you are given about the "
    "scene. First think through the problem step by step inside <think> </think> tags. Then "
    "write only your final answer inside <answer> </answer> tags.";

std::string answer_instruction(const qa::QAItem& item) {
  switch (item.form) {
    case qa::Form::MultiChoice:
      return "Answer with the letter of the correct option inside <answer> </answer>.";
    case qa::Form::YesNo: return "Answer with yes or no inside <answer> </answer>.";
    case qa::Form::AbsoluteMeters:
      return "Answer with a single number of meters inside <answer> </answer>.";
  }
  return {};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Mode parse_mode(std::string_view text) {
  if (text == "baseline") return Mode::Baseline;
  if (text == "ego3d") return Mode::Ego3D;
  if (text == "blind") return Mode::Blind;
  if (text == "blind-cogmap") return Mode::BlindCogmap;
  if (text == "list" || text == "depth-rec-list") return Mode::DepthRecList;
  throw ValidationError(fmt::format("unknown mode '{}'", text));
}

std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::Ego3D: return "ego3d";
    case Mode::Blind: return "blind";
    case Mode::BlindCogmap: return "blind-cogmap";
    case Mode::DepthRecList: return "list";
  }
  return "";
}

bool mode_uses_images(Mode m) noexcept { return m != Mode::Blind && m != Mode::BlindCogmap; }

std::string format_detection(const ListDetection& d) {
  return fmt::format("{}-View: Detected {} at bbox [{},{},{},{}], depth: {:.1f}",
                     view_label(d.view), d.expression, std::llround(d.bbox.x1),
                     std::llround(d.bbox.y1), std::llround(d.bbox.x2), std::llround(d.bbox.y2),
                     d.depth);
}

std::string_view system_prompt() noexcept { return kSystemPrompt; }

PromptBundle assemble_prompt(const qa::QAItem& item, Mode mode, const PromptInputs& inputs) {
  PromptBundle b;
  b.mode = mode;
  b.qa_id = item.id;
  b.system_text = std::string(kSystemPrompt);

  const bool needs_map = mode == Mode::Ego3D || mode == Mode::BlindCogmap;
  if (needs_map && inputs.map == nullptr) {
    throw ValidationError(fmt::format("mode {} needs a cognitive map", to_string(mode)));
  }
  if (mode == Mode::DepthRecList && inputs.detections == nullptr) {
    throw ValidationError("mode list needs a detection list");
  }
  if (mode_uses_images(mode)) {
    if (inputs.images.empty()) {
      throw ValidationError(fmt::format("mode {} needs at least one image", to_string(mode)));
    }
    b.images.assign(inputs.images.begin(), inputs.images.end());
    std::stable_sort(b.images.begin(), b.images.end(),
                     [](const perception::ViewImage& x, const perception::ViewImage& y) {
                       return ring_index(x.view) < ring_index(y.view);
                     });
  }

  std::string text;
  if (needs_map) {
    if (inputs.map_format == cogmap::MapFormat::Svg) {
      throw ValidationError("an SVG map cannot be placed in a text prompt");
    }
    text += "Cognitive map of the referenced objects:\n";
    text += cogmap::render(*inputs.map, inputs.map_format);
    text += "\n";
  }
  if (mode == Mode::DepthRecList) {
    text += "Detected objects:\n";
    if (inputs.detections->empty()) text += "none\n";
    for (const auto& d : *inputs.detections) text += format_detection(d) + "\n";
    text += "\n";
  }
  text += "Question: " + item.question + "\n";
  if (item.form == qa::Form::MultiChoice) {
    text += "Options:\n";
    for (std::size_t i = 0; i < item.options.size(); ++i) {
      text += fmt::format("{}. {}\n", static_cast<char>('A' + i), item.options[i]);
    }
  }
  text += "\n" + answer_instruction(item);
  b.user_text = std::move(text);
  return b;
}

json build_chat_request(const PromptBundle& bundle, const ChatOptions& opts) {
  json content = json::array();
  std::size_t k = 1;
  for (const auto& img : bundle.images) {
    content.push_back(
        {{"type", "text"}, {"text", fmt::format("Image {}: {} camera", k++, view_label(img.view))}});
    content.push_back({{"type", "image_url"},
                       {"image_url",
                        {{"url", fmt::format("data:{};base64,{}", image_mime_type(img.image),
                                             read_file_base64(img.image))}}}});
  }
  content.push_back({{"type", "text"}, {"text", bundle.user_text}});
  return {{"model", opts.model},
          {"temperature", opts.temperature},
          {"max_tokens", opts.max_tokens},
          {"messages",
           {{{"role", "system"}, {"content", bundle.system_text}},
            {{"role", "user"}, {"content", content}}}}};
}

ModelReply parse_chat_response(const json& body) {
  try {
    const auto& content = body.at("choices").at(0).at("message").at("content");
    ModelReply r;
    if (content.is_string()) {
      r.raw_text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") r.raw_text += part.at("text").get<std::string>();
      }
    } else {
      throw ProtocolError("message content is neither text nor parts");
    }
    if (body.contains("usage") && body.at("usage").is_object()) {
      const auto& u = body.at("usage");
      if (u.contains("prompt_tokens")) r.prompt_tokens = u.at("prompt_tokens").get<long long>();
      if (u.contains("completion_tokens")) {
        r.completion_tokens = u.at("completion_tokens").get<long long>();
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed chat response: ") + e.what());
  }
}

ModelReply HttpVlmBackend::chat(const PromptBundle& bundle) {
  const auto start = std::chrono::steady_clock::now();
  ModelReply r =
      parse_chat_response(client_.post("/v1/chat/completions", build_chat_request(bundle, opts_)));
  r.latency_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

json record_to_json(const RequestRecord& r) {
  json views = json::array();
  for (View v : r.image_views) views.push_back(std::string(view_id(v)));
  return {{"qa_id", r.qa_id},         {"mode", to_string(r.mode)},
          {"n_images", r.n_images},   {"image_views", views},
          {"system_text", r.system_text}, {"user_text", r.user_text}};
}

MockVlmBackend MockVlmBackend::scripted(fs::path dir) {
  if (!fs::is_directory(dir)) throw ValidationError("script directory not found: " + dir.string());
  MockVlmBackend m;
  m.script_dir_ = std::move(dir);
  return m;
}

MockVlmBackend MockVlmBackend::oracle(std::span<const qa::QAItem> items,
                                      std::span<const qa::SceneSource> scenes) {
  const auto index = qa::index_scenes(scenes);
  MockVlmBackend m;
  for (const auto& it : items) {
    const auto s = index.find(it.scene_id);
    if (s == index.end()) {
      throw ValidationError(fmt::format("{}: scene '{}' not provided", it.id, it.scene_id));
    }
    m.replies_[it.id] = qa::oracle_reply(it, qa::oracle_answer(it, s->second));
  }
  return m;
}

MockVlmBackend::MockVlmBackend(MockVlmBackend&& other) noexcept
    : script_dir_(std::move(other.script_dir_)),
      replies_(std::move(other.replies_)),
      log_path_(std::move(other.log_path_)),
      log_(std::move(other.log_)) {}

ModelReply MockVlmBackend::chat(const PromptBundle& bundle) {
  RequestRecord rec;
  rec.qa_id = bundle.qa_id;
  rec.mode = bundle.mode;
  rec.n_images = bundle.images.size();
  for (const auto& img : bundle.images) rec.image_views.push_back(img.view);
  rec.system_text = bundle.system_text;
  rec.user_text = bundle.user_text;
  {
    std::lock_guard lock(mu_);
    if (log_path_) {
      std::ofstream out(*log_path_, std::ios::app);
      out << record_to_json(rec).dump() << '\n';
    }
    log_.push_back(std::move(rec));
  }

  ModelReply r;
  if (script_dir_) {
    const fs::path p = *script_dir_ / (bundle.qa_id + ".txt");
    if (!fs::exists(p)) throw ProtocolError("no scripted reply for " + bundle.qa_id);
    r.raw_text = read_text(p);
    return r;
  }
  const auto it = replies_.find(bundle.qa_id);
  if (it == replies_.end()) throw ProtocolError("no oracle reply for " + bundle.qa_id);
  r.raw_text = it->second;
  return r;
}

std::vector<RequestRecord> MockVlmBackend::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace ego3d::vlm
