#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ego3d/cogmap.hpp"
#include "ego3d/http.hpp"
#include "ego3d/oracle.hpp"
#include "ego3d/perception.hpp"
#include "ego3d/qa.hpp"

namespace ego3d::vlm {

enum class Mode { Baseline, Ego3D, Blind, BlindCogmap, DepthRecList };

/// "baseline", "ego3d", "blind", "blind-cogmap", "list".
Mode parse_mode(std::string_view text);
std::string_view to_string(Mode m) noexcept;
bool mode_uses_images(Mode m) noexcept;

/// One row of the detection-list block used by DepthRecList.
struct ListDetection {
  View view = View::Front;
  std::string expression;
  geometry::BBox2D bbox;
  double depth = 0.0;
};

/// `Front-View: Detected pedestrian with red hat at bbox [100,40,140,180], depth: 9.8`
std::string format_detection(const ListDetection& d);

struct PromptBundle {
  Mode mode = Mode::Baseline;
  std::string system_text;
  std::string user_text;
  std::vector<perception::ViewImage> images;  // ring order; empty in blind modes
  std::string qa_id;
};

/// The fixed reasoning-format system prompt.
std::string_view system_prompt() noexcept;

struct PromptInputs {
  const cogmap::CognitiveMap* map = nullptr;                   // Ego3D, BlindCogmap
  const std::vector<ListDetection>* detections = nullptr;      // DepthRecList
  std::span<const perception::ViewImage> images;               // image modes
  cogmap::MapFormat map_format = cogmap::MapFormat::Text;      // Text or Json
};

/// User text: [map block] [detection block] question, lettered options,
/// answer instruction. Throws ValidationError when the mode's inputs are missing.
PromptBundle assemble_prompt(const qa::QAItem& item, Mode mode, const PromptInputs& inputs);

struct ModelReply {
  std::string raw_text;
  double latency_s = 0.0;
  std::optional<long long> prompt_tokens;
  std::optional<long long> completion_tokens;
};

class VlmBackend {
 public:
  virtual ~VlmBackend() = default;
  virtual ModelReply chat(const PromptBundle& bundle) = 0;
};

struct ChatOptions {
  std::string model = "default";
  double temperature = 0.0;
  int max_tokens = 2048;
};

/// OpenAI-style chat-completions body; every image is preceded by a text part
/// "Image k: <view> camera" and sent as a base64 data URL.
nlohmann::json build_chat_request(const PromptBundle& bundle, const ChatOptions& opts);

/// Reads choices[0].message.content and usage. Throws ProtocolError.
ModelReply parse_chat_response(const nlohmann::json& body);

// POST {base_url}/v1/chat/completions
class HttpVlmBackend final : public VlmBackend {
 public:
  HttpVlmBackend(BackendConfig cfg, ChatOptions opts)
      : client_(std::move(cfg)), opts_(std::move(opts)) {}
  ModelReply chat(const PromptBundle& bundle) override;

 private:
  JsonHttpClient client_;
  ChatOptions opts_;
};

/// What the mock saw for one request.
struct RequestRecord {
  std::string qa_id;
  Mode mode = Mode::Baseline;
  std::size_t n_images = 0;
  std::vector<View> image_views;
  std::string system_text;
  std::string user_text;
};

nlohmann::json record_to_json(const RequestRecord& r);

/// Offline backend. Scripted mode returns "<dir>/<qa_id>.txt"; oracle mode
/// answers from scene geometry. Every request is recorded, and appended as a
/// JSON line to `log_path` when one is set.
class MockVlmBackend final : public VlmBackend {
 public:
  static MockVlmBackend scripted(std::filesystem::path dir);
  static MockVlmBackend oracle(std::span<const qa::QAItem> items,
                               std::span<const qa::SceneSource> scenes);

  MockVlmBackend(MockVlmBackend&& other) noexcept;

  void set_log_path(std::filesystem::path path) { log_path_ = std::move(path); }

  ModelReply chat(const PromptBundle& bundle) override;

  std::vector<RequestRecord> requests() const;

 private:
  MockVlmBackend() = default;

  std::optional<std::filesystem::path> script_dir_;
  std::map<std::string, std::string> replies_;
  std::optional<std::filesystem::path> log_path_;
  mutable std::mutex mu_;
  std::vector<RequestRecord> log_;
};

}  // namespace ego3d::vlm
