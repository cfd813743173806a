#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ego3d {

/// Connection settings shared by the REC, depth and VLM clients.
struct BackendConfig {
  std::string base_url;        // e.g. "http://localhost:8000" or "https://host/prefix"
  double timeout_s = 60.0;
  int max_in_flight = 4;
  std::string auth_token_env;  // name of the env var holding a bearer token; empty = none
  int retries = 2;             // extra attempts after the first
  double backoff_s = 0.5;      // first retry delay; doubles each attempt

  void validate() const;
};

/// POSTs JSON and parses JSON back, with bounded concurrency and retries.
///
/// Connection failures, timeouts, 5xx and 429 are retried with exponential
/// backoff; other 4xx responses and unparsable bodies fail immediately with
/// ProtocolError. At most max_in_flight requests run at once per client.
/// Safe to share across threads.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(BackendConfig cfg);
  ~JsonHttpClient();
  JsonHttpClient(const JsonHttpClient&) = delete;
  JsonHttpClient& operator=(const JsonHttpClient&) = delete;

  nlohmann::json post(std::string_view path, const nlohmann::json& body) const;

  const BackendConfig& config() const noexcept { return cfg_; }

 private:
  BackendConfig cfg_;
  std::string origin_;  // scheme://host[:port]
  std::string prefix_;  // path part of base_url, without trailing '/'
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

std::string base64_encode(std::span<const unsigned char> bytes);

/// Reads a file and base64-encodes its bytes. Throws ValidationError if unreadable.
std::string read_file_base64(const std::filesystem::path& path);

/// "image/png", "image/jpeg", ... from the extension (jpeg when unknown).
std::string image_mime_type(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);
std::string sha256_hex_file(const std::filesystem::path& path);

}  // namespace ego3d
