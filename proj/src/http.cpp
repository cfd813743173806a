#include "ego3d/http.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>

#include "ego3d/errors.hpp"

namespace ego3d {

namespace {

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

}  // namespace

void BackendConfig::validate() const {
  if (base_url.empty()) throw ValidationError("backend base_url is empty");
  if (!(timeout_s > 0.0)) throw ValidationError("backend timeout must be positive");
  if (max_in_flight < 1) throw ValidationError("backend max_in_flight must be >= 1");
  if (retries < 0) throw ValidationError("backend retries must be >= 0");
  if (backoff_s < 0.0) throw ValidationError("backend backoff must be >= 0");
}

JsonHttpClient::JsonHttpClient(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto scheme_end = cfg_.base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("backend base_url needs a scheme: " + cfg_.base_url);
  }
  const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
  origin_ = cfg_.base_url.substr(0, path_start);
  if (path_start != std::string::npos) prefix_ = cfg_.base_url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  slots_ = std::make_unique<std::counting_semaphore<>>(cfg_.max_in_flight);
}

JsonHttpClient::~JsonHttpClient() = default;

nlohmann::json JsonHttpClient::post(std::string_view path, const nlohmann::json& body) const {
  std::string route = prefix_;
  if (path.empty() || path.front() != '/') route.push_back('/');
  route.append(path);
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!cfg_.auth_token_env.empty()) {
    if (const char* token = std::getenv(cfg_.auth_token_env.c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
  const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);

  const int attempts = cfg_.retries + 1;
  std::string last_error;
  bool rate_limited = false;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      const double delay = cfg_.backoff_s * static_cast<double>(1 << (attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    httplib::Result res;
    {
      SlotGuard guard(*slots_);
      httplib::Client client(origin_);
      client.set_connection_timeout(sec.count(), usec.count());
      client.set_read_timeout(sec.count(), usec.count());
      client.set_write_timeout(sec.count(), usec.count());
      res = client.Post(route, headers, payload, "application/json");
    }
    if (!res) {
      last_error = fmt::format("{}{}: {}", origin_, route, httplib::to_string(res.error()));
      rate_limited = false;
      continue;
    }
    if (res->status == 429) {
      last_error = fmt::format("{}{}: rate limited (HTTP 429)", origin_, route);
      rate_limited = true;
      continue;
    }
    if (res->status >= 500) {
      last_error = fmt::format("{}{}: HTTP {}", origin_, route, res->status);
      rate_limited = false;
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProtocolError(fmt::format("{}{}: HTTP {}: {}", origin_, route, res->status,
                                      res->body.substr(0, 200)));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(fmt::format("{}{}: response is not JSON ({})", origin_, route, e.what()));
    }
  }
  const std::string msg = fmt::format("{} (after {} attempts)", last_error, attempts);
  if (rate_limited) throw RateLimitError(msg, attempts);
  throw TransportError(msg, attempts);
}

std::string base64_encode(std::span<const unsigned char> bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string read_file_base64(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  return base64_encode(
      {reinterpret_cast<const unsigned char*>(data.data()), data.size()});
}

std::string image_mime_type(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/jpeg";
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_hex_file(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

}  // namespace ego3d
