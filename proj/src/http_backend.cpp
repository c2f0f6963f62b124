// Eigen must come before httplib: the OpenSSL headers it pulls in define
// macros that break Eigen's product kernels.
#include "ijip/backend.hpp"
#include "ijip/digest.hpp"
#include "ijip/log.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace ijip {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

HttpBackendConfig HttpBackendConfig::from_env() {
  HttpBackendConfig c;
  if (const char *v = std::getenv("IJIP_API_BASE")) c.api_base = v;
  if (const char *v = std::getenv("IJIP_API_KEY")) c.api_key = v;
  if (const char *v = std::getenv("IJIP_MODEL")) c.model = v;
  return c;
}

namespace {

std::string mime_for(const fs::path &path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot read image payload " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json text_part(const std::string &text) {
  ordered_json j;
  j["type"] = "text";
  j["text"] = text;
  return j;
}

bool transient(int status) { return status == 408 || status == 429 || status >= 500; }

} // namespace

ordered_json build_chat_request(const ModelRequest &request, const std::string &model) {
  ordered_json content = ordered_json::array();
  for (const auto &part : request.prompt.parts) {
    if (part.kind == PromptPart::Kind::text) {
      content.push_back(text_part(part.text));
    } else if (part.payload.kind == PayloadKind::text) {
      content.push_back(text_part(part.payload.value));
    } else {
      const auto path = part.base_dir / part.payload.value;
      ordered_json img;
      img["type"] = "image_url";
      img["image_url"]["url"] =
          "data:" + mime_for(path) + ";base64," + base64_encode(read_file(path));
      content.push_back(std::move(img));
    }
  }
  ordered_json message;
  message["role"] = "user";
  message["content"] = std::move(content);

  ordered_json body;
  body["model"] = model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  body["messages"] = ordered_json::array({std::move(message)});
  return body;
}

std::string extract_reply(const json &body) {
  try {
    const auto &content = body.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    // Some servers return content as a list of parts.
    if (content.is_array()) {
      std::string out;
      for (const auto &p : content)
        if (p.value("type", "") == "text") out += p.value("text", "");
      return out;
    }
  } catch (const json::exception &) {
  }
  throw BackendError("reply has no choices[0].message.content");
}

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)),
      in_flight_(static_cast<std::ptrdiff_t>(
          std::clamp<std::size_t>(config_.max_in_flight, 1, 1024))) {
  if (config_.api_base.empty()) throw InvalidArgument("HTTP backend needs an API base URL");
  if (config_.model.empty()) throw InvalidArgument("HTTP backend needs a model name");
  auto base = config_.api_base;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const auto scheme_end = base.find("://");
  if (scheme_end == std::string::npos)
    throw InvalidArgument("API base must include a scheme: " + config_.api_base);
  const auto path_start = base.find('/', scheme_end + 3);
  origin_ = base.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : base.substr(path_start);
}

std::string HttpBackend::request_hash(const ModelRequest &request) const {
  return sha256_hex(build_chat_request(request, config_.model).dump());
}

ModelResponse HttpBackend::complete(const ModelRequest &request) {
  const std::string body = build_chat_request(request, config_.model).dump();
  const std::string path = base_path_ + "/chat/completions";

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024> &s;
    ~Release() { s.release(); }
  } release{in_flight_};

  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      warn("retrying " + request.tag + " after: " + last_error);
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    const auto start = Clock::now();
    auto res = client.Post(path, headers, body, "application/json");
    const auto latency =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
    if (!res) {
      last_error = "network error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      json reply;
      try {
        reply = json::parse(res->body);
      } catch (const json::parse_error &e) {
        throw BackendError(std::string("reply is not JSON: ") + e.what());
      }
      ModelResponse out;
      out.text = extract_reply(reply);
      out.latency = latency;
      out.backend = name();
      out.raw = res->body;
      return out;
    }
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (!transient(res->status)) throw BackendError(last_error);
  }
  throw BackendError("request failed after " + std::to_string(config_.max_retries) +
                     " retries: " + last_error);
}

} // namespace ijip
