#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ijip/prompting.hpp"

namespace ijip {

struct ModelRequest {
  RenderedPrompt prompt;
  int max_tokens = 64;
  double temperature = 0.0;
  std::string tag;

  /// Throws InvalidArgument unless temperature >= 0 and the prompt carries
  /// exactly one query payload.
  void validate() const;
};

struct ModelResponse {
  std::string text;
  std::chrono::milliseconds latency{0};
  std::string backend;
  /// Raw transcript (wire reply body for HTTP).
  std::string raw;
};

/// Completion interface shared by the HTTP client and the mock oracle.
/// Implementations must be safe to call from several threads.
class Backend {
public:
  virtual ~Backend() = default;
  virtual ModelResponse complete(const ModelRequest &request) = 0;
  virtual std::string name() const = 0;
  /// Concurrent requests the harness may keep in flight.
  virtual std::size_t max_in_flight() const { return 4; }
  /// Hash identifying the request bytes this backend would send.
  virtual std::string request_hash(const ModelRequest &request) const;
};

struct AuditRecord {
  std::string tag;
  std::string timestamp; // ISO-8601 UTC
  std::string request_hash;
  std::string reply_text;
  std::int64_t latency_ms = 0;
};

nlohmann::ordered_json to_json(const AuditRecord &record);

/// Line-delimited audit trail. Appends are serialized; file output is
/// optional.
class AuditLog {
public:
  AuditLog() = default;
  explicit AuditLog(const std::filesystem::path &path);

  void append(AuditRecord record);
  std::vector<AuditRecord> records() const;
  std::size_t size() const;

private:
  mutable std::mutex mutex_;
  std::vector<AuditRecord> records_;
  std::optional<std::ofstream> file_;
};

/// Validates the request, calls the backend and appends to `audit`.
ModelResponse complete(const ModelRequest &request, Backend &backend,
                       AuditLog *audit = nullptr);

// ---------------------------------------------------------------------------
// Mock oracle

/// Noisy label oracle. Binary sub-answers flip independently with
/// probability binary_flip_prob; class answers are wrong with probability
/// multiclass_error_prob.
struct OracleConfig {
  double binary_flip_prob = 0.0;      // in [0, 0.5]
  double multiclass_error_prob = 0.0; // in [0, 1)
  std::uint64_t seed = 0;
  /// Scale the class-answer error by (c-1)/(m-1) for a c-candidate query so
  /// restricted questions are easier than full m-class ones.
  bool scale_by_candidates = false;
  std::unordered_map<std::string, std::string> truth;

  void validate() const;
  /// Error probability used for a query offering `candidates` of `m` labels.
  double class_error(std::size_t candidates, std::size_t m) const;
};

/// Reply text the oracle gives. `labels` is the full labelset for
/// iterative judgments and the offered candidates otherwise.
std::string mock_oracle_answer(const std::string &query_id, PromptMode mode,
                               const std::vector<std::string> &labels,
                               std::size_t num_labels, const OracleConfig &config);

class MockOracleBackend final : public Backend {
public:
  explicit MockOracleBackend(OracleConfig config, std::size_t max_in_flight = 4);

  ModelResponse complete(const ModelRequest &request) override;
  std::string name() const override { return "mock"; }
  std::size_t max_in_flight() const override { return max_in_flight_; }
  const OracleConfig &config() const { return config_; }

private:
  OracleConfig config_;
  std::size_t max_in_flight_;
};

// ---------------------------------------------------------------------------
// HTTP chat-completion client

struct HttpBackendConfig {
  /// e.g. "https://api.example.com/v1"; requests go to <api_base>/chat/completions.
  std::string api_base;
  std::string api_key;
  std::string model;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::size_t max_in_flight = 4;
  std::chrono::seconds timeout{120};

  /// Reads IJIP_API_BASE, IJIP_API_KEY and IJIP_MODEL.
  static HttpBackendConfig from_env();
};

/// Wire body for POST <api_base>/chat/completions.
nlohmann::ordered_json build_chat_request(const ModelRequest &request,
                                          const std::string &model);
/// choices[0].message.content; throws BackendError when absent.
std::string extract_reply(const nlohmann::json &body);

class HttpBackend final : public Backend {
public:
  explicit HttpBackend(HttpBackendConfig config);

  ModelResponse complete(const ModelRequest &request) override;
  std::string name() const override { return "http"; }
  std::size_t max_in_flight() const override { return config_.max_in_flight; }
  std::string request_hash(const ModelRequest &request) const override;

private:
  HttpBackendConfig config_;
  std::string origin_;    // scheme://host[:port]
  std::string base_path_; // path prefix, no trailing slash
  std::counting_semaphore<1024> in_flight_;
};

} // namespace ijip
