#include "ijip/backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include "ijip/digest.hpp"

namespace ijip {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

void ModelRequest::validate() const {
  if (!(temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  if (prompt.query_payload_count() != 1)
    throw InvalidArgument("request must carry exactly one query payload");
}

std::string Backend::request_hash(const ModelRequest &request) const {
  ordered_json j;
  j["mode"] = to_string(request.prompt.mode);
  j["prompt"] = request.prompt.flat_text();
  j["max_tokens"] = request.max_tokens;
  j["temperature"] = request.temperature;
  return sha256_hex(j.dump());
}

ordered_json to_json(const AuditRecord &r) {
  ordered_json j;
  j["tag"] = r.tag;
  j["timestamp"] = r.timestamp;
  j["request_hash"] = r.request_hash;
  j["reply_text"] = r.reply_text;
  j["latency_ms"] = r.latency_ms;
  return j;
}

AuditLog::AuditLog(const std::filesystem::path &path) {
  file_.emplace(path, std::ios::app | std::ios::binary);
  if (!*file_) throw Error("cannot open audit log " + path.string());
}

void AuditLog::append(AuditRecord record) {
  std::lock_guard lock(mutex_);
  if (file_) *file_ << to_json(record).dump() << '\n' << std::flush;
  records_.push_back(std::move(record));
}

std::vector<AuditRecord> AuditLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3)
     << std::setfill('0') << ms.count() << 'Z';
  return ss.str();
}

} // namespace

ModelResponse complete(const ModelRequest &request, Backend &backend, AuditLog *audit) {
  request.validate();
  auto response = backend.complete(request);
  if (audit) {
    audit->append({request.tag, utc_now(), backend.request_hash(request), response.text,
                   static_cast<std::int64_t>(response.latency.count())});
  }
  return response;
}

// ---------------------------------------------------------------------------
// Mock oracle

void OracleConfig::validate() const {
  if (!(binary_flip_prob >= 0.0 && binary_flip_prob <= 0.5))
    throw InvalidArgument("binary_flip_prob must be in [0, 0.5]");
  if (!(multiclass_error_prob >= 0.0 && multiclass_error_prob < 1.0))
    throw InvalidArgument("multiclass_error_prob must be in [0, 1)");
}

double OracleConfig::class_error(std::size_t candidates, std::size_t m) const {
  if (!scale_by_candidates || m < 2) return multiclass_error_prob;
  const double c = static_cast<double>(std::max<std::size_t>(candidates, 1));
  return multiclass_error_prob * (c - 1.0) / (static_cast<double>(m) - 1.0);
}

namespace {

std::uint64_t oracle_key(const OracleConfig &config, const std::string &query_id,
                         PromptMode mode, std::uint64_t salt) {
  return hash_parts({config.seed, fnv1a(query_id), static_cast<std::uint64_t>(mode), salt});
}

std::uint64_t candidate_set_hash(const std::vector<std::string> &labels) {
  std::uint64_t h = fnv1a("candidates");
  for (const auto &l : labels) h = hash_combine(h, fnv1a(l));
  return h;
}

} // namespace

std::string mock_oracle_answer(const std::string &query_id, PromptMode mode,
                               const std::vector<std::string> &labels,
                               std::size_t num_labels, const OracleConfig &config) {
  auto it = config.truth.find(query_id);
  if (it == config.truth.end())
    throw BackendError("mock oracle has no gold label for \"" + query_id + "\"");
  const std::string &gold = it->second;

  if (mode == PromptMode::iterative_judgment) {
    std::string reply;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      const bool truth = labels[j] == gold;
      const bool flip =
          unit_interval(oracle_key(config, query_id, mode, j + 1)) < config.binary_flip_prob;
      if (j) reply += '\n';
      reply += std::to_string(j + 1);
      reply += (truth != flip) ? ": yes" : ": no";
    }
    return reply;
  }

  if (labels.empty()) throw InvalidArgument("mock oracle: no candidates");
  const auto set_key = candidate_set_hash(labels);
  const auto pos = std::find(labels.begin(), labels.end(), gold);
  const auto pick_bits = oracle_key(config, query_id, mode, hash_combine(set_key, 2));
  if (pos == labels.end()) return labels[pick_bits % labels.size()];

  const double eps = config.class_error(labels.size(), num_labels);
  if (labels.size() < 2 ||
      unit_interval(oracle_key(config, query_id, mode, hash_combine(set_key, 1))) >= eps)
    return gold;
  // Uniform over the wrong candidates.
  const auto gold_index = static_cast<std::size_t>(pos - labels.begin());
  auto wrong = pick_bits % (labels.size() - 1);
  if (wrong >= gold_index) ++wrong;
  return labels[wrong];
}

MockOracleBackend::MockOracleBackend(OracleConfig config, std::size_t max_in_flight)
    : config_(std::move(config)), max_in_flight_(std::max<std::size_t>(max_in_flight, 1)) {
  config_.validate();
}

ModelResponse MockOracleBackend::complete(const ModelRequest &request) {
  const auto start = Clock::now();
  const auto &p = request.prompt;
  ModelResponse r;
  r.text = mock_oracle_answer(p.query_id, p.mode, p.candidate_labels, p.num_labels, config_);
  r.backend = name();
  r.raw = r.text;
  r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  return r;
}

} // namespace ijip
