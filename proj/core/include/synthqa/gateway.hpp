#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "synthqa/error.hpp"
#include "synthqa/jsonl.hpp"
#include "synthqa/vector_math.hpp"

namespace synthqa {

enum class ModelRole { Extractor, BaseGenerator, Refiner, Judge, Embedder, Discriminator };

inline constexpr std::array<ModelRole, 6> kAllModelRoles = {
    ModelRole::Extractor, ModelRole::BaseGenerator, ModelRole::Refiner,
    ModelRole::Judge,     ModelRole::Embedder,      ModelRole::Discriminator};

std::string_view to_string(ModelRole role);
ModelRole model_role_from_string(std::string_view name);

/// Where and how one role is served.
struct RoleEndpoint {
  std::string endpoint_url;  // base URL, e.g. http://localhost:8000/v1
  std::string model_name;
  std::string api_key_env;   // name of the environment variable holding the key
  double temperature = 0.0;
  int max_tokens = 1024;
  bool thinking_mode = false;
};

/// Sampling defaults per role: the base generator samples at 1.0, the refiner
/// at 0.3, everything that judges or extracts at 0.0. Thinking is off.
RoleEndpoint default_role_endpoint(ModelRole role);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::set<int> retryable_statuses{408, 409, 429, 500, 502, 503, 504};

  void validate() const;
  /// Delay slept after failed attempt `attempt` (1-based).
  std::chrono::milliseconds delay_after(int attempt) const;
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  ModelRole role = ModelRole::Judge;
  std::vector<ChatMessage> messages;
  std::optional<double> temperature;  // role default when unset
  std::optional<int> max_tokens;
  std::vector<std::string> stop;
  std::optional<bool> thinking_mode;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  std::chrono::milliseconds latency{0};
  int attempts = 0;
  std::string model_name;
};

struct EmbeddingRequest {
  ModelRole role = ModelRole::Embedder;
  std::vector<std::string> texts;
};

struct EmbeddingResponse {
  std::vector<Vector> vectors;  // unit length, one per input text
  int attempts = 0;
};

enum class GatewayErrorKind { NotConfigured, InvalidRequest, Unreachable, Timeout, HttpStatus, MalformedResponse };

std::string_view to_string(GatewayErrorKind kind);

/// Terminal failure of a gateway call.
class GatewayError : public Error {
 public:
  GatewayError(GatewayErrorKind kind, std::string message, int attempts = 0, int status = 0)
      : Error(std::move(message)), kind_(kind), attempts_(attempts), status_(status) {}

  GatewayErrorKind kind() const { return kind_; }
  int attempts() const { return attempts_; }
  int status() const { return status_; }

 private:
  GatewayErrorKind kind_;
  int attempts_;
  int status_;
};

/// One request on the wire: the JSON body for an OpenAI-compatible endpoint.
struct WireRequest {
  ModelRole role = ModelRole::Judge;
  std::string endpoint_url;
  std::string path;  // "/chat/completions" or "/embeddings"
  json body;
  std::string api_key;  // never logged
};

/// Failure of a single attempt, raised by transports.
class TransportError : public Error {
 public:
  TransportError(GatewayErrorKind kind, std::string message, int status = 0)
      : Error(std::move(message)), kind_(kind), status_(status) {}

  GatewayErrorKind kind() const { return kind_; }
  int status() const { return status_; }

 private:
  GatewayErrorKind kind_;
  int status_;
};

/// Moves wire requests to a model server. Implementations must be safe to
/// call from several threads at once.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual json post(const WireRequest& request) = 0;
};

/// Plain HTTP(S) transport for OpenAI-compatible servers.
std::shared_ptr<Transport> make_http_transport(std::chrono::milliseconds timeout);

/// One gateway call as recorded in the audit log.
struct CallRecord {
  std::uint64_t sequence = 0;
  ModelRole role = ModelRole::Judge;
  std::string operation;  // "chat" | "embed"
  std::string model_name;
  std::string endpoint_url;
  std::string request_hash;
  int attempts = 0;
  bool ok = false;
  std::string error;
  double latency_ms = 0.0;
  bool truncated = false;
};

json to_json(const CallRecord& record);

struct GatewayConfig {
  std::map<ModelRole, RoleEndpoint> roles;
  RetryPolicy retry;
  std::size_t max_inflight = 8;
  std::size_t max_input_chars = 0;  // 0 disables truncation

  /// Every role mapped to the same defaults, pointing at one server.
  static GatewayConfig with_all_roles(const std::string& endpoint_url, const std::string& model_name);
  void validate() const;
};

GatewayConfig gateway_config_from_json(const json& j);
json to_json(const GatewayConfig& cfg);

/// Single entry point for all model traffic.
///
/// Thread safe. A counting semaphore caps concurrent in-flight attempts at
/// `max_inflight`; the cap is released while sleeping between retries.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;
  using LogSink = std::function<void(const CallRecord&)>;

  Gateway(GatewayConfig config, std::shared_ptr<Transport> transport);

  ChatResponse chat(const ChatRequest& request);
  EmbeddingResponse embed(const EmbeddingRequest& request);

  /// Adapter over embed() for components that only need vectors.
  Embedder embedder();

  /// Convenience: a system + user prompt for `role`, returning the text.
  std::string complete(ModelRole role, const std::string& system, const std::string& user);

  const GatewayConfig& config() const { return config_; }
  const RoleEndpoint& endpoint(ModelRole role) const;

  std::vector<CallRecord> call_log() const;
  void set_log_sink(LogSink sink);
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

 private:
  json post_with_retry(const WireRequest& wire, CallRecord& record);
  std::string resolve_api_key(const RoleEndpoint& ep) const;
  void record(CallRecord record);

  GatewayConfig config_;
  std::shared_ptr<Transport> transport_;
  std::unique_ptr<std::counting_semaphore<>> inflight_;
  Sleeper sleeper_;
  mutable std::mutex log_mutex_;
  std::vector<CallRecord> log_;
  LogSink sink_;
  std::uint64_t next_sequence_ = 0;
};

}  // namespace synthqa
