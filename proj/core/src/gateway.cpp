#include "synthqa/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "synthqa/hash.hpp"

namespace synthqa {

namespace {

using Clock = std::chrono::steady_clock;

bool retryable(const TransportError& e, const RetryPolicy& policy) {
  switch (e.kind()) {
    case GatewayErrorKind::Unreachable:
    case GatewayErrorKind::Timeout:
      return true;
    case GatewayErrorKind::HttpStatus:
      return policy.retryable_statuses.count(e.status()) > 0;
    default:
      return false;
  }
}

// Backs `n` bytes off the end of s without splitting a UTF-8 sequence.
void drop_tail(std::string& s, std::size_t n) {
  std::size_t keep = n >= s.size() ? 0 : s.size() - n;
  while (keep > 0 && (static_cast<unsigned char>(s[keep]) & 0xC0) == 0x80) --keep;
  s.resize(keep);
}

// Trims message contents from the end, newest message first, until the total
// fits. A leading system message is left intact.
bool truncate_to_fit(std::vector<ChatMessage>& messages, std::size_t max_chars) {
  if (max_chars == 0) return false;
  std::size_t total = 0;
  for (const auto& m : messages) total += m.content.size();
  if (total <= max_chars) return false;
  std::size_t excess = total - max_chars;
  const std::size_t floor = (!messages.empty() && messages.front().role == "system") ? 1 : 0;
  for (std::size_t i = messages.size(); i > floor && excess > 0; --i) {
    auto& content = messages[i - 1].content;
    const std::size_t before = content.size();
    drop_tail(content, excess);
    excess -= std::min(excess, before - content.size());
  }
  return true;
}

ChatResponse parse_chat(const json& body) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
      body["choices"].empty()) {
    throw TransportError(GatewayErrorKind::MalformedResponse, "chat response has no choices");
  }
  const auto& choice = body["choices"][0];
  if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object() ||
      !choice["message"].contains("content") || !choice["message"]["content"].is_string()) {
    throw TransportError(GatewayErrorKind::MalformedResponse, "chat response has no message content");
  }
  ChatResponse out;
  out.text = choice["message"]["content"].get<std::string>();
  if (body.contains("usage") && body["usage"].is_object()) {
    out.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
    out.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
  }
  return out;
}

std::vector<Vector> parse_embeddings(const json& body, std::size_t expected) {
  if (!body.is_object() || !body.contains("data") || !body["data"].is_array()) {
    throw TransportError(GatewayErrorKind::MalformedResponse, "embedding response has no data array");
  }
  const auto& data = body["data"];
  if (data.size() != expected) {
    throw TransportError(GatewayErrorKind::MalformedResponse,
                         "embedding response has " + std::to_string(data.size()) + " entries, expected " +
                             std::to_string(expected));
  }
  std::vector<Vector> out(expected);
  std::vector<bool> filled(expected, false);
  std::size_t dim = 0;
  for (std::size_t pos = 0; pos < data.size(); ++pos) {
    const auto& item = data[pos];
    if (!item.is_object() || !item.contains("embedding") || !item["embedding"].is_array()) {
      throw TransportError(GatewayErrorKind::MalformedResponse, "embedding entry without vector");
    }
    const std::size_t index = item.contains("index") ? item["index"].get<std::size_t>() : pos;
    if (index >= expected || filled[index]) {
      throw TransportError(GatewayErrorKind::MalformedResponse, "embedding entry with bad index");
    }
    Vector v = item["embedding"].get<Vector>();
    if (v.empty() || (dim != 0 && v.size() != dim)) {
      throw TransportError(GatewayErrorKind::MalformedResponse, "embedding dimensionality mismatch");
    }
    dim = v.size();
    if (!(l2_norm(v) > 0.0) || !std::isfinite(l2_norm(v))) {
      throw TransportError(GatewayErrorKind::MalformedResponse, "embedding vector cannot be normalized");
    }
    out[index] = normalized(std::move(v));
    filled[index] = true;
  }
  return out;
}

}  // namespace

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::Extractor: return "extractor";
    case ModelRole::BaseGenerator: return "base_generator";
    case ModelRole::Refiner: return "refiner";
    case ModelRole::Judge: return "judge";
    case ModelRole::Embedder: return "embedder";
    case ModelRole::Discriminator: return "discriminator";
  }
  return "judge";
}

ModelRole model_role_from_string(std::string_view name) {
  for (ModelRole r : kAllModelRoles) {
    if (to_string(r) == name) return r;
  }
  throw ConfigError("unknown model role '" + std::string(name) + "'");
}

std::string_view to_string(GatewayErrorKind kind) {
  switch (kind) {
    case GatewayErrorKind::NotConfigured: return "not_configured";
    case GatewayErrorKind::InvalidRequest: return "invalid_request";
    case GatewayErrorKind::Unreachable: return "unreachable";
    case GatewayErrorKind::Timeout: return "timeout";
    case GatewayErrorKind::HttpStatus: return "http_status";
    case GatewayErrorKind::MalformedResponse: return "malformed_response";
  }
  return "unreachable";
}

RoleEndpoint default_role_endpoint(ModelRole role) {
  RoleEndpoint ep;
  switch (role) {
    case ModelRole::BaseGenerator: ep.temperature = 1.0; break;
    case ModelRole::Refiner: ep.temperature = 0.3; break;
    default: ep.temperature = 0.0; break;
  }
  ep.thinking_mode = false;
  return ep;
}

void RetryPolicy::validate() const {
  if (max_attempts < 1) throw ConfigError("retry: max_attempts must be at least 1");
  if (initial_delay.count() < 0) throw ConfigError("retry: initial_delay must be non-negative");
  if (!(multiplier >= 1.0)) throw ConfigError("retry: multiplier must be >= 1");
}

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const {
  const double scale = std::pow(multiplier, std::max(0, attempt - 1));
  return std::chrono::milliseconds(static_cast<long long>(initial_delay.count() * scale));
}

GatewayConfig GatewayConfig::with_all_roles(const std::string& endpoint_url, const std::string& model_name) {
  GatewayConfig cfg;
  for (ModelRole r : kAllModelRoles) {
    RoleEndpoint ep = default_role_endpoint(r);
    ep.endpoint_url = endpoint_url;
    ep.model_name = model_name;
    cfg.roles[r] = ep;
  }
  return cfg;
}

void GatewayConfig::validate() const {
  retry.validate();
  if (max_inflight == 0) throw ConfigError("gateway: max_inflight must be positive");
  for (const auto& [role, ep] : roles) {
    if (ep.model_name.empty()) {
      throw ConfigError("gateway: role '" + std::string(to_string(role)) + "' has no model_name");
    }
    if (ep.temperature < 0.0) {
      throw ConfigError("gateway: role '" + std::string(to_string(role)) + "' has negative temperature");
    }
  }
}

GatewayConfig gateway_config_from_json(const json& j) {
  GatewayConfig cfg;
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
    cfg.retry.initial_delay = std::chrono::milliseconds(r.value("initial_delay_ms", 500));
    cfg.retry.multiplier = r.value("multiplier", cfg.retry.multiplier);
    if (r.contains("retryable_statuses")) {
      cfg.retry.retryable_statuses = r["retryable_statuses"].get<std::set<int>>();
    }
  }
  cfg.max_inflight = j.value("max_inflight", cfg.max_inflight);
  cfg.max_input_chars = j.value("max_input_chars", cfg.max_input_chars);
  if (j.contains("roles")) {
    for (const auto& [name, spec] : j["roles"].items()) {
      const ModelRole role = model_role_from_string(name);
      RoleEndpoint ep = default_role_endpoint(role);
      ep.endpoint_url = spec.value("endpoint_url", ep.endpoint_url);
      ep.model_name = spec.value("model_name", ep.model_name);
      ep.api_key_env = spec.value("api_key_env", ep.api_key_env);
      ep.temperature = spec.value("temperature", ep.temperature);
      ep.max_tokens = spec.value("max_tokens", ep.max_tokens);
      ep.thinking_mode = spec.value("thinking_mode", ep.thinking_mode);
      cfg.roles[role] = ep;
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const GatewayConfig& cfg) {
  json roles = json::object();
  for (const auto& [role, ep] : cfg.roles) {
    roles[std::string(to_string(role))] = {{"endpoint_url", ep.endpoint_url},
                                           {"model_name", ep.model_name},
                                           {"api_key_env", ep.api_key_env},
                                           {"temperature", ep.temperature},
                                           {"max_tokens", ep.max_tokens},
                                           {"thinking_mode", ep.thinking_mode}};
  }
  return json{{"roles", roles},
              {"retry",
               {{"max_attempts", cfg.retry.max_attempts},
                {"initial_delay_ms", cfg.retry.initial_delay.count()},
                {"multiplier", cfg.retry.multiplier},
                {"retryable_statuses", cfg.retry.retryable_statuses}}},
              {"max_inflight", cfg.max_inflight},
              {"max_input_chars", cfg.max_input_chars}};
}

json to_json(const CallRecord& r) {
  return json{{"sequence", r.sequence},        {"role", to_string(r.role)},
              {"operation", r.operation},      {"model_name", r.model_name},
              {"endpoint_url", r.endpoint_url}, {"request_hash", r.request_hash},
              {"attempts", r.attempts},        {"ok", r.ok},
              {"error", r.error},              {"latency_ms", r.latency_ms},
              {"truncated", r.truncated}};
}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  if (!transport_) throw ConfigError("gateway: transport is required");
  inflight_ = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(config_.max_inflight));
  sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

const RoleEndpoint& Gateway::endpoint(ModelRole role) const {
  auto it = config_.roles.find(role);
  if (it == config_.roles.end()) {
    throw GatewayError(GatewayErrorKind::NotConfigured,
                       "model role '" + std::string(to_string(role)) + "' is not configured");
  }
  return it->second;
}

std::string Gateway::resolve_api_key(const RoleEndpoint& ep) const {
  if (ep.api_key_env.empty()) return {};
  const char* value = std::getenv(ep.api_key_env.c_str());
  return value ? std::string(value) : std::string();
}

void Gateway::record(CallRecord rec) {
  LogSink sink;
  {
    std::lock_guard lock(log_mutex_);
    rec.sequence = next_sequence_++;
    log_.push_back(rec);
    sink = sink_;
  }
  spdlog::debug("gateway: {} role={} model={} attempts={} ok={} latency_ms={:.1f}", rec.operation,
                to_string(rec.role), rec.model_name, rec.attempts, rec.ok, rec.latency_ms);
  if (sink) sink(rec);
}

std::vector<CallRecord> Gateway::call_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

void Gateway::set_log_sink(LogSink sink) {
  std::lock_guard lock(log_mutex_);
  sink_ = std::move(sink);
}

json Gateway::post_with_retry(const WireRequest& wire, CallRecord& rec) {
  const auto& policy = config_.retry;
  for (int attempt = 1;; ++attempt) {
    rec.attempts = attempt;
    try {
      inflight_->acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{*inflight_};
      return transport_->post(wire);
    } catch (const TransportError& e) {
      const bool again = retryable(e, policy) && attempt < policy.max_attempts;
      spdlog::warn("gateway: {} attempt {}/{} for role {} failed ({}): {}", rec.operation, attempt,
                   policy.max_attempts, to_string(rec.role), to_string(e.kind()), e.what());
      if (!again) {
        throw GatewayError(e.kind(),
                           std::string(to_string(rec.role)) + " " + rec.operation + " failed after " +
                               std::to_string(attempt) + " attempt(s): " + e.what(),
                           attempt, e.status());
      }
      sleeper_(policy.delay_after(attempt));
    }
  }
}

ChatResponse Gateway::chat(const ChatRequest& request) {
  const RoleEndpoint& ep = endpoint(request.role);
  if (request.messages.empty()) {
    throw GatewayError(GatewayErrorKind::InvalidRequest, "chat request has no messages");
  }
  std::vector<ChatMessage> messages = request.messages;
  const bool truncated = truncate_to_fit(messages, config_.max_input_chars);
  if (truncated) {
    spdlog::warn("gateway: {} prompt exceeded {} chars; context truncated from the tail",
                 to_string(request.role), config_.max_input_chars);
  }

  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  json body = {{"model", ep.model_name},
               {"messages", msgs},
               {"temperature", request.temperature.value_or(ep.temperature)},
               {"max_tokens", request.max_tokens.value_or(ep.max_tokens)},
               {"chat_template_kwargs", {{"enable_thinking", request.thinking_mode.value_or(ep.thinking_mode)}}}};
  if (!request.stop.empty()) body["stop"] = request.stop;

  WireRequest wire{request.role, ep.endpoint_url, "/chat/completions", body, resolve_api_key(ep)};
  CallRecord rec;
  rec.role = request.role;
  rec.operation = "chat";
  rec.model_name = ep.model_name;
  rec.endpoint_url = ep.endpoint_url;
  rec.request_hash = sha256_hex(body.dump());
  rec.truncated = truncated;

  const auto start = Clock::now();
  try {
    json reply = post_with_retry(wire, rec);
    ChatResponse out;
    try {
      out = parse_chat(reply);
    } catch (const TransportError& e) {
      throw GatewayError(e.kind(), e.what(), rec.attempts);
    }
    out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
    out.attempts = rec.attempts;
    out.model_name = ep.model_name;
    rec.ok = true;
    rec.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    record(rec);
    return out;
  } catch (const GatewayError& e) {
    rec.error = std::string(to_string(e.kind()));
    rec.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    record(rec);
    throw;
  }
}

EmbeddingResponse Gateway::embed(const EmbeddingRequest& request) {
  if (request.role != ModelRole::Embedder) {
    throw GatewayError(GatewayErrorKind::InvalidRequest, "embedding requests must use the embedder role");
  }
  const RoleEndpoint& ep = endpoint(ModelRole::Embedder);
  if (request.texts.empty()) return {};

  json body = {{"model", ep.model_name}, {"input", request.texts}};
  WireRequest wire{ModelRole::Embedder, ep.endpoint_url, "/embeddings", body, resolve_api_key(ep)};
  CallRecord rec;
  rec.role = ModelRole::Embedder;
  rec.operation = "embed";
  rec.model_name = ep.model_name;
  rec.endpoint_url = ep.endpoint_url;
  rec.request_hash = sha256_hex(body.dump());

  const auto start = Clock::now();
  try {
    json reply = post_with_retry(wire, rec);
    EmbeddingResponse out;
    try {
      out.vectors = parse_embeddings(reply, request.texts.size());
    } catch (const TransportError& e) {
      throw GatewayError(e.kind(), e.what(), rec.attempts);
    }
    out.attempts = rec.attempts;
    rec.ok = true;
    rec.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    record(rec);
    return out;
  } catch (const GatewayError& e) {
    rec.error = std::string(to_string(e.kind()));
    rec.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    record(rec);
    throw;
  }
}

Embedder Gateway::embedder() {
  return [this](const std::vector<std::string>& texts) {
    return embed(EmbeddingRequest{ModelRole::Embedder, texts}).vectors;
  };
}

std::string Gateway::complete(ModelRole role, const std::string& system, const std::string& user) {
  ChatRequest req;
  req.role = role;
  if (!system.empty()) req.messages.push_back({"system", system});
  req.messages.push_back({"user", user});
  return chat(req).text;
}

}  // namespace synthqa
