#include <cctype>
#include <cmath>
#include <regex>

#include "synthqa/chunking.hpp"
#include "synthqa/hash.hpp"
#include "synthqa/mock_backend.hpp"
#include "synthqa/rng.hpp"

namespace synthqa {

namespace {

constexpr std::string_view kFillerWords[] = {
    "alarm",   "rectifier", "battery", "voltage", "cabinet", "check",   "counter", "radio",
    "unit",    "power",     "supply",  "restart", "verify",  "status",  "link",    "fault",
    "cell",    "node",      "module",  "threshold", "log",   "replace", "inspect", "cable",
    "breaker", "fan",       "sensor",  "report",  "level",   "mains",   "backup",  "outage"};

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

std::vector<std::string> embedding_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vector gaussian_direction(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  Vector v(dim);
  for (std::size_t i = 0; i < dim; i += 2) {
    const double u1 = 1.0 - rng.unit();
    const double u2 = rng.unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * M_PI * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * M_PI * u2);
  }
  return v;
}

std::string expand_captures(const std::string& templ, const std::smatch& m) {
  std::string out;
  for (std::size_t i = 0; i < templ.size(); ++i) {
    if (templ[i] == '$' && i + 1 < templ.size() && std::isdigit(static_cast<unsigned char>(templ[i + 1]))) {
      const std::size_t group = static_cast<std::size_t>(templ[i + 1] - '0');
      if (group < m.size()) out += m[group].str();
      ++i;
    } else {
      out += templ[i];
    }
  }
  return out;
}

}  // namespace

MockScript mock_script_from_json(const json& j) {
  MockScript script;
  script.seed = j.value("seed", std::uint64_t{0});
  script.dimension = j.value("dimension", std::size_t{64});
  if (j.contains("rules")) {
    for (const auto& r : j["rules"]) {
      MockRule rule;
      if (r.contains("role")) rule.role = model_role_from_string(r["role"].get<std::string>());
      rule.contains = r.value("contains", std::string());
      rule.pattern = r.value("pattern", std::string());
      if (r.contains("response")) rule.responses.push_back(r["response"].get<std::string>());
      if (r.contains("responses")) {
        for (const auto& s : r["responses"]) rule.responses.push_back(s.get<std::string>());
      }
      if (rule.responses.empty()) throw ConfigError("mock rule without responses");
      script.rules.push_back(std::move(rule));
    }
  }
  if (j.contains("embeddings")) {
    for (const auto& [text, vec] : j["embeddings"].items()) script.embeddings[text] = vec.get<Vector>();
  }
  if (script.dimension == 0) throw ConfigError("mock embedding dimension must be positive");
  return script;
}

MockTransport::MockTransport(MockScript script) : script_(std::move(script)) {}

void MockTransport::fail_next(int count, GatewayErrorKind kind, int status) {
  std::lock_guard lock(mutex_);
  for (int i = 0; i < count; ++i) failures_.emplace_back(kind, status);
}

void MockTransport::add_rule(MockRule rule) {
  std::lock_guard lock(mutex_);
  script_.rules.push_back(std::move(rule));
}

void MockTransport::set_embedding(const std::string& text, Vector v) {
  std::lock_guard lock(mutex_);
  script_.embeddings[text] = std::move(v);
}

std::vector<std::string> MockTransport::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

std::size_t MockTransport::request_count() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::string MockTransport::chat_reply(const MockCall& call) const {
  const std::uint64_t prompt_hash = fnv1a64(call.prompt);
  for (const auto& rule : script_.rules) {
    if (rule.role && *rule.role != call.role) continue;
    if (!rule.contains.empty() && call.prompt.find(rule.contains) == std::string::npos) continue;
    std::smatch m;
    if (!rule.pattern.empty()) {
      const std::regex re(rule.pattern);
      if (!std::regex_search(call.prompt, m, re)) continue;
    }
    if (rule.responder) return rule.responder(call);
    if (rule.responses.empty()) continue;
    const auto& pick = rule.responses[derive_seed(script_.seed, prompt_hash) % rule.responses.size()];
    return expand_captures(pick, m);
  }
  Rng rng(derive_seed(script_.seed, prompt_hash, 0x5eed));
  std::string out;
  const std::size_t words = 8 + rng.below(9);
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += kFillerWords[rng.below(std::size(kFillerWords))];
  }
  return out;
}

Vector MockTransport::embed_text(const std::string& text) const {
  if (auto it = script_.embeddings.find(text); it != script_.embeddings.end()) return it->second;
  const auto words = embedding_words(text);
  Vector sum(script_.dimension, 0.0);
  if (words.empty()) {
    return normalized(gaussian_direction(derive_seed(script_.seed, fnv1a64(text), 0xe4b), script_.dimension));
  }
  for (const auto& w : words) {
    const Vector dir = gaussian_direction(derive_seed(script_.seed, fnv1a64(w)), script_.dimension);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += dir[i];
  }
  return normalized(std::move(sum));
}

json MockTransport::chat_body(const WireRequest& request) {
  MockCall call;
  call.role = request.role;
  for (const auto& m : request.body.at("messages")) {
    if (!call.prompt.empty()) call.prompt += "\n\n";
    call.prompt += m.at("content").get<std::string>();
  }
  std::string reply;
  {
    std::lock_guard lock(mutex_);
    reply = chat_reply(call);
    transcript_.push_back(std::string(to_string(call.role)) + "\t" + call.prompt + "\t" + reply);
  }
  return json{{"id", "mock-" + sha256_hex(call.prompt).substr(0, 16)},
              {"object", "chat.completion"},
              {"model", request.body.value("model", std::string("mock"))},
              {"choices",
               json::array({{{"index", 0},
                             {"message", {{"role", "assistant"}, {"content", reply}}},
                             {"finish_reason", "stop"}}})},
              {"usage",
               {{"prompt_tokens", count_tokens(call.prompt)}, {"completion_tokens", count_tokens(reply)}}}};
}

json MockTransport::embedding_body(const WireRequest& request) const {
  json data = json::array();
  std::size_t index = 0;
  for (const auto& t : request.body.at("input")) {
    Vector v;
    {
      std::lock_guard lock(mutex_);
      v = embed_text(t.get<std::string>());
    }
    data.push_back({{"object", "embedding"}, {"index", index++}, {"embedding", v}});
  }
  return json{{"object", "list"}, {"data", data}, {"model", request.body.value("model", std::string("mock"))}};
}

json MockTransport::post(const WireRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++requests_;
    if (!failures_.empty()) {
      auto [kind, status] = failures_.front();
      failures_.pop_front();
      switch (kind) {
        case GatewayErrorKind::MalformedResponse:
          return json{{"unexpected", true}};
        case GatewayErrorKind::HttpStatus:
          throw TransportError(kind, "mock: scripted HTTP " + std::to_string(status), status);
        default:
          throw TransportError(kind, "mock: scripted " + std::string(to_string(kind)));
      }
    }
  }
  if (request.path == "/embeddings") return embedding_body(request);
  if (request.path == "/chat/completions") return chat_body(request);
  throw TransportError(GatewayErrorKind::HttpStatus, "mock: unknown path " + request.path, 404);
}

GatewayConfig mock_gateway_config() {
  GatewayConfig cfg;
  for (ModelRole r : kAllModelRoles) {
    RoleEndpoint ep = default_role_endpoint(r);
    ep.endpoint_url = "mock://local";
    ep.model_name = "mock-" + std::string(to_string(r));
    cfg.roles[r] = ep;
  }
  cfg.retry.initial_delay = std::chrono::milliseconds(0);
  return cfg;
}

MockBackend mock_backend(MockScript script, GatewayConfig config) {
  MockBackend b;
  b.transport = std::make_shared<MockTransport>(std::move(script));
  b.gateway = std::make_shared<Gateway>(std::move(config), b.transport);
  return b;
}

}  // namespace synthqa
