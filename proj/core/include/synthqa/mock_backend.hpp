#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "synthqa/gateway.hpp"

namespace synthqa {

/// A chat call as seen by the mock: the role and the message contents joined
/// by blank lines.
struct MockCall {
  ModelRole role = ModelRole::Judge;
  std::string prompt;
};

/// Canned behaviour for prompts that match.
///
/// A rule matches when the role (if set) agrees, `contains` is a substring of
/// the prompt, and `pattern` (an ECMAScript regex, if set) is found in it.
/// `responder` wins over `responses`. With several responses, the one used is
/// picked by hashing the prompt with the script seed, so the choice does not
/// depend on call order. `$1`..`$9` in a response expand to regex captures.
struct MockRule {
  std::optional<ModelRole> role;
  std::string contains;
  std::string pattern;
  std::vector<std::string> responses;
  std::function<std::string(const MockCall&)> responder;
};

struct MockScript {
  std::uint64_t seed = 0;
  std::size_t dimension = 64;
  std::vector<MockRule> rules;                  // first match wins
  std::map<std::string, Vector> embeddings;     // exact-text overrides
};

/// Reads {"seed", "dimension", "rules": [{"role","contains","pattern","responses"}],
/// "embeddings": {text: [..]}}.
MockScript mock_script_from_json(const json& j);

/// Offline, deterministic stand-in for a model server.
///
/// Unmatched chat prompts get seeded pseudo-random filler text. Embeddings are
/// a seeded bag-of-words projection: every lowercase alphanumeric word maps to
/// a fixed Gaussian direction and a text embeds to the normalized sum, so texts
/// sharing words have positive cosine similarity.
class MockTransport : public Transport {
 public:
  explicit MockTransport(MockScript script);

  json post(const WireRequest& request) override;

  /// The next `count` requests fail with `kind` before reaching the script.
  void fail_next(int count, GatewayErrorKind kind, int status = 503);
  void add_rule(MockRule rule);
  void set_embedding(const std::string& text, Vector v);

  std::string chat_reply(const MockCall& call) const;
  Vector embed_text(const std::string& text) const;

  /// "role\tprompt\treply" per chat request, in arrival order.
  std::vector<std::string> transcript() const;
  std::size_t request_count() const;

 private:
  json chat_body(const WireRequest& request);
  json embedding_body(const WireRequest& request) const;

  MockScript script_;
  mutable std::mutex mutex_;
  std::deque<std::pair<GatewayErrorKind, int>> failures_;
  std::vector<std::string> transcript_;
  std::size_t requests_ = 0;
};

/// Every role mapped to a mock model, no retry delay.
GatewayConfig mock_gateway_config();

struct MockBackend {
  std::shared_ptr<MockTransport> transport;
  std::shared_ptr<Gateway> gateway;
};

MockBackend mock_backend(MockScript script, GatewayConfig config = mock_gateway_config());

}  // namespace synthqa
