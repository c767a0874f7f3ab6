#include <mutex>
#include <regex>

#include <httplib.h>

#include "synthqa/gateway.hpp"

namespace synthqa {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string base_path;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    throw TransportError(GatewayErrorKind::NotConfigured, "invalid endpoint_url '" + url + "'");
  }
  std::string path = m[2].matched ? m[2].str() : std::string();
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {m[1].str(), path};
}

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::chrono::milliseconds timeout) : timeout_(timeout) {}

  json post(const WireRequest& request) override {
    const ParsedUrl url = parse_url(request.endpoint_url);
    httplib::Client client(url.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!request.api_key.empty()) headers.emplace("Authorization", "Bearer " + request.api_key);

    auto res = client.Post(url.base_path + request.path, headers, request.body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const auto kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                            ? GatewayErrorKind::Timeout
                            : GatewayErrorKind::Unreachable;
      throw TransportError(kind, "POST " + request.path + ": " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
      throw TransportError(GatewayErrorKind::HttpStatus,
                           "POST " + request.path + " returned HTTP " + std::to_string(res->status),
                           res->status);
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransportError(GatewayErrorKind::MalformedResponse,
                           "POST " + request.path + " returned invalid JSON: " + e.what());
    }
  }

 private:
  std::chrono::milliseconds timeout_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(std::chrono::milliseconds timeout) {
  return std::make_shared<HttpTransport>(timeout);
}

}  // namespace synthqa
