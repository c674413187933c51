#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "unetkit/errors.hpp"
#include "unetkit/report.hpp"

namespace unetkit {

namespace {

class HttpTextClient final : public TextClient {
 public:
  explicit HttpTextClient(ClientConfig config) : config_(std::move(config)) {
    // split http://host[:port]/path
    std::string rest = config_.endpoint;
    const std::string prefix = "http://";
    if (!rest.starts_with(prefix)) {
      throw ConfigError("client endpoint must start with http://, got: " + config_.endpoint);
    }
    rest = rest.substr(prefix.size());
    const std::size_t slash = rest.find('/');
    host_ = slash == std::string::npos ? rest : rest.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : rest.substr(slash);
    if (host_.empty()) throw ConfigError("client endpoint has no host: " + config_.endpoint);
  }

  std::string complete(const std::string& prompt) override {
    httplib::Client cli("http://" + host_);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    const auto usecs =
        static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    nlohmann::json body;
    body["prompt"] = prompt;
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
      throw IoError("text client: transport failure contacting " + config_.endpoint);
    }
    if (res->status != 200) {
      throw IoError("text client: HTTP status " + std::to_string(res->status) + " from " +
                    config_.endpoint);
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("text client: response is not JSON: ") + e.what());
    }
    if (!parsed.contains("text") || !parsed["text"].is_string()) {
      throw FormatError("text client: response JSON lacks a string 'text' field");
    }
    return parsed["text"].get<std::string>();
  }

 private:
  ClientConfig config_;
  std::string host_;  // host or host:port, handled by httplib
  std::string path_;
};

}  // namespace

std::unique_ptr<TextClient> make_http_client(const ClientConfig& config) {
  return std::make_unique<HttpTextClient>(config);
}

}  // namespace unetkit
