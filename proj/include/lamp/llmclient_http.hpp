#pragma once

// Live chat-completions provider over HTTP(S), plus environment-driven
// provider construction for the three modes (live, record, replay).

#include <chrono>
#include <cstdlib>
#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include <httplib.h>

#include "lamp/llmclient.hpp"

namespace lamp::llm {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

inline bool is_transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

/// POSTs the de-facto chat-completions shape: bearer token, messages array,
/// reply text read from choices[0].message.content.
class HttpProvider final : public Provider {
 public:
  HttpProvider(std::string base_url, std::string api_key, RetryPolicy retry = {},
               std::chrono::seconds timeout = std::chrono::seconds(120))
      : api_key_(std::move(api_key)), retry_(retry), timeout_(timeout) {
    if (base_url.empty()) throw ProviderError("live provider needs a base URL");
    while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ProviderError("base URL must include a scheme: " + base_url);
    auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      origin_ = base_url;
    } else {
      origin_ = base_url.substr(0, path_start);
      path_prefix_ = base_url.substr(path_start);
    }
  }

  std::string name() const override { return "live"; }

  /// Total HTTP attempts made so far (for diagnostics and tests).
  int attempts() const { return attempts_; }

  std::string complete(const CompletionRequest& request) override {
    validate(request);
    json body;
    body["model"] = request.model;
    body["messages"] = json::array();
    if (request.system) body["messages"].push_back({{"role", "system"}, {"content", *request.system}});
    body["messages"].push_back({{"role", "user"}, {"content", request.user}});
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    const std::string payload = body.dump(-1, ' ', false, json::error_handler_t::replace);

    auto backoff = retry_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
      ++attempts_;
      httplib::Client cli(origin_);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_).count());
      cli.set_read_timeout(timeout_.count());
      cli.set_bearer_token_auth(api_key_);
      auto res = cli.Post(path_prefix_ + "/chat/completions", payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
      } else if (res->status >= 200 && res->status < 300) {
        return extract_content(res->body);
      } else if (is_transient_status(res->status)) {
        last_error = "HTTP " + std::to_string(res->status);
      } else {
        throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 300));
      }
      if (attempt < retry_.max_attempts) {
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(backoff.count()) * retry_.multiplier));
      }
    }
    throw ProviderError("provider request failed after " + std::to_string(retry_.max_attempts) +
                        " attempts: " + last_error);
  }

  static std::string extract_content(const std::string& body) {
    try {
      auto j = json::parse(body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      if (!content.is_string()) throw ProviderError("message content is not a string");
      return content.get<std::string>();
    } catch (const json::exception& e) {
      throw ProviderError(std::string("malformed completion response: ") + e.what());
    }
  }

 private:
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
  std::atomic<int> attempts_{0};
};

enum class ProviderMode { Live, Record, Replay };

inline std::optional<ProviderMode> parse_mode(std::string_view s) {
  if (s == "live") return ProviderMode::Live;
  if (s == "record") return ProviderMode::Record;
  if (s == "replay") return ProviderMode::Replay;
  return std::nullopt;
}

struct ProviderConfig {
  ProviderMode mode = ProviderMode::Replay;
  std::string base_url;
  std::string api_key;
  std::string model;
  std::string fixture_path;
  RetryPolicy retry;
};

/// Reads LAMP_API_KEY, LAMP_BASE_URL, LAMP_MODEL, LAMP_PROVIDER_MODE and
/// LAMP_FIXTURE_PATH. Unset variables leave the defaults untouched.
inline ProviderConfig config_from_env(ProviderConfig cfg = {}) {
  auto env = [](const char* k) -> std::optional<std::string> {
    const char* v = std::getenv(k);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("LAMP_API_KEY")) cfg.api_key = *v;
  if (auto v = env("LAMP_BASE_URL")) cfg.base_url = *v;
  if (auto v = env("LAMP_MODEL")) cfg.model = *v;
  if (auto v = env("LAMP_FIXTURE_PATH")) cfg.fixture_path = *v;
  if (auto v = env("LAMP_PROVIDER_MODE")) {
    auto m = parse_mode(*v);
    if (!m) throw ProviderError("LAMP_PROVIDER_MODE must be live, record or replay; got '" + *v + "'");
    cfg.mode = *m;
  }
  return cfg;
}

inline std::shared_ptr<Provider> make_provider(const ProviderConfig& cfg) {
  switch (cfg.mode) {
    case ProviderMode::Replay:
      if (cfg.fixture_path.empty()) throw ProviderError("replay mode needs a fixture path");
      return std::make_shared<ReplayProvider>(ReplayProvider::from_file(cfg.fixture_path));
    case ProviderMode::Live:
    case ProviderMode::Record: {
      if (cfg.api_key.empty()) throw ProviderError("live mode needs LAMP_API_KEY");
      auto live = std::make_shared<HttpProvider>(cfg.base_url, cfg.api_key, cfg.retry);
      if (cfg.mode == ProviderMode::Live) return live;
      if (cfg.fixture_path.empty()) throw ProviderError("record mode needs a fixture path");
      return std::make_shared<RecordingProvider>(live, std::make_shared<FixtureWriter>(cfg.fixture_path));
    }
  }
  throw ProviderError("unknown provider mode");
}

}  // namespace lamp::llm
