#pragma once

// Provider-agnostic chat-completion client: request canonicalization and
// hashing, the Provider interface, and the record/replay fixture machinery.
// The live HTTP provider lives in llmclient_http.hpp.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "lamp/util.hpp"

namespace lamp::llm {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Replay lookup failed; never falls back to a live call.
class FixtureMiss : public ProviderError {
 public:
  FixtureMiss(const std::string& hash, const std::string& summary)
      : ProviderError("fixture miss: no recorded exchange for request " + hash + " (" + summary + ")"),
        hash_(hash) {}
  const std::string& hash() const noexcept { return hash_; }

 private:
  std::string hash_;
};

inline constexpr double kGenerationTemperature = 0.7;
inline constexpr double kEditingTemperature = 0.0;

struct CompletionRequest {
  std::string model;
  std::optional<std::string> system;
  std::string user;
  double temperature = kEditingTemperature;
  int max_tokens = 1024;

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

inline void validate(const CompletionRequest& r) {
  if (r.user.empty()) throw ProviderError("completion request has an empty user message");
  if (!(r.temperature >= 0.0)) throw ProviderError("temperature must be >= 0");
  if (r.max_tokens <= 0) throw ProviderError("max_tokens must be positive");
}

/// Canonical form: object keys sorted, compact, UTF-8 unescaped. An absent
/// system prompt serializes as null so it differs from an empty one.
inline std::string canonical_form(const CompletionRequest& r) {
  json j;  // std::map-backed, so keys come out sorted
  j["model"] = r.model;
  j["system"] = r.system ? json(*r.system) : json(nullptr);
  j["user"] = r.user;
  j["temperature"] = r.temperature;
  j["max_tokens"] = r.max_tokens;
  return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

inline CompletionRequest request_from_json(const json& j) {
  CompletionRequest r;
  try {
    r.model = j.at("model").get<std::string>();
    if (auto it = j.find("system"); it != j.end() && !it->is_null()) r.system = it->get<std::string>();
    r.user = j.at("user").get<std::string>();
    r.temperature = j.at("temperature").get<double>();
    r.max_tokens = j.at("max_tokens").get<int>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed request object: ") + e.what());
  }
  return r;
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw ProviderError("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0x0F]);
  }
  return out;
}

inline std::string request_hash(const CompletionRequest& r) { return sha256_hex(canonical_form(r)); }

inline std::string summarize(const CompletionRequest& r) {
  std::string head = r.user.substr(0, 60);
  for (auto& c : head) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return "model=" + r.model + ", user=\"" + head + (r.user.size() > 60 ? "...\"" : "\"");
}

using lamp::utc_timestamp;

struct ProviderExchange {
  std::string request_hash;
  std::string response_text;
  std::string provider_name;
  std::string recorded_at;
  std::optional<CompletionRequest> request;  // kept for fixture readability
};

inline ordered_json to_json(const ProviderExchange& x) {
  ordered_json j;
  j["request_hash"] = x.request_hash;
  j["response_text"] = x.response_text;
  j["provider_name"] = x.provider_name;
  j["recorded_at"] = x.recorded_at;
  if (x.request) {
    j["request"] = ordered_json::parse(canonical_form(*x.request));
  }
  return j;
}

inline ProviderExchange exchange_from_json(const json& j) {
  ProviderExchange x;
  try {
    x.request_hash = j.at("request_hash").get<std::string>();
    x.response_text = j.at("response_text").get<std::string>();
    x.provider_name = j.value("provider_name", std::string{});
    x.recorded_at = j.value("recorded_at", std::string{});
    if (auto it = j.find("request"); it != j.end() && !it->is_null()) x.request = request_from_json(*it);
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed fixture entry: ") + e.what());
  }
  return x;
}

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Serves recorded responses by request hash. Performs no I/O after loading.
class ReplayProvider final : public Provider {
 public:
  ReplayProvider() = default;

  explicit ReplayProvider(const std::vector<ProviderExchange>& exchanges) {
    for (const auto& x : exchanges) add(x);
  }

  static ReplayProvider from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ProviderError("cannot open fixture file '" + path + "'");
    ReplayProvider p;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        p.add(exchange_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        throw ProviderError("fixture '" + path + "' line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    return p;
  }

  void add(const ProviderExchange& x) { responses_[x.request_hash] = x.response_text; }
  std::size_t size() const { return responses_.size(); }

  std::string name() const override { return "replay"; }

  std::string complete(const CompletionRequest& request) override {
    validate(request);
    auto h = request_hash(request);
    auto it = responses_.find(h);
    if (it == responses_.end()) throw FixtureMiss(h, summarize(request));
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::string> responses_;
};

/// Appends exchanges to a JSONL fixture; a single writer serializes appends.
class FixtureWriter {
 public:
  explicit FixtureWriter(std::string path) : path_(std::move(path)) {}

  void append(const ProviderExchange& x) {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw ProviderError("cannot append to fixture file '" + path_ + "'");
    out << to_json(x).dump(-1, ' ', false) << '\n';
    out.flush();
    if (!out) throw ProviderError("write failed for fixture file '" + path_ + "'");
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::mutex mu_;
};

/// Forwards to an inner provider and records every successful exchange.
class RecordingProvider final : public Provider {
 public:
  RecordingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<FixtureWriter> writer)
      : inner_(std::move(inner)), writer_(std::move(writer)) {}

  std::string name() const override { return "record(" + inner_->name() + ")"; }

  std::string complete(const CompletionRequest& request) override {
    validate(request);
    auto text = inner_->complete(request);
    writer_->append({request_hash(request), text, inner_->name(), utc_timestamp(), request});
    return text;
  }

 private:
  std::shared_ptr<Provider> inner_;
  std::shared_ptr<FixtureWriter> writer_;
};

}  // namespace lamp::llm
