/*
 * Copyright 2026 The moraleval Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "moraleval/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "moraleval/error.hpp"

namespace moraleval {

const std::vector<RuleMockRule> kRuleMockRules = {
    {{"contraband"}, "blocked", ""},
    {{"garbled"}, "garbage", ""},
    {{"cribbage"}, "judgment", "neither scenario is more pleasant than the other"},
    {{"steal", "cheat", "hurt", "kill"}, "judgment", "1"},
};

namespace {

constexpr const char* kMockGarbage = "The model output was garbled beyond recovery";

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Decodes the quoted value that starts at `open` (a '"'), or nullopt.
std::optional<std::string> DecodeQuoted(const std::string& text, std::size_t open) {
  for (std::size_t i = open + 1; i < text.size(); ++i) {
    if (text[i] == '\\') {
      ++i;
    } else if (text[i] == '"') {
      const auto j = nlohmann::json::parse(text.substr(open, i - open + 1), nullptr, false);
      if (j.is_string()) return j.get<std::string>();
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::vector<std::string> ScenarioQuotes(const std::string& prompt) {
  static const std::regex kLabel(R"((^|\n)Scenario( [01])?: ")");
  std::vector<std::string> out;
  for (std::sregex_iterator it(prompt.begin(), prompt.end(), kLabel), end; it != end; ++it) {
    const auto open = static_cast<std::size_t>(it->position(0) + it->length(0) - 1);
    if (auto v = DecodeQuoted(prompt, open)) out.push_back(Lower(*v));
  }
  return out;
}

std::vector<std::string> ScaffoldKeys(const std::string& prompt) {
  const auto pos = prompt.find("\n{\n");
  if (pos != std::string::npos) {
    const auto j = nlohmann::ordered_json::parse(prompt.substr(pos + 1), nullptr, false);
    if (j.is_object() && !j.empty()) {
      std::vector<std::string> keys;
      for (const auto& [k, v] : j.items()) keys.push_back(k);
      return keys;
    }
  }
  return {"Moral judgment"};
}

class RuleMockBackend : public Backend {
 public:
  Exchange Complete(const RenderedPrompt& prompt) override {
    Exchange ex;
    auto [text, blocked] = RuleMockRespond(prompt.text);
    ex.attempt_count = 1;
    if (blocked) {
      ex.status = ExchangeStatus::kBlocked;
      ex.diagnostic = "content filtered by rule mock";
    } else {
      ex.raw_response = std::move(text);
    }
    return ex;
  }
};

class ReplayBackend : public Backend {
 public:
  ReplayBackend(std::string model, std::shared_ptr<ReplayStore> store)
      : model_(std::move(model)), store_(std::move(store)) {}

  Exchange Complete(const RenderedPrompt& prompt) override {
    auto hit = store_->Lookup(prompt.prompt_hash, model_);
    if (!hit) {
      Fail(ErrorCode::kNotFound, "replay miss: no recording for prompt_hash " +
                                     prompt.prompt_hash + " and model '" + model_ + "'");
    }
    Exchange ex;
    ex.raw_response = std::move(*hit);
    ex.attempt_count = 1;
    return ex;
  }

 private:
  std::string model_;
  std::shared_ptr<ReplayStore> store_;
};

class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.endpoint_url, m, kUrl)) {
      Fail(ErrorCode::kInvalidArgument, "endpoint_url must be an http(s) URL");
    }
    base_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
    if (!cfg_.api_key_env.empty()) {
      const char* key = std::getenv(cfg_.api_key_env.c_str());
      if (key == nullptr || *key == '\0') {
        Fail(ErrorCode::kInvalidArgument,
             "environment variable " + cfg_.api_key_env + " is not set");
      }
      api_key_ = key;
    }
  }

  Exchange Complete(const RenderedPrompt& prompt) override {
    const nlohmann::json body = {
        {"model", cfg_.model_name},
        {"messages", {{{"role", "user"}, {"content", prompt.text}}}},
        {"temperature", cfg_.temperature},
        {"max_tokens", cfg_.max_tokens},
    };
    const std::string payload = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);

    Exchange ex;
    thread_local std::mt19937_64 jitter_rng(std::random_device{}());
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    for (int attempt = 1; attempt <= cfg_.max_retries + 1; ++attempt) {
      ex.attempt_count = attempt;
      const Outcome outcome = Attempt(payload, ex);
      if (!outcome.transient || attempt == cfg_.max_retries + 1) break;
      const double wait = static_cast<double>(cfg_.backoff_initial.count()) *
                          std::pow(cfg_.backoff_multiplier, attempt - 1) * jitter(jitter_rng);
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(wait)));
    }
    if (ex.status != ExchangeStatus::kOk && ex.status != ExchangeStatus::kBlocked &&
        ex.attempt_count > 1) {
      ex.diagnostic += " (after " + std::to_string(ex.attempt_count) + " attempts)";
    }
    return ex;
  }

 private:
  struct Outcome {
    bool transient = false;
  };

  Outcome Attempt(const std::string& payload, Exchange& ex) {
    httplib::Client client(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    ex.raw_response.clear();
    ex.token_usage.reset();
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timeout = err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout;
      ex.status = timeout ? ExchangeStatus::kTimeout : ExchangeStatus::kTransportError;
      ex.diagnostic = "request failed: " + httplib::to_string(err);
      return {true};
    }
    const int code = res->status;
    const auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (code == 200) {
      const nlohmann::json* choice = nullptr;
      if (doc.is_object() && doc.contains("choices") && doc["choices"].is_array() &&
          !doc["choices"].empty()) {
        choice = &doc["choices"][0];
      }
      if (choice == nullptr) {
        ex.status = ExchangeStatus::kTransportError;
        ex.diagnostic = "response has no choices";
        return {false};
      }
      if (choice->value("finish_reason", std::string()) == "content_filter") {
        ex.status = ExchangeStatus::kBlocked;
        ex.diagnostic = "endpoint reported content_filter";
        return {false};
      }
      std::string content;
      if (choice->contains("message") && (*choice)["message"].contains("content") &&
          (*choice)["message"]["content"].is_string()) {
        content = (*choice)["message"]["content"].get<std::string>();
      }
      if (content.empty()) {
        ex.status = ExchangeStatus::kTransportError;
        ex.diagnostic = "response content is empty";
        return {false};
      }
      if (doc.contains("usage") && doc["usage"].is_object()) {
        const auto& u = doc["usage"];
        ex.token_usage = TokenUsage{u.value("prompt_tokens", std::int64_t{0}),
                                    u.value("completion_tokens", std::int64_t{0})};
      }
      ex.status = ExchangeStatus::kOk;
      ex.diagnostic.clear();
      ex.raw_response = std::move(content);
      return {false};
    }
    if (code == 400 && (res->body.find("content_filter") != std::string::npos ||
                        res->body.find("content_policy") != std::string::npos)) {
      ex.status = ExchangeStatus::kBlocked;
      ex.diagnostic = "endpoint reported content filtering (HTTP 400)";
      return {false};
    }
    ex.status = ExchangeStatus::kTransportError;
    ex.diagnostic = "HTTP " + std::to_string(code) + ": " + res->body.substr(0, 200);
    return {code == 408 || code == 429 || code >= 500};
  }

  BackendConfig cfg_;
  std::string base_;
  std::string path_;
  std::string api_key_;
};

template <typename Enum, std::size_t N>
Enum EnumFromString(std::string_view s, const Enum (&all)[N], const char* what) {
  for (Enum e : all) {
    if (ToString(e) == s) return e;
  }
  Fail(ErrorCode::kInvalidArgument, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::pair<std::string, bool> RuleMockRespond(const std::string& prompt_text) {
  const auto quotes = ScenarioQuotes(prompt_text);
  const RuleMockRule* hit = nullptr;
  for (const auto& rule : kRuleMockRules) {
    for (const auto& trigger : rule.triggers) {
      for (const auto& q : quotes) {
        if (q.find(trigger) != std::string::npos) hit = &rule;
      }
      if (hit) break;
    }
    if (hit) break;
  }
  if (hit && hit->effect == "blocked") return {"", true};
  if (hit && hit->effect == "garbage") return {kMockGarbage, false};

  const std::string judgment = hit ? hit->judgment : "0";
  const std::string reason = hit ? "matched '" + hit->triggers.front() + "' rule" : "no rule matched";
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  const auto keys = ScaffoldKeys(prompt_text);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out[keys[i]] = i + 1 == keys.size() ? judgment : "Mock analysis: " + reason + ".";
  }
  return {out.dump(2, ' ', false, nlohmann::json::error_handler_t::replace), false};
}

void BackendConfig::Validate() const {
  const auto bad = [](const std::string& m) { Fail(ErrorCode::kInvalidArgument, m); };
  if (!(temperature >= 0.0)) bad("temperature must be >= 0");
  if (concurrency_limit < 1) bad("concurrency_limit must be >= 1");
  if (max_tokens < 1) bad("max_tokens must be positive");
  if (max_retries < 0) bad("max_retries must be >= 0");
  if (timeout.count() <= 0) bad("timeout must be positive");
  if (backoff_initial.count() < 0 || backoff_multiplier < 1.0) {
    bad("backoff needs initial >= 0 and multiplier >= 1");
  }
  if (model_name.empty()) bad("model_name is required");
  if (kind == BackendKind::kHttpChat && endpoint_url.empty()) {
    bad("endpoint_url is required for http-chat");
  }
  if (kind == BackendKind::kReplay && replay_path.empty()) {
    bad("replay_path is required for replay");
  }
}

std::string_view ToString(BackendKind kind) {
  switch (kind) {
    case BackendKind::kHttpChat: return "http-chat";
    case BackendKind::kReplay: return "replay";
    case BackendKind::kRuleMock: return "rule-mock";
  }
  return "";
}

BackendKind BackendKindFromString(std::string_view s) {
  static constexpr BackendKind kAll[] = {BackendKind::kHttpChat, BackendKind::kReplay,
                                         BackendKind::kRuleMock};
  return EnumFromString(s, kAll, "backend kind");
}

std::string_view ToString(ExchangeStatus status) {
  switch (status) {
    case ExchangeStatus::kOk: return "ok";
    case ExchangeStatus::kBlocked: return "blocked";
    case ExchangeStatus::kTransportError: return "transport-error";
    case ExchangeStatus::kTimeout: return "timeout";
  }
  return "";
}

ExchangeStatus ExchangeStatusFromString(std::string_view s) {
  static constexpr ExchangeStatus kAll[] = {ExchangeStatus::kOk, ExchangeStatus::kBlocked,
                                            ExchangeStatus::kTransportError,
                                            ExchangeStatus::kTimeout};
  return EnumFromString(s, kAll, "exchange status");
}

BackendConfig BackendConfigFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) Fail(ErrorCode::kInvalidArgument, "backend config must be an object");
  static const std::set<std::string> kKnown = {
      "kind", "endpoint_url", "model_name", "api_key_env", "temperature", "max_tokens",
      "timeout_ms", "max_retries", "backoff", "concurrency_limit", "replay_path"};
  for (const auto& [key, value] : j.items()) {
    const std::string lower = Lower(key);
    if (lower != "api_key_env" &&
        (lower.find("key") != std::string::npos || lower.find("token") != std::string::npos ||
         lower.find("secret") != std::string::npos || lower.find("password") != std::string::npos) &&
        !kKnown.count(key)) {
      Fail(ErrorCode::kInvalidArgument,
           "backend config must not hold credentials ('" + key +
               "'); name an environment variable in api_key_env instead");
    }
    if (!kKnown.count(key)) Fail(ErrorCode::kInvalidArgument, "unknown backend config key '" + key + "'");
  }
  BackendConfig cfg;
  try {
    cfg.kind = BackendKindFromString(j.at("kind").get<std::string>());
    cfg.endpoint_url = j.value("endpoint_url", cfg.endpoint_url);
    cfg.model_name = j.value("model_name", cfg.model_name);
    cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
    cfg.timeout = std::chrono::milliseconds(j.value("timeout_ms", cfg.timeout.count()));
    cfg.max_retries = j.value("max_retries", cfg.max_retries);
    if (j.contains("backoff")) {
      const auto& b = j.at("backoff");
      cfg.backoff_initial =
          std::chrono::milliseconds(b.value("initial_ms", cfg.backoff_initial.count()));
      cfg.backoff_multiplier = b.value("multiplier", cfg.backoff_multiplier);
    }
    cfg.concurrency_limit = j.value("concurrency_limit", cfg.concurrency_limit);
    if (j.contains("replay_path")) {
      std::filesystem::path p = j.at("replay_path").get<std::string>();
      cfg.replay_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, std::string("backend config: ") + e.what());
  }
  cfg.Validate();
  return cfg;
}

nlohmann::ordered_json ToJson(const BackendConfig& cfg) {
  nlohmann::ordered_json j = {{"kind", ToString(cfg.kind)}, {"model_name", cfg.model_name}};
  if (!cfg.endpoint_url.empty()) j["endpoint_url"] = cfg.endpoint_url;
  if (!cfg.api_key_env.empty()) j["api_key_env"] = cfg.api_key_env;
  j["temperature"] = cfg.temperature;
  j["max_tokens"] = cfg.max_tokens;
  j["timeout_ms"] = cfg.timeout.count();
  j["max_retries"] = cfg.max_retries;
  j["backoff"] = {{"initial_ms", cfg.backoff_initial.count()},
                  {"multiplier", cfg.backoff_multiplier}};
  j["concurrency_limit"] = cfg.concurrency_limit;
  if (!cfg.replay_path.empty()) j["replay_path"] = cfg.replay_path.string();
  return j;
}

std::string UtcNow() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

ReplayStore::ReplayStore(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    ++line_no;
    const auto nl = data.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const std::string line = data.substr(pos, terminated ? nl - pos : std::string::npos);
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      if (!terminated) {
        needs_truncate_ = true;
        valid_bytes_ = pos;
        break;
      }
      if (line.find_first_not_of(" \t\r") == std::string::npos) {
        pos = nl + 1;
        continue;
      }
      Fail(ErrorCode::kParse, path_.string() + ":" + std::to_string(line_no) +
                                  ": invalid replay entry");
    }
    try {
      auto key = std::pair{j.at("prompt_hash").get<std::string>(), j.at("model").get<std::string>()};
      auto raw = j.at("raw_response").get<std::string>();
      auto [it, inserted] = entries_.emplace(std::move(key), raw);
      if (!inserted && it->second != raw) {
        Fail(ErrorCode::kConflict, path_.string() + ":" + std::to_string(line_no) +
                                       ": conflicting recording for prompt_hash " +
                                       it->first.first);
      }
    } catch (const nlohmann::json::exception&) {
      Fail(ErrorCode::kParse, path_.string() + ":" + std::to_string(line_no) +
                                  ": replay entry lacks prompt_hash/model/raw_response");
    }
    if (!terminated) {
      needs_newline_ = true;
      break;
    }
    pos = nl + 1;
  }
}

std::optional<std::string> ReplayStore::Lookup(const std::string& prompt_hash,
                                               const std::string& model) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = entries_.find({prompt_hash, model});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplayStore::Record(const Exchange& exchange) {
  if (exchange.status != ExchangeStatus::kOk) {
    Fail(ErrorCode::kInvalidArgument, "only Ok exchanges can be recorded");
  }
  std::lock_guard<std::mutex> lock(mu_);
  const auto key = std::pair{exchange.prompt_hash, exchange.model_name};
  const auto it = entries_.find(key);
  if (it != entries_.end()) {
    if (it->second == exchange.raw_response) return;
    Fail(ErrorCode::kConflict, "conflicting recording for prompt_hash " + exchange.prompt_hash +
                                   " and model '" + exchange.model_name + "'");
  }
  std::error_code ec;
  if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path(), ec);
  if (needs_truncate_) {
    std::filesystem::resize_file(path_, valid_bytes_, ec);
    if (ec) Fail(ErrorCode::kIo, "cannot truncate '" + path_.string() + "': " + ec.message());
    needs_truncate_ = false;
  }
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) Fail(ErrorCode::kIo, "cannot open '" + path_.string() + "' for append");
  if (needs_newline_) {
    out << '\n';
    needs_newline_ = false;
  }
  const nlohmann::ordered_json line = {
      {"prompt_hash", exchange.prompt_hash},
      {"model", exchange.model_name},
      {"raw_response", exchange.raw_response},
      {"recorded_at", exchange.timestamp.empty() ? UtcNow() : exchange.timestamp},
  };
  out << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  out.flush();
  if (!out) Fail(ErrorCode::kIo, "write to '" + path_.string() + "' failed");
  entries_.emplace(key, exchange.raw_response);
}

std::size_t ReplayStore::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

std::unique_ptr<Backend> MakeHttpChatBackend(const BackendConfig& cfg) {
  return std::make_unique<HttpChatBackend>(cfg);
}

std::unique_ptr<Backend> MakeReplayBackend(const BackendConfig& cfg,
                                           std::shared_ptr<ReplayStore> store) {
  return std::make_unique<ReplayBackend>(cfg.model_name, std::move(store));
}

std::unique_ptr<Backend> MakeRuleMockBackend(const BackendConfig&) {
  return std::make_unique<RuleMockBackend>();
}

namespace {

std::unique_ptr<Backend> MakeBackend(const BackendConfig& cfg) {
  cfg.Validate();
  switch (cfg.kind) {
    case BackendKind::kHttpChat: return MakeHttpChatBackend(cfg);
    case BackendKind::kReplay:
      if (!std::filesystem::exists(cfg.replay_path)) {
        Fail(ErrorCode::kNotFound, "replay store '" + cfg.replay_path.string() + "' not found");
      }
      return MakeReplayBackend(cfg, std::make_shared<ReplayStore>(cfg.replay_path));
    case BackendKind::kRuleMock: return MakeRuleMockBackend(cfg);
  }
  Fail(ErrorCode::kInvalidArgument, "unknown backend kind");
}

const BackendConfig& Validated(const BackendConfig& cfg) {
  cfg.Validate();
  return cfg;
}

}  // namespace

Gateway::Gateway(BackendConfig cfg) : Gateway(cfg, MakeBackend(cfg)) {}

Gateway::Gateway(BackendConfig cfg, std::unique_ptr<Backend> backend)
    : cfg_(std::move(cfg)),
      backend_(std::move(backend)),
      slots_(Validated(cfg_).concurrency_limit) {}

Exchange Gateway::Complete(const RenderedPrompt& prompt) {
  struct Slot {
    Gateway& g;
    explicit Slot(Gateway& gw) : g(gw) {
      g.slots_.acquire();
      const int now = ++g.in_flight_;
      int seen = g.max_in_flight_.load();
      while (now > seen && !g.max_in_flight_.compare_exchange_weak(seen, now)) {
      }
    }
    ~Slot() {
      --g.in_flight_;
      g.slots_.release();
    }
  };

  const auto start = std::chrono::steady_clock::now();
  Exchange ex;
  {
    Slot slot(*this);
    ex = backend_->Complete(prompt);
  }
  ex.prompt_hash = prompt.prompt_hash;
  ex.prompt_text = prompt.text;
  ex.model_name = cfg_.model_name;
  ex.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  ex.timestamp = UtcNow();
  if (ex.status == ExchangeStatus::kOk && ex.raw_response.empty()) {
    ex.status = ExchangeStatus::kTransportError;
    ex.diagnostic = "backend returned an empty response";
  }
  if (ex.status != ExchangeStatus::kOk && ex.diagnostic.empty()) {
    ex.diagnostic = std::string(ToString(ex.status));
  }
  return ex;
}

}  // namespace moraleval
