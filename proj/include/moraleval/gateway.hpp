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

// Judgment backends behind one blocking, thread-safe call.
//
//   HttpChat  chat-completions endpoint, retries with jittered backoff
//   Replay    JSONL store keyed by (prompt_hash, model); a miss never goes live
//   RuleMock  pure function of the prompt bytes, see kRuleMockRules

#ifndef MORALEVAL_GATEWAY_HPP_
#define MORALEVAL_GATEWAY_HPP_

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moraleval/prompt.hpp"

namespace moraleval {

enum class BackendKind { kHttpChat, kReplay, kRuleMock };

struct BackendConfig {
  BackendKind kind = BackendKind::kRuleMock;
  std::string endpoint_url;
  std::string model_name = "rule-mock";
  // Name of the environment variable holding the credential, never the
  // credential itself. Empty means no Authorization header.
  std::string api_key_env;
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_initial{500};
  double backoff_multiplier = 2.0;
  int concurrency_limit = 4;
  std::filesystem::path replay_path;

  // Throws kInvalidArgument.
  void Validate() const;
};

std::string_view ToString(BackendKind kind);
BackendKind BackendKindFromString(std::string_view s);

// Relative replay_path resolves against base_dir. Rejects unknown keys and any
// key that looks like an inline credential.
BackendConfig BackendConfigFromJson(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
nlohmann::ordered_json ToJson(const BackendConfig& cfg);

enum class ExchangeStatus { kOk, kBlocked, kTransportError, kTimeout };

std::string_view ToString(ExchangeStatus status);
ExchangeStatus ExchangeStatusFromString(std::string_view s);

struct TokenUsage {
  std::int64_t input = 0;
  std::int64_t output = 0;
};

struct Exchange {
  std::string prompt_hash;
  std::string prompt_text;
  std::string model_name;
  std::string raw_response;
  ExchangeStatus status = ExchangeStatus::kOk;
  std::string diagnostic;  // set iff status != kOk
  double latency_ms = 0.0;
  int attempt_count = 0;
  std::optional<TokenUsage> token_usage;
  std::string timestamp;  // UTC, ISO 8601
};

// Current UTC time as "YYYY-MM-DDTHH:MM:SS.mmmZ".
std::string UtcNow();

// Append-only JSONL recording store. Lines are
// {prompt_hash, model, raw_response, recorded_at}. Safe for concurrent use.
class ReplayStore {
 public:
  // Loads the file if it exists. A torn final line (no trailing newline, not
  // valid JSON) is ignored and overwritten by the next append.
  explicit ReplayStore(std::filesystem::path path);

  std::optional<std::string> Lookup(const std::string& prompt_hash,
                                    const std::string& model) const;

  // Idempotent upsert. Same key with different bytes throws kConflict
  // ("conflicting recording"). Requires status kOk.
  void Record(const Exchange& exchange);

  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, std::string> entries_;
  bool needs_truncate_ = false;
  bool needs_newline_ = false;
  std::uintmax_t valid_bytes_ = 0;
};

// One rule of the mock: if any lowercased Scenario quote contains a trigger,
// the mock answers with `judgment` (or a special form, see `effect`).
struct RuleMockRule {
  std::vector<std::string> triggers;
  std::string effect;    // "judgment", "garbage" or "blocked"
  std::string judgment;  // for "judgment"
};

// First matching rule wins; no match answers "0".
extern const std::vector<RuleMockRule> kRuleMockRules;

class Backend {
 public:
  virtual ~Backend() = default;
  // Fills raw_response, status, diagnostic, attempt_count and token_usage.
  virtual Exchange Complete(const RenderedPrompt& prompt) = 0;
};

std::unique_ptr<Backend> MakeHttpChatBackend(const BackendConfig& cfg);
std::unique_ptr<Backend> MakeReplayBackend(const BackendConfig& cfg,
                                           std::shared_ptr<ReplayStore> store);
std::unique_ptr<Backend> MakeRuleMockBackend(const BackendConfig& cfg);

// The raw text the mock answers for a prompt, plus whether it is blocked.
std::pair<std::string, bool> RuleMockRespond(const std::string& prompt_text);

class Gateway {
 public:
  // Builds the backend named by cfg.kind. For Replay the store is opened
  // from cfg.replay_path.
  explicit Gateway(BackendConfig cfg);
  Gateway(BackendConfig cfg, std::unique_ptr<Backend> backend);

  // Blocking; safe from many threads. At most concurrency_limit calls are
  // inside the backend at once. A replay miss throws kNotFound naming the
  // hash.
  Exchange Complete(const RenderedPrompt& prompt);

  const BackendConfig& config() const { return cfg_; }
  int max_in_flight() const { return max_in_flight_.load(); }

 private:
  BackendConfig cfg_;
  std::unique_ptr<Backend> backend_;
  std::counting_semaphore<> slots_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

}  // namespace moraleval

#endif  // MORALEVAL_GATEWAY_HPP_
