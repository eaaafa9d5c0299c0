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

// Review queue for misaligned records.
//
// Each run directory gets its own annotations.jsonl, append-only; the last
// line for a queue key wins and earlier lines form the history. Queue keys
// are the case id, or "<case_id>::<method>" when the run has several
// methods.

#ifndef MORALEVAL_TRIAGE_HPP_
#define MORALEVAL_TRIAGE_HPP_

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moraleval/engine.hpp"

namespace moraleval {

enum class ErrorCategory {
  kDataInappropriateAnnotation,  // data-a
  kDataInsufficientContext,      // data-b
  kLlmWrongReasoning,            // llm-c
  kLlmOverestimatedRisk,         // llm-d
};

inline constexpr std::array<ErrorCategory, 4> kErrorCategories = {
    ErrorCategory::kDataInappropriateAnnotation, ErrorCategory::kDataInsufficientContext,
    ErrorCategory::kLlmWrongReasoning, ErrorCategory::kLlmOverestimatedRisk};

std::string_view ToString(ErrorCategory c);
// Throws kInvalidArgument on anything but the four wire names.
ErrorCategory ErrorCategoryFromString(std::string_view s);

struct Annotation {
  std::string key;
  std::string case_id;
  std::string method;
  ErrorCategory category = ErrorCategory::kDataInappropriateAnnotation;
  std::string note;
  std::string annotator;
  std::string at;  // UTC, ISO 8601

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

nlohmann::ordered_json ToJson(const Annotation& a);
Annotation AnnotationFromJson(const nlohmann::json& j);

struct TriageCase {
  std::string key;
  std::string case_id;
  std::string method;
  std::string dataset;
  TaskShape shape = TaskShape::kSingleScenario;
  std::string scenario;
  std::optional<std::string> scenario_b;
  std::optional<std::string> statement;
  GoldLabel gold = GoldLabel::kWrong;
  Judgment judgment;
  FieldList analysis_fields;  // verbatim model reasoning, prompt order
  std::optional<Annotation> annotation;  // == history.back() when set
  std::vector<Annotation> history;
};

nlohmann::ordered_json ToJson(const TriageCase& c);

std::string QueueKey(const std::string& case_id, const std::string& method, bool multi_method);

// One case per aligned=false record, ordered by (case_id, method). Analysis
// fields come from re-parsing the raw response in `responses` when present.
// A record whose case id is missing from `cases` throws kNotFound listing
// every such id.
std::vector<TriageCase> ExportMisaligned(const std::vector<EvalRecord>& records,
                                         const std::vector<TestCase>& cases,
                                         const ReplayStore* responses = nullptr);

// Append-only annotation log. Each append is flushed to disk before it
// returns. A torn final line is dropped on load.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path path);

  void Append(const Annotation& a);
  // Every annotation for key, oldest first.
  std::vector<Annotation> History(const std::string& key) const;
  std::vector<Annotation> Latest() const;  // one per key, key order
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<Annotation>> by_key_;
  std::size_t count_ = 0;
};

struct Breakdown {
  std::string run_label;
  std::array<std::size_t, 4> counts{};  // kErrorCategories order
  std::array<int, 4> percentages{};     // sum to 100 unless all counts are 0
  std::size_t total() const;
};

// Largest-remainder rounding; remainders that tie go to the earlier
// category.
Breakdown MakeBreakdown(const std::array<std::size_t, 4>& counts, std::string run_label);
Breakdown BreakdownOf(const std::vector<Annotation>& latest, std::string run_label);

nlohmann::ordered_json ToJson(const Breakdown& b);

// A run directory opened for review. Thread-safe.
class TriageRun {
 public:
  // Reads manifest.json, records.jsonl, the case file named in the manifest
  // and responses.jsonl.
  explicit TriageRun(std::filesystem::path run_dir);

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }

  // done: nullopt = all, true = annotated, false = pending.
  std::vector<TriageCase> Queue(std::optional<bool> done = std::nullopt) const;
  bool Contains(const std::string& key) const;
  // Resolves a bare case id to its key when exactly one method matches.
  std::optional<std::string> Resolve(const std::string& key_or_case_id) const;

  // Throws kNotFound for an unknown key; persists before returning.
  TriageCase Annotate(const std::string& key, ErrorCategory category, const std::string& note,
                      const std::string& annotator);

  Breakdown GetBreakdown() const;

 private:
  TriageCase WithAnnotations(TriageCase c) const;

  std::filesystem::path dir_;
  std::string id_;
  std::vector<TriageCase> cases_;
  std::map<std::string, std::size_t> index_;
  std::unique_ptr<AnnotationStore> store_;
};

// HTTP API over every run directory under runs_root:
//   GET  /api/runs
//   GET  /api/runs/{id}/queue?status=pending|done
//   POST /api/cases/{key}/annotation  {category, note, annotator, run?}
//   GET  /api/runs/{id}/breakdown
// Static files under static_dir, when given, are served at /.
class TriageServer {
 public:
  TriageServer(std::filesystem::path runs_root, std::optional<std::filesystem::path> static_dir = {});
  ~TriageServer();
  TriageServer(const TriageServer&) = delete;
  TriageServer& operator=(const TriageServer&) = delete;

  // port 0 picks a free port. Returns the bound port.
  int Bind(const std::string& host, int port);
  // Blocks until Stop().
  void Serve();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace moraleval

#endif  // MORALEVAL_TRIAGE_HPP_
