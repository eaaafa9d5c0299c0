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

// Run matrix execution.
//
// A run lives in <out_dir>/<run_id>/:
//   manifest.json    inputs, seeds, template version, config digest
//   records.jsonl    one EvalRecord per (case_id, method), job order
//   responses.jsonl  raw responses of Ok exchanges (a replay store)
//
// Workers call the gateway concurrently; the calling thread is the only
// writer and emits records in job order, so a run that is stopped and
// resumed produces the same bytes as one that was not. Wall-clock values go
// under "sidecar", which CanonicalRecordLine drops.

#ifndef MORALEVAL_ENGINE_HPP_
#define MORALEVAL_ENGINE_HPP_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moraleval/dataset.hpp"
#include "moraleval/gateway.hpp"
#include "moraleval/parser.hpp"
#include "moraleval/prompt.hpp"

namespace moraleval {

enum class Aligned { kTrue, kFalse, kExcluded };

std::string_view ToString(Aligned a);
Aligned AlignedFromString(std::string_view s);

// Excluded when the exchange failed or the judgment is a refusal or
// unparseable; otherwise true iff the judgment matches the gold label.
Aligned AlignmentOf(const Judgment& judgment, GoldLabel gold, ExchangeStatus status);

struct EvalRecord {
  std::string case_id;
  std::string dataset;
  std::string method;  // Method::Id()
  std::string model;
  std::string prompt_hash;
  JudgmentDomain judgment_domain = JudgmentDomain::kBinaryMorality01;
  Judgment judgment;
  GoldLabel gold = GoldLabel::kWrong;
  Aligned aligned = Aligned::kExcluded;
  ExchangeStatus exchange_status = ExchangeStatus::kOk;
  RecoveryPath recovery_path = RecoveryPath::kNone;
  std::string diagnostic;
  // Sidecar: ignored by determinism checks.
  std::string created_at;
  double latency_ms = 0.0;
  int attempt_count = 0;
};

nlohmann::ordered_json ToJson(const EvalRecord& r);
EvalRecord EvalRecordFromJson(const nlohmann::json& j);

// The record line with the sidecar removed.
std::string CanonicalRecordLine(const std::string& line);

// Reads records.jsonl. A torn final line is skipped; any other bad line
// throws kParse.
std::vector<EvalRecord> ReadRecords(const std::filesystem::path& path);

// SHA-256 over the canonical lines of a records file, in file order.
std::string RecordsDigest(const std::filesystem::path& path);

struct SampleSpec {
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

struct RunSpec {
  std::string run_id;
  std::vector<Method> methods;
  std::filesystem::path case_file;
  std::optional<SampleSpec> sample;
  BackendConfig backend;
  std::filesystem::path out_dir;

  void Validate() const;
};

// Relative paths resolve against base_dir. "backend" may be an inline object
// or a path to a backend config file.
RunSpec RunSpecFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunSpec LoadRunSpec(const std::filesystem::path& path);
nlohmann::ordered_json ToJson(const RunSpec& spec);

struct RunOptions {
  // Drop persisted records whose prompt hash no longer matches the render.
  bool strict_hash = false;
  // Drop persisted records whose exchange failed, so they are retried.
  bool retry_failed = false;
  // Stop cleanly after this many new records (0 = no limit).
  std::size_t stop_after = 0;
  // Polled between jobs; set from a signal handler to stop cleanly.
  const std::atomic<bool>* stop = nullptr;
};

struct MethodSummary {
  std::string method;
  std::size_t total = 0;
  std::size_t aligned = 0;
  std::size_t misaligned = 0;
  std::size_t excluded = 0;
};

struct RunSummary {
  std::string run_id;
  std::filesystem::path run_dir;
  std::size_t jobs = 0;             // (case, method) pairs in the spec
  std::size_t already_done = 0;     // skipped on resume
  std::size_t new_records = 0;
  std::size_t dropped = 0;          // removed by strict_hash / retry_failed
  std::vector<std::string> replay_misses;  // prompt hashes, not persisted
  bool stopped = false;
  std::vector<MethodSummary> per_method;  // computed from the persisted file
};

nlohmann::ordered_json ToJson(const RunSummary& s);

// Fatal errors: unloadable case file (kIo/kParse), unwritable out_dir
// (kIo), run_id reused with a different configuration (kConflict).
RunSummary Run(const RunSpec& spec, const RunOptions& options = {});
// Same, with a caller-supplied gateway (tests, custom backends).
RunSummary Run(const RunSpec& spec, const RunOptions& options, Gateway& gateway);

// Digest over everything that determines a run's records.
std::string ConfigDigest(const RunSpec& spec, const std::string& case_file_sha256);

struct DatasetRef {
  std::string name;
  std::filesystem::path case_file;
};

// One spec per (theory, dataset), id "<base>-<theory>-<dataset>", each with
// the single method of that theory.
std::vector<RunSpec> CrossMatrix(const std::vector<Theory>& theories,
                                 const std::vector<DatasetRef>& datasets, const RunSpec& base);

struct Preset {
  std::string name;
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  std::size_t sample_n = 0;
};

const std::vector<Preset>& Presets();

// Where misaligned cases for error analysis come from. kReuse triages the
// headline runs themselves; kFresh adds one run per dataset, id
// "<base>-<dataset>-triage", over a separate sample of kTriageSampleSize
// cases drawn with seed + 1.
enum class TriageSample { kReuse, kFresh };

inline constexpr std::size_t kTriageSampleSize = 200;

std::string_view ToString(TriageSample t);
TriageSample TriageSampleFromString(std::string_view s);

// One spec per dataset of the preset, id "<base>-<dataset>", case file
// "<cases_dir>/<dataset>.jsonl", and the seed from base (0 if unset). The
// sample size is the preset's unless sample_n is given; 0 keeps every case.
std::vector<RunSpec> ExpandPreset(std::string_view name, const RunSpec& base,
                                  const std::filesystem::path& cases_dir,
                                  TriageSample triage = TriageSample::kReuse,
                                  std::optional<std::size_t> sample_n = std::nullopt);

}  // namespace moraleval

#endif  // MORALEVAL_ENGINE_HPP_
