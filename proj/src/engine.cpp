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

#include "moraleval/engine.hpp"

#include <algorithm>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "moraleval/digest.hpp"
#include "moraleval/error.hpp"

namespace moraleval {
namespace {

constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kResponsesFile = "responses.jsonl";
constexpr const char* kManifestFile = "manifest.json";

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Dump(const nlohmann::ordered_json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

struct RecordLines {
  std::vector<std::string> lines;
  std::uintmax_t valid_bytes = 0;
  bool torn = false;
};

// Complete lines of a JSONL file. An unterminated final line that does not
// parse is reported as torn; one that parses counts as complete.
RecordLines ReadLines(const std::filesystem::path& path) {
  RecordLines out;
  if (!std::filesystem::exists(path)) return out;
  const std::string data = ReadFile(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    ++line_no;
    const auto nl = data.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    std::string line = data.substr(pos, terminated ? nl - pos : std::string::npos);
    const bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (!blank) {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        if (!terminated) {
          out.torn = true;
          break;
        }
        Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": invalid record");
      }
      out.lines.push_back(std::move(line));
    }
    if (!terminated) {
      // Complete JSON without its newline: keep it, add the newline later.
      out.valid_bytes = data.size();
      out.torn = true;
      break;
    }
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  return out;
}

void WriteAtomically(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorCode::kIo, "cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) Fail(ErrorCode::kIo, "write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot replace '" + path.string() + "': " + ec.message());
}

bool Matches(JudgmentKind kind, GoldLabel gold) {
  switch (gold) {
    case GoldLabel::kWrong: return kind == JudgmentKind::kWrong;
    case GoldLabel::kNotWrong: return kind == JudgmentKind::kNotWrong;
    case GoldLabel::kReasonable: return kind == JudgmentKind::kReasonable;
    case GoldLabel::kUnreasonable: return kind == JudgmentKind::kUnreasonable;
    case GoldLabel::kFirstMorePleasant: return kind == JudgmentKind::kChooseFirst;
  }
  return false;
}

std::string JobKey(const std::string& case_id, const std::string& method) {
  return case_id + '\x1f' + method;
}

bool ValidRunId(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == ':' || c == '+';
  });
}

}  // namespace

std::string_view ToString(Aligned a) {
  switch (a) {
    case Aligned::kTrue: return "true";
    case Aligned::kFalse: return "false";
    case Aligned::kExcluded: return "excluded";
  }
  return "";
}

Aligned AlignedFromString(std::string_view s) {
  if (s == "true") return Aligned::kTrue;
  if (s == "false") return Aligned::kFalse;
  if (s == "excluded") return Aligned::kExcluded;
  Fail(ErrorCode::kInvalidArgument, "unknown alignment '" + std::string(s) + "'");
}

Aligned AlignmentOf(const Judgment& judgment, GoldLabel gold, ExchangeStatus status) {
  if (status != ExchangeStatus::kOk || judgment.kind == JudgmentKind::kRefusal ||
      judgment.kind == JudgmentKind::kUnparseable) {
    return Aligned::kExcluded;
  }
  return Matches(judgment.kind, gold) ? Aligned::kTrue : Aligned::kFalse;
}

nlohmann::ordered_json ToJson(const EvalRecord& r) {
  nlohmann::ordered_json j = {
      {"case_id", r.case_id},
      {"dataset", r.dataset},
      {"method", r.method},
      {"model", r.model},
      {"prompt_hash", r.prompt_hash},
      {"judgment_domain", ToString(r.judgment_domain)},
      {"judgment", ToJson(r.judgment)},
      {"gold", ToString(r.gold)},
      {"aligned", ToString(r.aligned)},
      {"exchange_status", ToString(r.exchange_status)},
      {"recovery_path", ToString(r.recovery_path)},
  };
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  j["sidecar"] = {{"created_at", r.created_at},
                  {"latency_ms", r.latency_ms},
                  {"attempt_count", r.attempt_count}};
  return j;
}

EvalRecord EvalRecordFromJson(const nlohmann::json& j) {
  EvalRecord r;
  try {
    r.case_id = j.at("case_id").get<std::string>();
    r.dataset = j.value("dataset", "");
    r.method = j.at("method").get<std::string>();
    r.model = j.value("model", "");
    r.prompt_hash = j.at("prompt_hash").get<std::string>();
    r.judgment_domain = JudgmentDomainFromString(j.at("judgment_domain").get<std::string>());
    r.judgment = JudgmentFromJson(j.at("judgment"));
    r.gold = GoldLabelFromString(j.at("gold").get<std::string>());
    r.aligned = AlignedFromString(j.at("aligned").get<std::string>());
    r.exchange_status = ExchangeStatusFromString(j.at("exchange_status").get<std::string>());
    r.recovery_path = RecoveryPathFromString(j.at("recovery_path").get<std::string>());
    r.diagnostic = j.value("diagnostic", "");
    if (j.contains("sidecar")) {
      const auto& s = j.at("sidecar");
      r.created_at = s.value("created_at", "");
      r.latency_ms = s.value("latency_ms", 0.0);
      r.attempt_count = s.value("attempt_count", 0);
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("bad record: ") + e.what());
  }
  return r;
}

std::string CanonicalRecordLine(const std::string& line) {
  auto j = nlohmann::ordered_json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) Fail(ErrorCode::kParse, "invalid record line");
  j.erase("sidecar");
  return Dump(j);
}

std::vector<EvalRecord> ReadRecords(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) Fail(ErrorCode::kNotFound, "'" + path.string() + "' not found");
  std::vector<EvalRecord> out;
  for (const auto& line : ReadLines(path).lines) {
    out.push_back(EvalRecordFromJson(nlohmann::json::parse(line)));
  }
  return out;
}

std::string RecordsDigest(const std::filesystem::path& path) {
  std::string all;
  for (const auto& line : ReadLines(path).lines) {
    all += CanonicalRecordLine(line);
    all += '\n';
  }
  return Sha256Hex(all);
}

void RunSpec::Validate() const {
  const auto bad = [](const std::string& m) { Fail(ErrorCode::kInvalidArgument, m); };
  if (!ValidRunId(run_id)) bad("run_id '" + run_id + "' is empty or has characters outside [A-Za-z0-9._:+-]");
  if (methods.empty()) bad("run spec needs at least one method");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (!seen.insert(m.Id()).second) bad("method '" + m.Id() + "' listed twice");
  }
  if (case_file.empty()) bad("case_file is required");
  if (out_dir.empty()) bad("out_dir is required");
  if (sample && sample->n == 0) bad("sample.n must be positive");
  backend.Validate();
}

RunSpec RunSpecFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) Fail(ErrorCode::kInvalidArgument, "run spec must be a JSON object");
  static const std::set<std::string> kKnown = {"run_id", "methods", "case_file", "sample",
                                               "backend", "out_dir"};
  for (const auto& [key, value] : j.items()) {
    if (!kKnown.count(key)) Fail(ErrorCode::kInvalidArgument, "unknown run spec key '" + key + "'");
  }
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  RunSpec spec;
  try {
    spec.run_id = j.at("run_id").get<std::string>();
    for (const auto& m : j.at("methods")) spec.methods.push_back(Method::FromId(m.get<std::string>()));
    spec.case_file = resolve(j.at("case_file").get<std::string>());
    spec.out_dir = resolve(j.value("out_dir", std::string("runs")));
    if (j.contains("sample") && !j.at("sample").is_null()) {
      const auto& s = j.at("sample");
      spec.sample = SampleSpec{s.at("n").get<std::size_t>(), s.value("seed", std::uint64_t{0})};
    }
    const auto& b = j.at("backend");
    if (b.is_string()) {
      const auto path = resolve(b.get<std::string>());
      spec.backend = BackendConfigFromJson(nlohmann::json::parse(ReadFile(path)), path.parent_path());
    } else {
      spec.backend = BackendConfigFromJson(b, base_dir);
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, std::string("run spec: ") + e.what());
  }
  spec.Validate();
  return spec;
}

RunSpec LoadRunSpec(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(ReadFile(path), nullptr, false);
  if (j.is_discarded()) Fail(ErrorCode::kParse, "'" + path.string() + "' is not valid JSON");
  return RunSpecFromJson(j, path.parent_path());
}

nlohmann::ordered_json ToJson(const RunSpec& spec) {
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const auto& m : spec.methods) methods.push_back(m.Id());
  nlohmann::ordered_json j = {{"run_id", spec.run_id},
                              {"methods", methods},
                              {"case_file", spec.case_file.string()}};
  if (spec.sample) j["sample"] = {{"n", spec.sample->n}, {"seed", spec.sample->seed}};
  j["backend"] = ToJson(spec.backend);
  j["out_dir"] = spec.out_dir.string();
  return j;
}

std::string ConfigDigest(const RunSpec& spec, const std::string& case_file_sha256) {
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (const auto& m : spec.methods) methods.push_back(m.Id());
  nlohmann::ordered_json j = {
      {"methods", methods},
      {"case_file_sha256", case_file_sha256},
      {"sample", spec.sample ? nlohmann::ordered_json{{"n", spec.sample->n}, {"seed", spec.sample->seed}}
                             : nlohmann::ordered_json()},
      {"backend_kind", ToString(spec.backend.kind)},
      {"model_name", spec.backend.model_name},
      {"temperature", spec.backend.temperature},
      {"max_tokens", spec.backend.max_tokens},
      {"template_version", TheoryRegistry::Default().Version()},
  };
  return Sha256Hex(Dump(j));
}

nlohmann::ordered_json ToJson(const RunSummary& s) {
  nlohmann::ordered_json per_method = nlohmann::ordered_json::array();
  for (const auto& m : s.per_method) {
    per_method.push_back({{"method", m.method},
                          {"total", m.total},
                          {"aligned", m.aligned},
                          {"misaligned", m.misaligned},
                          {"excluded", m.excluded}});
  }
  return {{"run_id", s.run_id},
          {"run_dir", s.run_dir.string()},
          {"records", (s.run_dir / kRecordsFile).string()},
          {"manifest", (s.run_dir / kManifestFile).string()},
          {"jobs", s.jobs},
          {"already_done", s.already_done},
          {"new_records", s.new_records},
          {"dropped", s.dropped},
          {"replay_misses", s.replay_misses},
          {"stopped", s.stopped},
          {"per_method", per_method}};
}

RunSummary Run(const RunSpec& spec, const RunOptions& options) {
  spec.Validate();
  Gateway gateway(spec.backend);
  return Run(spec, options, gateway);
}

RunSummary Run(const RunSpec& spec, const RunOptions& options, Gateway& gateway) {
  spec.Validate();
  const std::string case_bytes = ReadFile(spec.case_file);
  const std::string case_sha = Sha256Hex(case_bytes);
  std::vector<TestCase> cases = ReadCasesJsonl(spec.case_file);
  if (spec.sample) cases = Sample(cases, spec.sample->n, spec.sample->seed);

  RunSummary summary;
  summary.run_id = spec.run_id;
  summary.run_dir = spec.out_dir / spec.run_id;
  std::error_code ec;
  std::filesystem::create_directories(summary.run_dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create '" + summary.run_dir.string() + "': " + ec.message());

  const std::string digest = ConfigDigest(spec, case_sha);
  const auto manifest_path = summary.run_dir / kManifestFile;
  if (std::filesystem::exists(manifest_path)) {
    const auto m = nlohmann::json::parse(ReadFile(manifest_path), nullptr, false);
    if (m.is_discarded() || m.value("config_digest", "") != digest) {
      Fail(ErrorCode::kConflict, "run '" + spec.run_id + "' already exists in '" +
                                     spec.out_dir.string() +
                                     "' with a different configuration; pick a new run_id");
    }
  } else {
    nlohmann::ordered_json methods = nlohmann::ordered_json::array();
    for (const auto& m : spec.methods) methods.push_back(m.Id());
    nlohmann::ordered_json manifest = {
        {"run_id", spec.run_id},
        {"config_digest", digest},
        {"template_version", TheoryRegistry::Default().Version()},
        {"inputs", {{"case_file", spec.case_file.string()}, {"case_file_sha256", case_sha}}},
        {"sample", spec.sample ? nlohmann::ordered_json{{"n", spec.sample->n},
                                                        {"seed", spec.sample->seed}}
                               : nlohmann::ordered_json()},
        {"seed", spec.sample ? nlohmann::ordered_json(spec.sample->seed) : nlohmann::ordered_json()},
        {"methods", methods},
        {"backend", ToJson(spec.backend)},
        {"n_cases", cases.size()},
        {"outputs", {{"records", kRecordsFile}, {"responses", kResponsesFile}}},
        {"sidecar", {{"created_at", UtcNow()}}},
    };
    WriteAtomically(manifest_path, manifest.dump(2) + "\n");
  }

  struct Job {
    const TestCase* tc;
    std::string method;
    RenderedPrompt prompt;
  };
  std::vector<Job> jobs;
  std::unordered_map<std::string, std::string> job_hash;
  for (const auto& tc : cases) {
    for (const auto& m : spec.methods) {
      auto prompt = Render(tc, m);
      job_hash[JobKey(tc.id, m.Id())] = prompt.prompt_hash;
      jobs.push_back(Job{&tc, m.Id(), std::move(prompt)});
    }
  }
  summary.jobs = jobs.size();

  // Resume: keep what is on disk, minus whatever the options invalidate.
  const auto records_path = summary.run_dir / kRecordsFile;
  const RecordLines existing = ReadLines(records_path);
  std::unordered_set<std::string> done;
  std::string kept;
  bool rewrite = false;
  for (const auto& line : existing.lines) {
    const auto r = EvalRecordFromJson(nlohmann::json::parse(line));
    const std::string key = JobKey(r.case_id, r.method);
    const auto it = job_hash.find(key);
    bool drop = done.count(key) > 0;
    if (options.strict_hash && it != job_hash.end() && it->second != r.prompt_hash) drop = true;
    if (options.retry_failed && r.exchange_status != ExchangeStatus::kOk) drop = true;
    if (drop) {
      ++summary.dropped;
      rewrite = true;
      continue;
    }
    done.insert(key);
    kept += line;
    kept += '\n';
  }
  if (rewrite || existing.torn) {
    WriteAtomically(records_path, kept);
  }

  std::vector<const Job*> pending;
  for (const auto& job : jobs) {
    if (done.count(JobKey(job.tc->id, job.method))) {
      ++summary.already_done;
    } else {
      pending.push_back(&job);
    }
  }

  ReplayStore responses(summary.run_dir / kResponsesFile);
  std::ofstream out(records_path, std::ios::binary | std::ios::app);
  if (!out) Fail(ErrorCode::kIo, "cannot open '" + records_path.string() + "' for append");

  struct Result {
    std::optional<EvalRecord> record;
    std::optional<Exchange> exchange;
    std::string miss_hash;
  };
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, Result> ready;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> halt{false};
  std::size_t workers_done = 0;

  const auto stop_requested = [&] {
    return halt.load() || (options.stop != nullptr && options.stop->load());
  };

  const auto evaluate = [&](const Job& job) {
    Result res;
    EvalRecord r;
    r.case_id = job.tc->id;
    r.dataset = job.tc->dataset;
    r.method = job.method;
    r.model = spec.backend.model_name;
    r.prompt_hash = job.prompt.prompt_hash;
    r.judgment_domain = job.prompt.judgment_domain;
    r.gold = job.tc->gold;
    try {
      Exchange ex = gateway.Complete(job.prompt);
      r.exchange_status = ex.status;
      r.latency_ms = ex.latency_ms;
      r.attempt_count = ex.attempt_count;
      r.created_at = ex.timestamp;
      if (ex.status == ExchangeStatus::kOk) {
        const auto parsed = Parse(ex.raw_response, job.prompt);
        r.judgment = parsed.judgment;
        r.recovery_path = parsed.recovery_path;
        res.exchange = std::move(ex);
      } else {
        r.judgment = Judgment{JudgmentKind::kUnparseable, std::nullopt, ""};
        r.diagnostic = ex.diagnostic;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNotFound && spec.backend.kind == BackendKind::kReplay) {
        res.miss_hash = job.prompt.prompt_hash;
        return res;
      }
      r.exchange_status = ExchangeStatus::kTransportError;
      r.diagnostic = e.what();
      r.created_at = UtcNow();
    } catch (const std::exception& e) {
      r.exchange_status = ExchangeStatus::kTransportError;
      r.diagnostic = e.what();
      r.created_at = UtcNow();
    }
    r.aligned = AlignmentOf(r.judgment, r.gold, r.exchange_status);
    res.record = std::move(r);
    return res;
  };

  const std::size_t n_workers = std::min<std::size_t>(
      static_cast<std::size_t>(spec.backend.concurrency_limit), std::max<std::size_t>(pending.size(), 1));
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < n_workers; ++w) {
    workers.emplace_back([&] {
      while (!stop_requested()) {
        const std::size_t i = next++;
        if (i >= pending.size()) break;
        Result res = evaluate(*pending[i]);
        std::lock_guard<std::mutex> lock(mu);
        ready.emplace(i, std::move(res));
        cv.notify_all();
      }
      std::lock_guard<std::mutex> lock(mu);
      ++workers_done;
      cv.notify_all();
    });
  }

  std::exception_ptr writer_error;
  std::size_t write_idx = 0;
  try {
    while (write_idx < pending.size()) {
      Result res;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return ready.count(write_idx) > 0 || workers_done == n_workers; });
        auto it = ready.find(write_idx);
        if (it == ready.end()) break;
        res = std::move(it->second);
        ready.erase(it);
      }
      ++write_idx;
      if (!res.miss_hash.empty()) {
        summary.replay_misses.push_back(res.miss_hash);
        continue;
      }
      if (res.exchange) {
        try {
          responses.Record(*res.exchange);
        } catch (const Error& e) {
          // Identical prompts (same hash) answered differently by a sampling
          // backend: the first recording stands.
          if (e.code() != ErrorCode::kConflict) throw;
        }
      }
      out << Dump(ToJson(*res.record)) << '\n';
      out.flush();
      if (!out) Fail(ErrorCode::kIo, "write to '" + records_path.string() + "' failed");
      ++summary.new_records;
      if (options.stop_after != 0 && summary.new_records >= options.stop_after) {
        halt = true;
        break;
      }
    }
  } catch (...) {
    writer_error = std::current_exception();
  }
  halt = true;
  for (auto& w : workers) w.join();
  if (writer_error) std::rethrow_exception(writer_error);

  summary.stopped = write_idx < pending.size();

  std::map<std::string, MethodSummary> by_method;
  for (const auto& m : spec.methods) by_method[m.Id()].method = m.Id();
  for (const auto& r : ReadRecords(records_path)) {
    auto it = by_method.find(r.method);
    if (it == by_method.end()) continue;
    auto& s = it->second;
    ++s.total;
    if (r.aligned == Aligned::kTrue) ++s.aligned;
    if (r.aligned == Aligned::kFalse) ++s.misaligned;
    if (r.aligned == Aligned::kExcluded) ++s.excluded;
  }
  for (const auto& m : spec.methods) summary.per_method.push_back(by_method[m.Id()]);
  return summary;
}

std::vector<RunSpec> CrossMatrix(const std::vector<Theory>& theories,
                                 const std::vector<DatasetRef>& datasets, const RunSpec& base) {
  std::vector<RunSpec> out;
  std::set<std::string> ids;
  for (const auto& theory : theories) {
    for (const auto& ds : datasets) {
      RunSpec spec = base;
      spec.run_id = base.run_id + "-" + theory.Id() + "-" + ds.name;
      spec.methods = {Method{theory, {}}};
      spec.case_file = ds.case_file;
      if (!ids.insert(spec.run_id).second) {
        Fail(ErrorCode::kInvalidArgument, "cross matrix produced duplicate id '" + spec.run_id + "'");
      }
      out.push_back(std::move(spec));
    }
  }
  return out;
}

const std::vector<Preset>& Presets() {
  static const std::vector<Preset> kPresets = {
      {"ethics-suite",
       {"ethics-justice", "ethics-deontology", "ethics-utilitarianism"},
       {"vanilla", "justice", "deontology", "utilitarianism", "tdm-gen"},
       200},
      {"commonsense-suite",
       {"e-cm-normal", "e-cm-hard", "social-chem-101"},
       {"vanilla", "tdm-gen", "tdm-en", "justice", "deontology", "utilitarianism"},
       1000},
  };
  return kPresets;
}

std::string_view ToString(TriageSample t) { return t == TriageSample::kFresh ? "fresh" : "reuse"; }

TriageSample TriageSampleFromString(std::string_view s) {
  if (s == "fresh") return TriageSample::kFresh;
  if (s == "reuse") return TriageSample::kReuse;
  Fail(ErrorCode::kInvalidArgument, "triage sample must be 'fresh' or 'reuse', got '" +
                                        std::string(s) + "'");
}

std::vector<RunSpec> ExpandPreset(std::string_view name, const RunSpec& base,
                                  const std::filesystem::path& cases_dir, TriageSample triage,
                                  std::optional<std::size_t> sample_n) {
  const auto& presets = Presets();
  const auto it = std::find_if(presets.begin(), presets.end(),
                               [&](const Preset& p) { return p.name == name; });
  if (it == presets.end()) {
    Fail(ErrorCode::kInvalidArgument, "unknown preset '" + std::string(name) + "'");
  }
  std::vector<RunSpec> out;
  for (const auto& ds : it->datasets) {
    RunSpec spec = base;
    spec.run_id = base.run_id + "-" + ds;
    spec.methods.clear();
    for (const auto& m : it->methods) spec.methods.push_back(Method::FromId(m));
    spec.case_file = cases_dir / (ds + ".jsonl");
    const std::uint64_t seed = base.sample ? base.sample->seed : 0;
    const std::size_t n = sample_n.value_or(it->sample_n);
    if (n > 0) spec.sample = SampleSpec{n, seed};
    else spec.sample.reset();
    out.push_back(spec);
    if (triage == TriageSample::kFresh) {
      spec.run_id += "-triage";
      spec.sample = SampleSpec{kTriageSampleSize, seed + 1};
      out.push_back(std::move(spec));
    }
  }
  return out;
}

}  // namespace moraleval
