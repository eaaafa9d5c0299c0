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

#include "moraleval/moraleval.h"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "moraleval/engine.hpp"
#include "moraleval/error.hpp"
#include "moraleval/metrics.hpp"
#include "moraleval/triage.hpp"

struct me_context {
  std::string last_error;
  std::atomic<bool> stop{false};
};

struct me_triage_server {
  moraleval::TriageServer server;
  me_triage_server(std::filesystem::path root, std::optional<std::filesystem::path> static_dir)
      : server(std::move(root), std::move(static_dir)) {}
};

namespace {

using moraleval::ErrorCode;
using moraleval::Fail;
using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::atomic<bool>::is_always_lock_free);

me_status StatusOf(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return ME_INVALID_ARGUMENT;
    case ErrorCode::kNotFound: return ME_NOT_FOUND;
    case ErrorCode::kIo: return ME_IO;
    case ErrorCode::kParse: return ME_PARSE;
    case ErrorCode::kConflict: return ME_CONFLICT;
    case ErrorCode::kUnsupported: return ME_UNSUPPORTED;
    case ErrorCode::kRuntime: return ME_RUNTIME;
  }
  return ME_RUNTIME;
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

// Runs body, converting exceptions into a status and ctx->last_error.
template <typename F>
me_status Guard(me_context* ctx, char** out, F&& body) {
  if (out) *out = nullptr;
  if (!ctx) return ME_INVALID_ARGUMENT;
  ctx->last_error.clear();
  try {
    std::string text = body();
    if (out) *out = Dup(text);
    return ME_OK;
  } catch (const moraleval::Error& e) {
    ctx->last_error = e.what();
    return StatusOf(e.code());
  } catch (const json::exception& e) {
    ctx->last_error = e.what();
    return ME_PARSE;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    return ME_RUNTIME;
  }
}

const char* Need(const char* s, const char* name) {
  if (!s) Fail(ErrorCode::kInvalidArgument, std::string(name) + " is required");
  return s;
}

json ParseJson(const char* text, const char* name) {
  const auto j = json::parse(Need(text, name), nullptr, false);
  if (j.is_discarded()) Fail(ErrorCode::kParse, std::string(name) + " is not valid JSON");
  return j;
}

std::vector<std::filesystem::path> RunDirs(const char* run_dirs_json) {
  const auto j = ParseJson(run_dirs_json, "run_dirs_json");
  if (!j.is_array() || j.empty()) {
    Fail(ErrorCode::kInvalidArgument, "run_dirs_json must be a non-empty array of paths");
  }
  std::vector<std::filesystem::path> out;
  for (const auto& p : j) out.emplace_back(p.get<std::string>());
  return out;
}

std::vector<moraleval::EvalRecord> RecordsOf(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "records.jsonl";
  if (!std::filesystem::exists(path)) {
    Fail(ErrorCode::kNotFound, "no records at '" + path.string() + "'");
  }
  return moraleval::ReadRecords(path);
}

ordered_json Opt(std::optional<double> v) { return v ? ordered_json(*v) : ordered_json(); }

ordered_json SummaryJson(const moraleval::MetricsSummary& s) {
  return {{"domain", moraleval::ToString(s.domain)},
          {"precision", Opt(s.precision)},
          {"recall", Opt(s.recall)},
          {"accuracy", Opt(s.accuracy)},
          {"rendered",
           {{"precision", moraleval::RenderPercent(s.precision)},
            {"recall", moraleval::RenderPercent(s.recall)},
            {"accuracy", moraleval::RenderPercent(s.accuracy)}}},
          {"counts", {{"tp", s.counts.tp}, {"fp", s.counts.fp}, {"fn", s.counts.fn}, {"tn", s.counts.tn}}},
          {"n_total", s.n_total},
          {"n_included", s.n_included},
          {"n_refusal", s.n_refusal},
          {"n_unparseable", s.n_unparseable},
          {"n_blocked", s.n_blocked},
          {"refusal_rate", Opt(s.refusal_rate)}};
}

using GroupKey = std::pair<std::string, std::string>;  // (method, dataset)

std::map<GroupKey, std::vector<moraleval::EvalRecord>> Group(
    const std::vector<moraleval::EvalRecord>& records) {
  std::map<GroupKey, std::vector<moraleval::EvalRecord>> groups;
  for (const auto& r : records) groups[{r.method, r.dataset}].push_back(r);
  return groups;
}

}  // namespace

extern "C" {

const char* me_version(void) { return "0.1.0"; }

const char* me_status_name(me_status status) {
  switch (status) {
    case ME_OK: return "ok";
    case ME_INVALID_ARGUMENT: return "invalid-argument";
    case ME_NOT_FOUND: return "not-found";
    case ME_IO: return "io";
    case ME_PARSE: return "parse";
    case ME_CONFLICT: return "conflict";
    case ME_UNSUPPORTED: return "unsupported";
    case ME_RUNTIME: return "runtime";
  }
  return "unknown";
}

me_context* me_context_new(void) { return new (std::nothrow) me_context(); }

void me_context_free(me_context* ctx) { delete ctx; }

const char* me_last_error(const me_context* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

void me_string_free(char* s) { std::free(s); }

void me_request_stop(me_context* ctx) {
  if (ctx) ctx->stop.store(true);
}

void me_clear_stop(me_context* ctx) {
  if (ctx) ctx->stop.store(false);
}

me_status me_export_templates(me_context* ctx, char** out_json) {
  return Guard(ctx, out_json,
               [] { return moraleval::TheoryRegistry::Default().ExportJson().dump(2); });
}

me_status me_prepare_data(me_context* ctx, const char* spec_path, const char* out_path, size_t n,
                          uint64_t seed, char** out_json) {
  return Guard(ctx, out_json, [&] {
    const auto spec = moraleval::LoadDatasetSpec(Need(spec_path, "spec_path"));
    auto result = moraleval::Load(spec);
    if (n > 0) result.cases = moraleval::Sample(result.cases, n, seed);
    moraleval::WriteCasesJsonl(Need(out_path, "out_path"), result.cases);
    ordered_json skipped = ordered_json::array();
    for (const auto& s : result.skipped) {
      skipped.push_back({{"row", s.row_index},
                         {"kind", s.kind == moraleval::SkipKind::kMalformed ? "malformed" : "filtered"},
                         {"reason", s.reason}});
    }
    ordered_json j = {{"out", out_path}, {"cases", result.cases.size()}, {"skipped", skipped}};
    j["seed"] = n > 0 ? ordered_json(seed) : ordered_json();
    return j.dump(2);
  });
}

me_status me_find_case(me_context* ctx, const char* case_file, const char* case_id,
                       char** out_case_json) {
  return Guard(ctx, out_case_json, [&] {
    const std::string id = Need(case_id, "case_id");
    for (const auto& tc : moraleval::ReadCasesJsonl(Need(case_file, "case_file"))) {
      if (tc.id == id) return moraleval::ToJson(tc).dump();
    }
    Fail(ErrorCode::kNotFound, "case '" + id + "' is not in '" + case_file + "'");
  });
}

me_status me_render(me_context* ctx, const char* case_json, const char* method_id,
                    char** out_prompt_json) {
  return Guard(ctx, out_prompt_json, [&] {
    const auto tc = moraleval::TestCaseFromJson(ParseJson(case_json, "case_json"));
    const auto method = moraleval::Method::FromId(Need(method_id, "method_id"));
    return moraleval::ToJson(moraleval::Render(tc, method)).dump();
  });
}

me_status me_render_variants(me_context* ctx, const char* case_json, const char* theory_id,
                             char** out_json) {
  return Guard(ctx, out_json, [&] {
    const auto tc = moraleval::TestCaseFromJson(ParseJson(case_json, "case_json"));
    const auto theory = moraleval::Theory::FromId(Need(theory_id, "theory_id"));
    ordered_json out = ordered_json::array();
    for (const auto& p : moraleval::RenderVariantSuite(tc, theory)) out.push_back(moraleval::ToJson(p));
    return out.dump();
  });
}

me_status me_parse(me_context* ctx, const char* raw, const char* prompt_json, char** out_json) {
  return Guard(ctx, out_json, [&] {
    const auto prompt = moraleval::RenderedPromptFromJson(ParseJson(prompt_json, "prompt_json"));
    const auto parsed = moraleval::Parse(Need(raw, "raw"), prompt);
    ordered_json j = {{"parsed", moraleval::ToJson(parsed)},
                      {"canonical", moraleval::ToCanonicalJson(parsed, prompt)}};
    return j.dump();
  });
}

me_status me_run(me_context* ctx, const char* spec_json, const char* base_dir,
                 const char* options_json, char** out_summary_json) {
  return Guard(ctx, out_summary_json, [&] {
    const auto spec = moraleval::RunSpecFromJson(ParseJson(spec_json, "spec_json"),
                                                 base_dir ? base_dir : "");
    moraleval::RunOptions options;
    if (options_json) {
      const auto o = ParseJson(options_json, "options_json");
      options.strict_hash = o.value("strict_hash", false);
      options.retry_failed = o.value("retry_failed", false);
      options.stop_after = o.value("stop_after", std::size_t{0});
    }
    options.stop = &ctx->stop;
    return moraleval::ToJson(moraleval::Run(spec, options)).dump(2);
  });
}

me_status me_load_run_spec(me_context* ctx, const char* path, char** out_spec_json) {
  return Guard(ctx, out_spec_json, [&] {
    return moraleval::ToJson(moraleval::LoadRunSpec(Need(path, "path"))).dump();
  });
}

me_status me_expand_preset(me_context* ctx, const char* name, const char* base_spec_json,
                           const char* cases_dir, const char* triage_sample, char** out_json) {
  return Guard(ctx, out_json, [&] {
    const auto base = ParseJson(base_spec_json, "base_spec_json");
    moraleval::RunSpec spec;
    spec.run_id = base.at("run_id").get<std::string>();
    spec.out_dir = base.value("out_dir", std::string("runs"));
    std::optional<std::size_t> sample_n;
    if (base.contains("sample") && !base["sample"].is_null()) {
      const auto& s = base["sample"];
      spec.sample = moraleval::SampleSpec{1, s.value("seed", std::uint64_t{0})};
      if (s.contains("n")) sample_n = s.at("n").get<std::size_t>();
    }
    if (base.contains("backend")) {
      spec.backend = moraleval::BackendConfigFromJson(base.at("backend"));
    }
    const auto triage = moraleval::TriageSampleFromString(triage_sample ? triage_sample : "reuse");
    ordered_json out = ordered_json::array();
    for (const auto& s : moraleval::ExpandPreset(Need(name, "name"), spec,
                                                 Need(cases_dir, "cases_dir"), triage, sample_n)) {
      out.push_back(moraleval::ToJson(s));
    }
    return out.dump();
  });
}

me_status me_report(me_context* ctx, const char* run_dirs_json, const char* options_json,
                    char** out_text) {
  return Guard(ctx, out_text, [&] {
    std::vector<moraleval::EvalRecord> records;
    for (const auto& dir : RunDirs(run_dirs_json)) {
      auto r = RecordsOf(dir);
      records.insert(records.end(), r.begin(), r.end());
    }
    moraleval::ReportOptions report;
    std::string format = "md";
    if (options_json) {
      const auto o = ParseJson(options_json, "options_json");
      format = o.value("format", format);
      report.metrics.count_excluded_as_misaligned = o.value("count_excluded_as_misaligned", false);
      if (o.contains("cited") && o["cited"].is_string()) {
        report.cited = moraleval::LoadCitedRows(o["cited"].get<std::string>());
      }
    }
    if (format == "md") return moraleval::RenderMarkdownReport(records, report);
    if (format == "csv") return moraleval::RenderCsvReport(records, report);
    if (format == "json") {
      ordered_json out = ordered_json::array();
      for (const auto& [key, group] : Group(records)) {
        auto j = SummaryJson(moraleval::Compute(group, report.metrics));
        out.push_back({{"method", key.first}, {"dataset", key.second}, {"summary", j}});
      }
      return out.dump(2);
    }
    Fail(ErrorCode::kInvalidArgument, "format must be md, csv or json, got '" + format + "'");
  });
}

me_status me_variation(me_context* ctx, const char* run_dirs_json, char** out_json) {
  return Guard(ctx, out_json, [&] {
    const auto dirs = RunDirs(run_dirs_json);
    std::map<GroupKey, std::vector<moraleval::MetricsSummary>> per_key;
    for (const auto& dir : dirs) {
      for (const auto& [key, group] : Group(RecordsOf(dir))) {
        per_key[key].push_back(moraleval::Compute(group));
      }
    }
    ordered_json out = ordered_json::array();
    for (const auto& [key, summaries] : per_key) {
      if (summaries.size() != dirs.size()) {
        Fail(ErrorCode::kInvalidArgument, "method '" + key.first + "' on '" + key.second +
                                              "' is missing from some runs");
      }
      const auto v = moraleval::Variation(summaries);
      const auto cell = [](const std::optional<moraleval::MeanStd>& ms) -> ordered_json {
        if (!ms) return nullptr;
        return {{"mean", ms->mean}, {"std", ms->std}, {"rendered", moraleval::RenderMeanStd(*ms)}};
      };
      out.push_back({{"method", key.first},
                     {"dataset", key.second},
                     {"runs", summaries.size()},
                     {"precision", cell(v.precision)},
                     {"recall", cell(v.recall)},
                     {"accuracy", cell(v.accuracy)}});
    }
    return out.dump(2);
  });
}

me_status me_records_digest(me_context* ctx, const char* records_path, char** out_hex) {
  return Guard(ctx, out_hex,
               [&] { return moraleval::RecordsDigest(Need(records_path, "records_path")); });
}

me_status me_export_misaligned(me_context* ctx, const char* run_dir, const char* out_path,
                               char** out_json) {
  return Guard(ctx, out_json, [&] {
    const moraleval::TriageRun run(Need(run_dir, "run_dir"));
    ordered_json out = ordered_json::array();
    std::string lines;
    for (const auto& c : run.Queue()) {
      auto j = moraleval::ToJson(c);
      lines += j.dump() + "\n";
      out.push_back(std::move(j));
    }
    if (out_path) {
      std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
      f << lines;
      if (!f.flush()) Fail(ErrorCode::kIo, std::string("cannot write '") + out_path + "'");
    }
    return out.dump(2);
  });
}

me_status me_breakdown(me_context* ctx, const char* run_dir, char** out_json) {
  return Guard(ctx, out_json, [&] {
    const moraleval::TriageRun run(Need(run_dir, "run_dir"));
    return moraleval::ToJson(run.GetBreakdown()).dump(2);
  });
}

me_status me_triage_server_new(me_context* ctx, const char* runs_root, const char* static_dir,
                               const char* host, int port, me_triage_server** out_server,
                               int* out_port) {
  if (out_server) *out_server = nullptr;
  return Guard(ctx, nullptr, [&] {
    if (!out_server) Fail(ErrorCode::kInvalidArgument, "out_server is required");
    std::optional<std::filesystem::path> assets;
    if (static_dir) assets = static_dir;
    auto server = std::make_unique<me_triage_server>(Need(runs_root, "runs_root"), assets);
    const int bound = server->server.Bind(host ? host : "127.0.0.1", port);
    if (out_port) *out_port = bound;
    *out_server = server.release();
    return std::string();
  });
}

void me_triage_server_serve(me_triage_server* server) {
  if (server) server->server.Serve();
}

void me_triage_server_stop(me_triage_server* server) {
  if (server) server->server.Stop();
}

void me_triage_server_free(me_triage_server* server) { delete server; }

}  // extern "C"
