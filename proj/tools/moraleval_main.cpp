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

// moraleval command line. Talks to the library through the C API only.
//
// Exit status: 0 success, 1 user error (bad flags, unknown ids, run id
// reused with a different configuration), 2 runtime failure, 130 when a run
// was interrupted and can be resumed.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moraleval/moraleval.h"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

me_context* g_ctx = nullptr;
me_triage_server* g_server = nullptr;

extern "C" void OnInterrupt(int) {
  if (g_ctx) me_request_stop(g_ctx);
}

// A failed library call, carried to main for the exit status.
struct CallError {
  me_status status;
  std::string message;
};

struct UsageError {
  std::string message;
};

void Check(me_status status) {
  if (status != ME_OK) throw CallError{status, me_last_error(g_ctx)};
}

// out is bound by reference so it is read after the call has filled it.
std::string Call(me_status status, char*& out) {
  Check(status);
  std::string text = out ? out : "";
  me_string_free(out);
  out = nullptr;
  return text;
}

void Wrote(const fs::path& path) {
  std::cout << "wrote " << path.lexically_normal().string() << "\n";
}

void WriteOrPrint(const std::string& text, const std::string& output) {
  if (output.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  out << text;
  if (!text.empty() && text.back() != '\n') out << "\n";
  if (!out.flush()) throw CallError{ME_IO, "cannot write '" + output + "'"};
  Wrote(output);
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CallError{ME_IO, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --run accepts a run directory or a run id under --out-dir.
fs::path RunDir(const std::string& run, const std::string& out_dir) {
  if (fs::exists(fs::path(run) / "manifest.json")) return run;
  const fs::path dir = fs::path(out_dir) / run;
  if (!fs::exists(dir / "manifest.json")) {
    throw CallError{ME_NOT_FOUND, "no run '" + run + "' (looked in '" + dir.string() + "')"};
  }
  return dir;
}

std::string FindCase(const std::string& cases, const std::string& case_id) {
  char* out = nullptr;
  return Call(me_find_case(g_ctx, cases.c_str(), case_id.c_str(), &out), out);
}

// ---- prepare-data ---------------------------------------------------------

struct PrepareArgs {
  std::string spec, out;
  std::size_t sample = 0;
  std::uint64_t seed = 0;
};

void PrepareData(const PrepareArgs& a) {
  char* out = nullptr;
  const auto result = json::parse(Call(
      me_prepare_data(g_ctx, a.spec.c_str(), a.out.c_str(), a.sample, a.seed, &out), out));
  std::size_t filtered = 0, malformed = 0;
  for (const auto& s : result["skipped"]) (s["kind"] == "filtered" ? filtered : malformed)++;
  std::cout << "cases " << result["cases"] << " filtered " << filtered << " malformed "
            << malformed;
  if (!result["seed"].is_null()) std::cout << " seed " << result["seed"];
  std::cout << "\n";
  Wrote(a.out);
}

// ---- run ------------------------------------------------------------------

struct RunArgs {
  std::string spec, preset, cases_dir = "data/cases", backend, run_id = "preset", out_dir = "runs";
  std::string triage_sample = "reuse";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sample;
  bool strict_hash = false, retry_failed = false;
  std::size_t stop_after = 0;
};

int RunOne(const json& spec, const RunArgs& a) {
  const json options = {{"strict_hash", a.strict_hash},
                        {"retry_failed", a.retry_failed},
                        {"stop_after", a.stop_after}};
  char* out = nullptr;
  const auto summary = json::parse(
      Call(me_run(g_ctx, spec.dump().c_str(), nullptr, options.dump().c_str(), &out), out));
  std::cout << summary.dump(2) << "\n";
  Wrote(summary["manifest"].get<std::string>());
  Wrote(summary["records"].get<std::string>());
  if (!summary["replay_misses"].empty()) {
    std::cerr << "replay store has no recording for " << summary["replay_misses"].size()
              << " prompt(s); those jobs were not persisted\n";
  }
  if (!summary["stopped"].get<bool>() || a.stop_after > 0) return 0;
  std::cerr << "interrupted; run the same command again to resume\n";
  return 130;
}

int RunCommand(const RunArgs& a) {
  std::vector<json> specs;
  if (!a.spec.empty()) {
    char* out = nullptr;
    auto spec = json::parse(Call(me_load_run_spec(g_ctx, a.spec.c_str(), &out), out));
    if (a.seed) {
      if (!spec.contains("sample")) throw UsageError{"--seed needs a spec with a sample"};
      spec["sample"]["seed"] = *a.seed;
    }
    specs.push_back(std::move(spec));
  } else {
    if (a.backend.empty()) throw UsageError{"--preset needs --backend"};
    char* out = nullptr;
    const auto backend = json::parse(ReadText(a.backend), nullptr, false);
    if (backend.is_discarded()) throw CallError{ME_PARSE, "'" + a.backend + "' is not valid JSON"};
    json base = {{"run_id", a.run_id}, {"out_dir", a.out_dir}, {"backend", backend}};
    base["sample"] = {{"seed", a.seed.value_or(0)}};
    if (a.sample) base["sample"]["n"] = *a.sample;
    const auto expanded = json::parse(Call(me_expand_preset(g_ctx, a.preset.c_str(),
                                                            base.dump().c_str(),
                                                            a.cases_dir.c_str(),
                                                            a.triage_sample.c_str(), &out),
                                           out));
    for (const auto& s : expanded) specs.push_back(s);
  }
  for (const auto& spec : specs) {
    const int status = RunOne(spec, a);
    if (status != 0) return status;
  }
  return 0;
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out_dir = "runs", format = "md", cited, output;
  bool count_excluded = false, variation = false;
};

void Report(const ReportArgs& a) {
  json dirs = json::array();
  for (const auto& r : a.runs) dirs.push_back(RunDir(r, a.out_dir).string());
  char* out = nullptr;
  if (a.variation) {
    if (a.runs.size() < 2) throw UsageError{"--variation needs at least two --run"};
    const auto rows = json::parse(Call(me_variation(g_ctx, dirs.dump().c_str(), &out), out));
    std::ostringstream md;
    md << "| Method | Dataset | P | R | Acc |\n|---|---|---:|---:|---:|\n";
    const auto cell = [](const json& c) {
      return c.is_null() ? std::string("-") : c["rendered"].get<std::string>();
    };
    for (const auto& r : rows) {
      md << "| " << r["method"].get<std::string>() << " | " << r["dataset"].get<std::string>()
         << " | " << cell(r["precision"]) << " | " << cell(r["recall"]) << " | "
         << cell(r["accuracy"]) << " |\n";
    }
    WriteOrPrint(a.format == "json" ? rows.dump(2) : md.str(), a.output);
    return;
  }
  json options = {{"format", a.format}, {"count_excluded_as_misaligned", a.count_excluded}};
  if (!a.cited.empty()) options["cited"] = a.cited;
  WriteOrPrint(Call(me_report(g_ctx, dirs.dump().c_str(), options.dump().c_str(), &out), out),
               a.output);
}

// ---- render / variants / export-templates / parse -------------------------

struct PromptArgs {
  std::string cases, case_id, method = "vanilla", theory = "justice";
  bool json_out = false;
};

void PrintPrompt(const json& p) {
  std::cout << "# " << p["prompt_hash"].get<std::string>() << "\n"
            << p["text"].get<std::string>() << "\n";
}

void Render(const PromptArgs& a) {
  const auto tc = FindCase(a.cases, a.case_id);
  char* out = nullptr;
  const auto prompt = json::parse(Call(me_render(g_ctx, tc.c_str(), a.method.c_str(), &out), out));
  if (a.json_out) std::cout << prompt.dump(2) << "\n";
  else PrintPrompt(prompt);
}

void Variants(const PromptArgs& a) {
  const auto tc = FindCase(a.cases, a.case_id);
  char* out = nullptr;
  const auto prompts =
      json::parse(Call(me_render_variants(g_ctx, tc.c_str(), a.theory.c_str(), &out), out));
  if (a.json_out) {
    std::cout << prompts.dump(2) << "\n";
    return;
  }
  const char* labels[] = {"default", "choices-swapped", "brackets-swapped"};
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::cout << "## " << labels[i % 3] << "\n";
    PrintPrompt(prompts[i]);
    std::cout << "\n";
  }
}

void ExportTemplates(const std::string& output) {
  char* out = nullptr;
  WriteOrPrint(Call(me_export_templates(g_ctx, &out), out), output);
}

// A fixture is {"case": {...}, "method": "...", "raw": "..."}, or an array
// of them, or an object with such an array under "fixtures".
void ParseFixture(const std::string& path) {
  auto j = json::parse(ReadText(path), nullptr, false);
  if (j.is_discarded()) throw CallError{ME_PARSE, "'" + path + "' is not valid JSON"};
  if (j.is_object() && j.contains("fixtures")) j = j["fixtures"];
  if (j.is_object()) j = json::array({j});
  json results = json::array();
  for (const auto& f : j) {
    if (!f.contains("case") || !f.contains("raw")) {
      throw UsageError{"each fixture needs \"case\" and \"raw\""};
    }
    char* out = nullptr;
    const auto prompt = Call(me_render(g_ctx, f["case"].dump().c_str(),
                                       f.value("method", "vanilla").c_str(), &out),
                             out);
    const auto parsed = json::parse(
        Call(me_parse(g_ctx, f["raw"].get<std::string>().c_str(), prompt.c_str(), &out), out));
    json r = parsed["parsed"];
    if (f.contains("name")) r["name"] = f["name"];
    r["canonical"] = parsed["canonical"];
    results.push_back(r);
  }
  std::cout << (results.size() == 1 ? results[0] : results).dump(2) << "\n";
}

// ---- triage ---------------------------------------------------------------

struct TriageArgs {
  std::string run, out_dir = "runs", output, host = "127.0.0.1", static_dir;
  int port = 8377;
};

void ExportMisaligned(const TriageArgs& a) {
  const auto dir = RunDir(a.run, a.out_dir);
  const std::string output = a.output.empty() ? (dir / "misaligned.jsonl").string() : a.output;
  char* out = nullptr;
  const auto cases = json::parse(
      Call(me_export_misaligned(g_ctx, dir.string().c_str(), output.c_str(), &out), out));
  std::cout << "misaligned " << cases.size() << "\n";
  Wrote(output);
}

void ServeTriage(const TriageArgs& a) {
  int port = 0;
  Check(me_triage_server_new(g_ctx, a.out_dir.c_str(),
                             a.static_dir.empty() ? nullptr : a.static_dir.c_str(), a.host.c_str(),
                             a.port, &g_server, &port));
  std::cout << "serving " << a.out_dir << " at http://" << a.host << ":" << port << "/\n"
            << std::flush;
  std::signal(SIGINT, [](int) {
    if (g_server) me_triage_server_stop(g_server);
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) me_triage_server_stop(g_server);
  });
  me_triage_server_serve(g_server);
  me_triage_server_free(g_server);
  g_server = nullptr;
}

int ExitFor(me_status status) {
  switch (status) {
    case ME_INVALID_ARGUMENT:
    case ME_NOT_FOUND:
    case ME_CONFLICT:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Theory-guided moral judgment evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", me_version());

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare-data", "Load a dataset into canonical JSONL cases");
  prepare->add_option("--spec", prep.spec, "Dataset spec (JSON)")->required();
  prepare->add_option("--out", prep.out, "Output case file")->required();
  prepare->add_option("--sample", prep.sample, "Keep a uniform sample of N cases");
  prepare->add_option("--seed", prep.seed, "Sampling seed");

  RunArgs run_args;
  std::uint64_t seed_value = 0;
  auto* run = app.add_subcommand("run", "Execute or resume an evaluation run");
  auto* spec_opt = run->add_option("--spec", run_args.spec, "Run spec (JSON)");
  auto* preset_opt = run->add_option("--preset", run_args.preset, "ethics-suite or commonsense-suite");
  spec_opt->excludes(preset_opt);
  run->add_option("--cases-dir", run_args.cases_dir, "Case files for presets (<dataset>.jsonl)");
  run->add_option("--backend", run_args.backend, "Backend config for presets (JSON)");
  run->add_option("--run-id", run_args.run_id, "Run id prefix for presets");
  run->add_option("--out-dir", run_args.out_dir, "Run directory root for presets");
  run->add_option("--triage-sample", run_args.triage_sample,
                  "reuse: triage the headline sample; fresh: add a separate sample")
      ->check(CLI::IsMember({"reuse", "fresh"}));
  auto* seed_opt = run->add_option("--seed", seed_value, "Sampling seed");
  std::size_t sample_value = 0;
  auto* sample_opt = run->add_option("--sample", sample_value,
                                     "Cases per dataset for presets (0 keeps all)");
  sample_opt->excludes(spec_opt);
  run->add_flag("--strict-hash", run_args.strict_hash, "Redo records whose prompt changed");
  run->add_flag("--retry-failed", run_args.retry_failed, "Redo records whose exchange failed");
  run->add_option("--stop-after", run_args.stop_after, "Stop after N new records");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Metrics tables for finished runs");
  report->add_option("--run", report_args.runs, "Run id or directory (repeatable)")->required();
  report->add_option("--out-dir", report_args.out_dir, "Where run ids are looked up");
  report->add_option("--format", report_args.format, "Output format")
      ->check(CLI::IsMember({"md", "csv", "json"}));
  report->add_option("--cited", report_args.cited, "Published rows to show alongside (JSON)");
  report->add_option("--output", report_args.output, "Write to a file instead of stdout");
  report->add_flag("--count-excluded-as-misaligned", report_args.count_excluded,
                   "Count refusals, unparseable and blocked records as wrong answers");
  report->add_flag("--variation", report_args.variation,
                   "mean(std) of each metric over the given runs");

  PromptArgs render_args;
  auto* render = app.add_subcommand("render", "Print the prompt for one case");
  render->add_option("--cases", render_args.cases, "Case file (JSONL)")->required();
  render->add_option("--case-id", render_args.case_id)->required();
  render->add_option("--method", render_args.method, "Method id, e.g. justice or tdm-gen+swap");
  render->add_flag("--json", render_args.json_out, "Print the rendered prompt as JSON");

  PromptArgs variant_args;
  auto* variants = app.add_subcommand("variants", "Print the prompt variation suite for one case");
  variants->add_option("--cases", variant_args.cases, "Case file (JSONL)")->required();
  variants->add_option("--case-id", variant_args.case_id)->required();
  variants->add_option("--theory", variant_args.theory)->required();
  variants->add_flag("--json", variant_args.json_out, "Print the prompts as JSON");

  std::string templates_output;
  auto* templates = app.add_subcommand("export-templates", "Dump the template registry");
  templates->add_option("--output", templates_output);

  std::string fixture;
  auto* parse = app.add_subcommand("parse", "Parse recorded model replies");
  parse->add_option("--fixture", fixture, "Fixture file (JSON)")->required();

  TriageArgs export_args;
  auto* export_cmd = app.add_subcommand("export-misaligned", "Write a run's misaligned cases");
  export_cmd->add_option("--run", export_args.run, "Run id or directory")->required();
  export_cmd->add_option("--out-dir", export_args.out_dir);
  export_cmd->add_option("--output", export_args.output, "Default <run>/misaligned.jsonl");

  TriageArgs serve_args;
  auto* serve = app.add_subcommand("serve-triage", "Serve the triage HTTP API");
  serve->add_option("--runs", serve_args.out_dir, "Run directory root");
  serve->add_option("--host", serve_args.host, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_args.port, "Port (0 picks a free one)")
      ->capture_default_str()
      ->check(CLI::Range(0, 65535));
  serve->add_option("--static", serve_args.static_dir, "Directory of UI assets to serve at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  g_ctx = me_context_new();
  std::signal(SIGINT, OnInterrupt);
  std::signal(SIGTERM, OnInterrupt);
  int status = 0;
  try {
    if (*prepare) PrepareData(prep);
    if (*run) {
      if (run_args.spec.empty() && run_args.preset.empty()) {
        throw UsageError{"run needs --spec or --preset"};
      }
      if (*seed_opt) run_args.seed = seed_value;
      if (*sample_opt) run_args.sample = sample_value;
      status = RunCommand(run_args);
    }
    if (*report) Report(report_args);
    if (*render) Render(render_args);
    if (*variants) Variants(variant_args);
    if (*templates) ExportTemplates(templates_output);
    if (*parse) ParseFixture(fixture);
    if (*export_cmd) ExportMisaligned(export_args);
    if (*serve) ServeTriage(serve_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.message << "\n\n" << app.help();
    status = 1;
  } catch (const CallError& e) {
    std::cerr << "error (" << me_status_name(e.status) << "): " << e.message << "\n";
    status = ExitFor(e.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    status = 2;
  }
  me_context_free(g_ctx);
  return status;
}
