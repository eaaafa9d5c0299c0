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

/*
 * C interface to libmoraleval.
 *
 * Structured values cross the boundary as UTF-8 JSON text. Every function
 * that produces text stores a malloc'd, NUL-terminated string in *out; the
 * caller releases it with me_string_free. On failure *out is set to NULL and
 * me_last_error(ctx) describes the problem until the next call on ctx.
 *
 * A context may be used from one thread at a time, except for
 * me_request_stop, which is async-signal-safe.
 */

#ifndef MORALEVAL_MORALEVAL_H_
#define MORALEVAL_MORALEVAL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MORALEVAL_BUILDING)
#define ME_API __attribute__((visibility("default")))
#else
#define ME_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum me_status {
  ME_OK = 0,
  ME_INVALID_ARGUMENT = 1,
  ME_NOT_FOUND = 2,
  ME_IO = 3,
  ME_PARSE = 4,
  ME_CONFLICT = 5,
  ME_UNSUPPORTED = 6,
  ME_RUNTIME = 7,
} me_status;

typedef struct me_context me_context;
typedef struct me_triage_server me_triage_server;

ME_API const char* me_version(void);
ME_API const char* me_status_name(me_status status);

ME_API me_context* me_context_new(void);
ME_API void me_context_free(me_context* ctx);
/* Never NULL; "" when the last call succeeded. */
ME_API const char* me_last_error(const me_context* ctx);

ME_API void me_string_free(char* s);

/* Asks a running me_run on ctx to stop after the record in flight. */
ME_API void me_request_stop(me_context* ctx);
ME_API void me_clear_stop(me_context* ctx);

/* Registry of instruction templates, as JSON. */
ME_API me_status me_export_templates(me_context* ctx, char** out_json);

/*
 * Loads a dataset spec file, optionally samples n cases (n == 0 keeps all),
 * and writes canonical JSONL to out_path.
 * Result: {"out", "cases", "skipped": [{"row", "kind", "reason"}], "seed"}.
 */
ME_API me_status me_prepare_data(me_context* ctx, const char* spec_path, const char* out_path,
                                 size_t n, uint64_t seed, char** out_json);

/* Looks up one case by id in a canonical JSONL case file. */
ME_API me_status me_find_case(me_context* ctx, const char* case_file, const char* case_id,
                              char** out_case_json);

/* Renders a case (JSON object) under a method id such as "justice+swap". */
ME_API me_status me_render(me_context* ctx, const char* case_json, const char* method_id,
                           char** out_prompt_json);

/* Default, choice-swapped and bracket-swapped prompts as a JSON array. */
ME_API me_status me_render_variants(me_context* ctx, const char* case_json,
                                    const char* theory_id, char** out_json);

/*
 * Parses a raw model reply against a rendered prompt (as returned by
 * me_render). Result: {"parsed": {...}, "canonical": "..."}.
 */
ME_API me_status me_parse(me_context* ctx, const char* raw, const char* prompt_json,
                          char** out_json);

/*
 * Executes or resumes a run. spec_json is a run spec object; relative paths
 * in it resolve against base_dir (may be NULL). options_json may be NULL or
 * {"strict_hash": bool, "retry_failed": bool, "stop_after": n}.
 * Result: the run summary.
 */
ME_API me_status me_run(me_context* ctx, const char* spec_json, const char* base_dir,
                        const char* options_json, char** out_summary_json);

/* Reads a run spec file and returns it as JSON with paths resolved. */
ME_API me_status me_load_run_spec(me_context* ctx, const char* path, char** out_spec_json);

/* Expands a preset into a JSON array of run specs. base_spec_json holds
 * run_id, out_dir, backend and optionally sample {"seed", "n"}; "n" replaces
 * the preset's sample size (0 keeps every case). triage_sample is "reuse" or
 * "fresh". */
ME_API me_status me_expand_preset(me_context* ctx, const char* name, const char* base_spec_json,
                                  const char* cases_dir, const char* triage_sample,
                                  char** out_json);

/*
 * Report over one or more run directories (JSON array of paths).
 * options_json: {"format": "md"|"csv"|"json", "count_excluded_as_misaligned":
 * bool, "cited": path}. "json" yields per (method, dataset) summaries.
 */
ME_API me_status me_report(me_context* ctx, const char* run_dirs_json, const char* options_json,
                           char** out_text);

/*
 * Mean and sample standard deviation of each (method, dataset) metric over
 * two or more run directories. Result rows carry rendered "mean(std)" text.
 */
ME_API me_status me_variation(me_context* ctx, const char* run_dirs_json, char** out_json);

/* SHA-256 over a records file with wall-clock fields removed. */
ME_API me_status me_records_digest(me_context* ctx, const char* records_path, char** out_hex);

/* Misaligned cases of a run as a JSON array; also written as JSONL to
 * out_path when it is not NULL. */
ME_API me_status me_export_misaligned(me_context* ctx, const char* run_dir, const char* out_path,
                                      char** out_json);

ME_API me_status me_breakdown(me_context* ctx, const char* run_dir, char** out_json);

/* Binds the triage HTTP API (port 0 picks one) and reports the bound port. */
ME_API me_status me_triage_server_new(me_context* ctx, const char* runs_root,
                                      const char* static_dir, const char* host, int port,
                                      me_triage_server** out_server, int* out_port);
/* Blocks until me_triage_server_stop. */
ME_API void me_triage_server_serve(me_triage_server* server);
/* Safe to call from another thread. */
ME_API void me_triage_server_stop(me_triage_server* server);
ME_API void me_triage_server_free(me_triage_server* server);

#ifdef __cplusplus
}
#endif

#endif /* MORALEVAL_MORALEVAL_H_ */
