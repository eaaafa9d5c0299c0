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

#include "moraleval/triage.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "moraleval/error.hpp"

namespace moraleval {
namespace {

constexpr const char* kAnnotationsFile = "annotations.jsonl";

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::ordered_json Fields(const FieldList& fields) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& [k, v] : fields) out.push_back({{"key", k}, {"text", v}});
  return out;
}

}  // namespace

std::string_view ToString(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kDataInappropriateAnnotation: return "data-a";
    case ErrorCategory::kDataInsufficientContext: return "data-b";
    case ErrorCategory::kLlmWrongReasoning: return "llm-c";
    case ErrorCategory::kLlmOverestimatedRisk: return "llm-d";
  }
  return "data-a";
}

ErrorCategory ErrorCategoryFromString(std::string_view s) {
  for (auto c : kErrorCategories) {
    if (ToString(c) == s) return c;
  }
  Fail(ErrorCode::kInvalidArgument,
       "unknown error category '" + std::string(s) + "' (expected data-a, data-b, llm-c or llm-d)");
}

nlohmann::ordered_json ToJson(const Annotation& a) {
  return {{"key", a.key},           {"case_id", a.case_id},
          {"method", a.method},     {"category", ToString(a.category)},
          {"note", a.note},         {"annotator", a.annotator},
          {"at", a.at}};
}

Annotation AnnotationFromJson(const nlohmann::json& j) {
  try {
    Annotation a;
    a.key = j.at("key").get<std::string>();
    a.case_id = j.at("case_id").get<std::string>();
    a.method = j.at("method").get<std::string>();
    a.category = ErrorCategoryFromString(j.at("category").get<std::string>());
    a.note = j.value("note", "");
    a.annotator = j.at("annotator").get<std::string>();
    a.at = j.at("at").get<std::string>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("annotation: ") + e.what());
  }
}

nlohmann::ordered_json ToJson(const TriageCase& c) {
  nlohmann::ordered_json j = {{"key", c.key},         {"case_id", c.case_id},
                              {"method", c.method},   {"dataset", c.dataset},
                              {"shape", ToString(c.shape)}, {"scenario", c.scenario}};
  if (c.scenario_b) j["scenario_b"] = *c.scenario_b;
  if (c.statement) j["statement"] = *c.statement;
  j["gold"] = ToString(c.gold);
  j["judgment"] = ToJson(c.judgment);
  j["analysis_fields"] = Fields(c.analysis_fields);
  j["annotation"] = c.annotation ? ToJson(*c.annotation) : nlohmann::ordered_json();
  auto history = nlohmann::ordered_json::array();
  for (const auto& a : c.history) history.push_back(ToJson(a));
  j["history"] = std::move(history);
  return j;
}

std::string QueueKey(const std::string& case_id, const std::string& method, bool multi_method) {
  return multi_method ? case_id + "::" + method : case_id;
}

std::vector<TriageCase> ExportMisaligned(const std::vector<EvalRecord>& records,
                                         const std::vector<TestCase>& cases,
                                         const ReplayStore* responses) {
  std::map<std::string, const TestCase*> by_id;
  for (const auto& tc : cases) by_id[tc.id] = &tc;
  std::set<std::string> methods;
  for (const auto& r : records) methods.insert(r.method);
  const bool multi = methods.size() > 1;

  std::vector<std::string> dangling;
  std::vector<TriageCase> out;
  for (const auto& r : records) {
    if (r.aligned != Aligned::kFalse) continue;
    const auto it = by_id.find(r.case_id);
    if (it == by_id.end()) {
      dangling.push_back(r.case_id);
      continue;
    }
    const TestCase& tc = *it->second;
    TriageCase c;
    c.key = QueueKey(r.case_id, r.method, multi);
    c.case_id = r.case_id;
    c.method = r.method;
    c.dataset = r.dataset;
    c.shape = tc.shape;
    c.scenario = tc.scenario;
    c.scenario_b = tc.scenario_b;
    c.statement = tc.statement;
    c.gold = r.gold;
    c.judgment = r.judgment;
    if (responses) {
      if (const auto raw = responses->Lookup(r.prompt_hash, r.model)) {
        const auto prompt = Render(tc, Method::FromId(r.method));
        c.analysis_fields = Parse(*raw, prompt).fields;
      }
    }
    out.push_back(std::move(c));
  }
  if (!dangling.empty()) {
    std::sort(dangling.begin(), dangling.end());
    dangling.erase(std::unique(dangling.begin(), dangling.end()), dangling.end());
    std::string list;
    for (const auto& id : dangling) list += (list.empty() ? "" : ", ") + id;
    Fail(ErrorCode::kNotFound, "records refer to case ids missing from the case file: " + list);
  }
  std::sort(out.begin(), out.end(), [](const TriageCase& a, const TriageCase& b) {
    return std::tie(a.case_id, a.method) < std::tie(b.case_id, b.method);
  });
  return out;
}

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  const std::string data = ReadFile(path_);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    ++line_no;
    const auto nl = data.find('\n', pos);
    const std::string line = data.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    if (nl == std::string::npos) {
      // An append that never finished: no acknowledgment was sent for it.
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        std::filesystem::resize_file(path_, pos);
        break;
      }
    }
    if (!line.empty()) {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) {
        Fail(ErrorCode::kParse,
             path_.string() + ":" + std::to_string(line_no) + ": not a JSON annotation");
      }
      Annotation a = AnnotationFromJson(j);
      by_key_[a.key].push_back(std::move(a));
      ++count_;
    }
    if (nl == std::string::npos) {
      // Valid but unterminated: finish the line so the next append starts fresh.
      std::ofstream(path_, std::ios::binary | std::ios::app) << '\n';
      break;
    }
    pos = nl + 1;
  }
}

void AnnotationStore::Append(const Annotation& a) {
  const std::string line = ToJson(a).dump() + "\n";
  std::lock_guard lock(mu_);
  if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) Fail(ErrorCode::kIo, "cannot open '" + path_.string() + "' for append");
  std::size_t written = 0;
  while (written < line.size()) {
    const auto n = ::write(fd, line.data() + written, line.size() - written);
    if (n <= 0) {
      ::close(fd);
      Fail(ErrorCode::kIo, "write to '" + path_.string() + "' failed");
    }
    written += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) Fail(ErrorCode::kIo, "fsync of '" + path_.string() + "' failed");
  by_key_[a.key].push_back(a);
  ++count_;
}

std::vector<Annotation> AnnotationStore::History(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = by_key_.find(key);
  return it == by_key_.end() ? std::vector<Annotation>{} : it->second;
}

std::vector<Annotation> AnnotationStore::Latest() const {
  std::lock_guard lock(mu_);
  std::vector<Annotation> out;
  for (const auto& [key, list] : by_key_) out.push_back(list.back());
  return out;
}

std::size_t AnnotationStore::size() const {
  std::lock_guard lock(mu_);
  return count_;
}

std::size_t Breakdown::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

Breakdown MakeBreakdown(const std::array<std::size_t, 4>& counts, std::string run_label) {
  Breakdown b;
  b.run_label = std::move(run_label);
  b.counts = counts;
  const std::size_t total = b.total();
  if (total == 0) return b;
  std::array<std::size_t, 4> remainder{};
  int assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    b.percentages[i] = static_cast<int>(100 * counts[i] / total);
    remainder[i] = 100 * counts[i] % total;
    assigned += b.percentages[i];
  }
  std::array<std::size_t, 4> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return remainder[x] > remainder[y]; });
  for (int k = 0; assigned < 100; ++k, ++assigned) ++b.percentages[order[k]];
  return b;
}

Breakdown BreakdownOf(const std::vector<Annotation>& latest, std::string run_label) {
  std::array<std::size_t, 4> counts{};
  for (const auto& a : latest) ++counts[static_cast<std::size_t>(a.category)];
  return MakeBreakdown(counts, std::move(run_label));
}

nlohmann::ordered_json ToJson(const Breakdown& b) {
  nlohmann::ordered_json counts, percentages;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string name(ToString(kErrorCategories[i]));
    counts[name] = b.counts[i];
    percentages[name] = b.percentages[i];
  }
  return {{"run", b.run_label},
          {"total", b.total()},
          {"counts", counts},
          {"percentages", percentages}};
}

TriageRun::TriageRun(std::filesystem::path run_dir) : dir_(std::move(run_dir)) {
  const auto manifest_path = dir_ / "manifest.json";
  const auto manifest = nlohmann::json::parse(ReadFile(manifest_path), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    Fail(ErrorCode::kParse, "'" + manifest_path.string() + "' is not a JSON object");
  }
  id_ = manifest.value("run_id", dir_.filename().string());
  std::filesystem::path case_file;
  try {
    case_file = manifest.at("inputs").at("case_file").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    Fail(ErrorCode::kParse, "'" + manifest_path.string() + "' has no inputs.case_file");
  }
  const auto records_path = dir_ / "records.jsonl";
  const auto records = std::filesystem::exists(records_path) ? ReadRecords(records_path)
                                                              : std::vector<EvalRecord>{};
  const ReplayStore responses(dir_ / "responses.jsonl");
  cases_ = ExportMisaligned(records, ReadCasesJsonl(case_file), &responses);
  for (std::size_t i = 0; i < cases_.size(); ++i) index_[cases_[i].key] = i;
  store_ = std::make_unique<AnnotationStore>(dir_ / kAnnotationsFile);
}

TriageCase TriageRun::WithAnnotations(TriageCase c) const {
  c.history = store_->History(c.key);
  if (!c.history.empty()) c.annotation = c.history.back();
  return c;
}

std::vector<TriageCase> TriageRun::Queue(std::optional<bool> done) const {
  std::vector<TriageCase> out;
  for (const auto& c : cases_) {
    auto full = WithAnnotations(c);
    if (!done || full.annotation.has_value() == *done) out.push_back(std::move(full));
  }
  return out;
}

bool TriageRun::Contains(const std::string& key) const { return index_.count(key) > 0; }

std::optional<std::string> TriageRun::Resolve(const std::string& key_or_case_id) const {
  if (Contains(key_or_case_id)) return key_or_case_id;
  std::optional<std::string> found;
  for (const auto& c : cases_) {
    if (c.case_id != key_or_case_id) continue;
    if (found) return std::nullopt;
    found = c.key;
  }
  return found;
}

TriageCase TriageRun::Annotate(const std::string& key, ErrorCategory category,
                               const std::string& note, const std::string& annotator) {
  const auto it = index_.find(key);
  if (it == index_.end()) {
    Fail(ErrorCode::kNotFound, "no misaligned case '" + key + "' in run '" + id_ + "'");
  }
  const TriageCase& c = cases_[it->second];
  Annotation a;
  a.key = c.key;
  a.case_id = c.case_id;
  a.method = c.method;
  a.category = category;
  a.note = note;
  a.annotator = annotator;
  a.at = UtcNow();
  store_->Append(a);
  return WithAnnotations(c);
}

Breakdown TriageRun::GetBreakdown() const {
  std::vector<Annotation> latest;
  for (auto& a : store_->Latest()) {
    // Keys that left the queue (e.g. after a rerun) no longer count.
    if (Contains(a.key)) latest.push_back(std::move(a));
  }
  return BreakdownOf(latest, id_);
}

struct TriageServer::Impl {
  std::filesystem::path root;
  httplib::Server server;
  std::mutex mu;
  struct Cached {
    std::shared_ptr<TriageRun> run;
    std::uintmax_t records_size = 0;
  };
  std::map<std::string, Cached> runs;

  // Run ids are directory names holding a manifest.
  std::vector<std::string> RunIds() {
    std::vector<std::string> ids;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(root, ec)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest.json")) {
        ids.push_back(entry.path().filename().string());
      }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  // Reopens a run whose records file changed since it was loaded.
  std::shared_ptr<TriageRun> Get(const std::string& id) {
    if (id.empty() || id.find('/') != std::string::npos || id == "." || id == "..") return nullptr;
    const auto dir = root / id;
    if (!std::filesystem::exists(dir / "manifest.json")) return nullptr;
    std::error_code ec;
    const auto size = std::filesystem::file_size(dir / "records.jsonl", ec);
    const std::uintmax_t records_size = ec ? 0 : size;
    std::lock_guard lock(mu);
    auto& cached = runs[id];
    if (!cached.run || cached.records_size != records_size) {
      cached.run = std::make_shared<TriageRun>(dir);
      cached.records_size = records_size;
    }
    return cached.run;
  }
};

namespace {

void SendJson(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void SendError(httplib::Response& res, int status, const std::string& message) {
  SendJson(res, status, {{"error", message}});
}

}  // namespace

TriageServer::TriageServer(std::filesystem::path runs_root,
                           std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(runs_root);
  Impl* self = impl_.get();
  auto& srv = impl_->server;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      SendError(res, e.code() == ErrorCode::kNotFound ? 404 : 500, e.what());
    } catch (const std::exception& e) {
      SendError(res, 500, e.what());
    }
  });

  srv.Get("/api/runs", [self](const httplib::Request&, httplib::Response& res) {
    auto out = nlohmann::ordered_json::array();
    for (const auto& id : self->RunIds()) {
      const auto run = self->Get(id);
      if (!run) continue;
      const auto done = run->Queue(true).size();
      const auto all = run->Queue().size();
      out.push_back({{"id", id}, {"misaligned", all}, {"pending", all - done}, {"done", done}});
    }
    SendJson(res, 200, out);
  });

  srv.Get(R"(/api/runs/([^/]+)/queue)", [self](const httplib::Request& req,
                                               httplib::Response& res) {
    const auto run = self->Get(req.matches[1]);
    if (!run) return SendError(res, 404, "unknown run '" + std::string(req.matches[1]) + "'");
    std::optional<bool> done;
    if (req.has_param("status")) {
      const auto status = req.get_param_value("status");
      if (status == "done") done = true;
      else if (status == "pending") done = false;
      else if (status != "all") {
        return SendError(res, 400, "status must be pending, done or all");
      }
    }
    const auto all = run->Queue();
    std::size_t n_done = 0;
    for (const auto& c : all) n_done += c.annotation.has_value();
    auto cases = nlohmann::ordered_json::array();
    for (const auto& c : all) {
      if (!done || c.annotation.has_value() == *done) cases.push_back(ToJson(c));
    }
    SendJson(res, 200,
             {{"run", run->id()}, {"pending", all.size() - n_done}, {"done", n_done},
              {"cases", cases}});
  });

  srv.Get(R"(/api/runs/([^/]+)/breakdown)", [self](const httplib::Request& req,
                                                   httplib::Response& res) {
    const auto run = self->Get(req.matches[1]);
    if (!run) return SendError(res, 404, "unknown run '" + std::string(req.matches[1]) + "'");
    SendJson(res, 200, ToJson(run->GetBreakdown()));
  });

  srv.Post(R"(/api/cases/(.+)/annotation)", [self](const httplib::Request& req,
                                                  httplib::Response& res) {
    const std::string key = req.matches[1];
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      return SendError(res, 400, "body must be a JSON object");
    }
    const auto text = [&](const char* name) -> std::optional<std::string> {
      if (!body.contains(name)) return std::string();
      if (!body[name].is_string()) return std::nullopt;
      return body[name].get<std::string>();
    };
    const auto category_text = text("category");
    const auto note = text("note");
    const auto annotator = text("annotator");
    const auto run_id = text("run");
    if (!category_text || !note || !annotator || !run_id) {
      return SendError(res, 422, "category, note, annotator and run must be strings");
    }
    ErrorCategory category;
    try {
      category = ErrorCategoryFromString(*category_text);
    } catch (const Error& e) {
      return SendError(res, 422, e.what());
    }
    if (annotator->empty()) return SendError(res, 422, "annotator is required");

    std::vector<std::pair<std::shared_ptr<TriageRun>, std::string>> hits;
    for (const auto& id : self->RunIds()) {
      if (!run_id->empty() && id != *run_id) continue;
      const auto run = self->Get(id);
      if (!run) continue;
      if (const auto resolved = run->Resolve(key)) hits.emplace_back(run, *resolved);
    }
    if (hits.empty()) return SendError(res, 404, "no misaligned case '" + key + "'");
    if (hits.size() > 1) {
      return SendError(res, 409, "case '" + key + "' is queued in several runs; pass \"run\"");
    }
    const auto updated = hits[0].first->Annotate(hits[0].second, category, *note, *annotator);
    auto j = ToJson(updated);
    j["run"] = hits[0].first->id();
    SendJson(res, 200, j);
  });

  if (static_dir) srv.set_mount_point("/", static_dir->string());
}

TriageServer::~TriageServer() { Stop(); }

int TriageServer::Bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) Fail(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    Fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void TriageServer::Serve() { impl_->server.listen_after_bind(); }

void TriageServer::Stop() { impl_->server.stop(); }

}  // namespace moraleval
