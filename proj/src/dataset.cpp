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

#include "moraleval/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "moraleval/error.hpp"

namespace moraleval {
namespace {

std::string Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> RequiredFields(const DatasetSpec& spec) {
  if (spec.preprocess == Preprocess::kSocialChem101) {
    return {"scenario", "category", "agreement", "judgment"};
  }
  switch (spec.shape) {
    case TaskShape::kSingleScenario: return {"scenario", "label"};
    case TaskShape::kExemptionOrRole: return {"scenario", "statement", "label"};
    case TaskShape::kPairwiseComparison: return {"scenario", "scenario_b"};
  }
  return {};
}

FileFormat FormatFromString(std::string_view s) {
  if (s == "csv") return FileFormat::kCsv;
  if (s == "tsv") return FileFormat::kTsv;
  if (s == "jsonl") return FileFormat::kJsonl;
  Fail(ErrorCode::kInvalidArgument, "unknown dataset format '" + std::string(s) + "'");
}

Preprocess PreprocessFromString(std::string_view s) {
  if (s == "none") return Preprocess::kNone;
  if (s == "social-chem-101") return Preprocess::kSocialChem101;
  Fail(ErrorCode::kInvalidArgument, "unknown preprocess '" + std::string(s) + "'");
}

std::vector<RawRow> ReadRows(const DatasetSpec& spec, std::vector<SkipRecord>& skipped) {
  const std::string text = ReadFile(spec.path);
  std::vector<RawRow> rows;

  if (spec.format == FileFormat::kJsonl) {
    std::istringstream in(text);
    std::string line;
    std::size_t index = 0;
    while (std::getline(in, line)) {
      if (Trim(line).empty()) continue;
      RawRow row{index++, {}};
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_object()) {
        skipped.push_back({row.index, SkipKind::kMalformed, "line is not a JSON object"});
        continue;
      }
      for (const auto& [key, value] : j.items()) {
        row.cells[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }

  auto table = ParseDelimited(text, spec.format == FileFormat::kTsv ? '\t' : ',');
  std::vector<std::string> header;
  std::size_t start = 0;
  if (spec.has_header && !table.empty()) {
    header = table.front();
    for (auto& h : header) h = Trim(h);
    start = 1;
    for (const auto& [field, column] : spec.column_map) {
      if (std::find(header.begin(), header.end(), column) == header.end()) {
        Fail(ErrorCode::kInvalidArgument, "dataset '" + spec.name + "': column '" + column +
                                              "' (for " + field + ") not in header");
      }
    }
  }
  for (std::size_t r = start; r < table.size(); ++r) {
    RawRow row{r - start, {}};
    const auto& cells = table[r];
    if (!header.empty() && cells.size() != header.size()) {
      skipped.push_back({row.index, SkipKind::kMalformed,
                         "expected " + std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size())});
      continue;
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      row.cells[header.empty() ? std::to_string(c) : header[c]] = cells[c];
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

const std::string* Cell(const RawRow& row, const DatasetSpec& spec, const std::string& field) {
  const auto col = spec.column_map.find(field);
  if (col == spec.column_map.end()) return nullptr;
  const auto it = row.cells.find(col->second);
  return it == row.cells.end() ? nullptr : &it->second;
}

TestCase BaseCase(const RawRow& row, const DatasetSpec& spec) {
  TestCase tc;
  tc.id = spec.name + ":" + std::to_string(row.index);
  tc.dataset = spec.name;
  tc.shape = spec.shape;
  tc.meta["row"] = std::to_string(row.index);
  for (const auto& column : spec.meta_columns) {
    const auto it = row.cells.find(column);
    if (it != row.cells.end()) tc.meta[column] = it->second;
  }
  return tc;
}

// Returns the reason on failure.
std::optional<std::string> MapRow(const RawRow& row, const DatasetSpec& spec, TestCase& out) {
  TestCase tc = BaseCase(row, spec);
  const std::string* scenario = Cell(row, spec, "scenario");
  if (!scenario || Trim(*scenario).empty()) return "empty scenario";
  tc.scenario = *scenario;

  if (spec.shape == TaskShape::kPairwiseComparison) {
    const std::string* second = Cell(row, spec, "scenario_b");
    if (!second || Trim(*second).empty()) return "empty second scenario";
    tc.scenario_b = *second;
    tc.gold = GoldLabel::kFirstMorePleasant;
    out = std::move(tc);
    return std::nullopt;
  }
  if (spec.shape == TaskShape::kExemptionOrRole) {
    const std::string* statement = Cell(row, spec, "statement");
    if (!statement || Trim(*statement).empty()) return "empty statement";
    tc.statement = *statement;
  }
  const std::string* label = Cell(row, spec, "label");
  if (!label) return "missing label";
  const auto gold = spec.label_semantics.find(Trim(*label));
  if (gold == spec.label_semantics.end()) {
    return "label '" + Trim(*label) + "' not in label semantics";
  }
  if (ShapeForGold(gold->second) != spec.shape) {
    return "label '" + Trim(*label) + "' maps to a gold label of another shape";
  }
  tc.gold = gold->second;
  out = std::move(tc);
  return std::nullopt;
}

std::optional<double> ParseNumber(const std::string& text) {
  const std::string t = Trim(text);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (errno != 0 || end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::string_view ToString(GoldLabel gold) {
  switch (gold) {
    case GoldLabel::kWrong: return "wrong";
    case GoldLabel::kNotWrong: return "not-wrong";
    case GoldLabel::kReasonable: return "reasonable";
    case GoldLabel::kUnreasonable: return "unreasonable";
    case GoldLabel::kFirstMorePleasant: return "first-more-pleasant";
  }
  return "";
}

GoldLabel GoldLabelFromString(std::string_view s) {
  for (auto g : {GoldLabel::kWrong, GoldLabel::kNotWrong, GoldLabel::kReasonable,
                 GoldLabel::kUnreasonable, GoldLabel::kFirstMorePleasant}) {
    if (ToString(g) == s) return g;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown gold label '" + std::string(s) + "'");
}

TaskShape ShapeForGold(GoldLabel gold) {
  switch (gold) {
    case GoldLabel::kWrong:
    case GoldLabel::kNotWrong:
      return TaskShape::kSingleScenario;
    case GoldLabel::kReasonable:
    case GoldLabel::kUnreasonable:
      return TaskShape::kExemptionOrRole;
    case GoldLabel::kFirstMorePleasant:
      return TaskShape::kPairwiseComparison;
  }
  return TaskShape::kSingleScenario;
}

void Validate(const TestCase& tc) {
  const auto bad = [&](const std::string& why) {
    Fail(ErrorCode::kInvalidArgument, "invalid case '" + tc.id + "': " + why);
  };
  if (tc.id.empty()) bad("empty id");
  if (Trim(tc.scenario).empty()) bad("empty scenario");
  if (tc.scenario_b.has_value() != (tc.shape == TaskShape::kPairwiseComparison)) {
    bad("scenario_b must be present exactly for pairwise cases");
  }
  if (tc.statement.has_value() != (tc.shape == TaskShape::kExemptionOrRole)) {
    bad("statement must be present exactly for exemption cases");
  }
  if (ShapeForGold(tc.gold) != tc.shape) bad("gold label does not fit the shape");
}

nlohmann::ordered_json ToJson(const TestCase& tc) {
  nlohmann::ordered_json j;
  j["id"] = tc.id;
  j["dataset"] = tc.dataset;
  j["shape"] = ToString(tc.shape);
  j["scenario"] = tc.scenario;
  if (tc.scenario_b) j["scenario_b"] = *tc.scenario_b;
  if (tc.statement) j["statement"] = *tc.statement;
  j["gold"] = ToString(tc.gold);
  j["meta"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : tc.meta) j["meta"][k] = v;
  return j;
}

TestCase TestCaseFromJson(const nlohmann::json& j) {
  TestCase tc;
  try {
    tc.id = j.at("id").get<std::string>();
    tc.dataset = j.at("dataset").get<std::string>();
    tc.shape = TaskShapeFromString(j.at("shape").get<std::string>());
    tc.scenario = j.at("scenario").get<std::string>();
    if (j.contains("scenario_b")) tc.scenario_b = j.at("scenario_b").get<std::string>();
    if (j.contains("statement")) tc.statement = j.at("statement").get<std::string>();
    tc.gold = GoldLabelFromString(j.at("gold").get<std::string>());
    if (j.contains("meta")) tc.meta = j.at("meta").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("bad test case: ") + e.what());
  }
  Validate(tc);
  return tc;
}

DatasetSpec DatasetSpecFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  DatasetSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.path = j.at("path").get<std::string>();
    if (spec.path.is_relative() && !base_dir.empty()) spec.path = base_dir / spec.path;
    spec.format = FormatFromString(j.at("format").get<std::string>());
    spec.column_map = j.at("column_map").get<std::map<std::string, std::string>>();
    spec.shape = TaskShapeFromString(j.at("shape").get<std::string>());
    spec.preprocess = PreprocessFromString(j.value("preprocess", "none"));
    spec.has_header = j.value("has_header", true);
    spec.meta_columns = j.value("meta_columns", std::vector<std::string>{});
    if (j.contains("label_semantics")) {
      for (const auto& [raw, gold] : j.at("label_semantics").items()) {
        spec.label_semantics[raw] = GoldLabelFromString(gold.get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("bad dataset spec: ") + e.what());
  }
  if (spec.name.empty()) Fail(ErrorCode::kInvalidArgument, "dataset spec needs a name");
  for (const auto& field : RequiredFields(spec)) {
    if (!spec.column_map.count(field)) {
      Fail(ErrorCode::kInvalidArgument,
           "dataset spec '" + spec.name + "': column_map lacks '" + field + "'");
    }
  }
  const bool needs_labels = spec.preprocess == Preprocess::kNone &&
                            spec.shape != TaskShape::kPairwiseComparison;
  if (needs_labels && spec.label_semantics.empty()) {
    Fail(ErrorCode::kInvalidArgument,
         "dataset spec '" + spec.name + "': label_semantics is empty");
  }
  return spec;
}

DatasetSpec LoadDatasetSpec(const std::filesystem::path& spec_file) {
  const auto j = nlohmann::json::parse(ReadFile(spec_file), nullptr, false);
  if (j.is_discarded()) Fail(ErrorCode::kParse, "'" + spec_file.string() + "' is not JSON");
  return DatasetSpecFromJson(j, spec_file.parent_path());
}

std::vector<std::vector<std::string>> ParseDelimited(std::string_view text, char delimiter) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool row_has_content = false;

  const auto end_row = [&] {
    row.push_back(std::move(cell));
    cell.clear();
    if (row_has_content || row.size() > 1 || !row.front().empty()) rows.push_back(std::move(row));
    row.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"' && cell.empty()) {
      in_quotes = true;
      row_has_content = true;
    } else if (c == delimiter) {
      row.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_row();
    } else {
      cell.push_back(c);
    }
  }
  if (!cell.empty() || !row.empty() || row_has_content) end_row();
  return rows;
}

LoadResult PreprocessSocialChem(const std::vector<RawRow>& rows, const DatasetSpec& spec) {
  LoadResult out;
  for (const auto& row : rows) {
    const auto skip = [&](SkipKind kind, std::string reason) {
      out.skipped.push_back({row.index, kind, std::move(reason)});
    };
    const std::string* category = Cell(row, spec, "category");
    const std::string* agreement_text = Cell(row, spec, "agreement");
    const std::string* judgment_text = Cell(row, spec, "judgment");
    const std::string* scenario = Cell(row, spec, "scenario");
    if (!category || !agreement_text || !judgment_text || !scenario) {
      skip(SkipKind::kMalformed, "missing column");
      continue;
    }
    if (Trim(*category) != kSocialChemCategory) {
      skip(SkipKind::kFiltered, "category '" + Trim(*category) + "'");
      continue;
    }
    const auto agreement = ParseNumber(*agreement_text);
    if (!agreement || *agreement < 0.0 || *agreement > 1.0) {
      skip(SkipKind::kMalformed, "agreement '" + Trim(*agreement_text) + "' is not a number in [0,1]");
      continue;
    }
    if (!(*agreement > kSocialChemAgreementFloor)) {
      skip(SkipKind::kFiltered, "agreement " + Trim(*agreement_text) + " not above 0.75");
      continue;
    }
    const std::string judgment = Trim(*judgment_text);
    if (judgment.size() != 1 || judgment[0] < '0' || judgment[0] > '4') {
      skip(SkipKind::kMalformed, "judgment '" + judgment + "' outside {0,1,2,3,4}");
      continue;
    }
    if (Trim(*scenario).empty()) {
      skip(SkipKind::kMalformed, "empty scenario");
      continue;
    }
    TestCase tc = BaseCase(row, spec);
    tc.shape = TaskShape::kSingleScenario;
    tc.scenario = *scenario;
    tc.gold = judgment[0] <= '1' ? GoldLabel::kWrong : GoldLabel::kNotWrong;
    tc.meta["agreement"] = Trim(*agreement_text);
    tc.meta["category"] = Trim(*category);
    tc.meta["judgment"] = judgment;
    out.cases.push_back(std::move(tc));
  }
  return out;
}

LoadResult Load(const DatasetSpec& spec) {
  LoadResult result;
  std::vector<RawRow> rows = ReadRows(spec, result.skipped);
  const std::size_t total = rows.size() + result.skipped.size();

  if (spec.preprocess == Preprocess::kSocialChem101) {
    LoadResult pre = PreprocessSocialChem(rows, spec);
    result.cases = std::move(pre.cases);
    result.skipped.insert(result.skipped.end(), pre.skipped.begin(), pre.skipped.end());
  } else {
    for (const auto& row : rows) {
      TestCase tc;
      if (auto reason = MapRow(row, spec, tc)) {
        result.skipped.push_back({row.index, SkipKind::kMalformed, std::move(*reason)});
      } else {
        result.cases.push_back(std::move(tc));
      }
    }
  }
  std::sort(result.skipped.begin(), result.skipped.end(),
            [](const SkipRecord& a, const SkipRecord& b) { return a.row_index < b.row_index; });

  std::size_t malformed = 0;
  for (const auto& s : result.skipped) malformed += s.kind == SkipKind::kMalformed;
  if (total > 0 && static_cast<double>(malformed) > kMaxMalformedFraction * static_cast<double>(total)) {
    std::string msg = "dataset '" + spec.name + "': " + std::to_string(malformed) + " of " +
                      std::to_string(total) + " rows malformed (limit 5%)";
    for (std::size_t i = 0; i < result.skipped.size() && i < 5; ++i) {
      if (result.skipped[i].kind != SkipKind::kMalformed) continue;
      msg += "; row " + std::to_string(result.skipped[i].row_index) + ": " + result.skipped[i].reason;
    }
    Fail(ErrorCode::kParse, msg);
  }
  return result;
}

std::vector<TestCase> Sample(const std::vector<TestCase>& cases, std::size_t n,
                             std::uint64_t seed) {
  if (n == 0) Fail(ErrorCode::kInvalidArgument, "sample size must be positive");
  if (n > cases.size()) {
    Fail(ErrorCode::kInvalidArgument, "cannot sample " + std::to_string(n) + " cases from " +
                                          std::to_string(cases.size()));
  }
  // Selection sampling: visit items in order, keeping each with probability
  // (still needed) / (still unseen). Uses raw engine output only, so the
  // result does not depend on the standard library's distributions.
  std::mt19937_64 rng(seed);
  std::vector<TestCase> out;
  out.reserve(n);
  const std::size_t total = cases.size();
  for (std::size_t seen = 0; seen < total && out.size() < n; ++seen) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (static_cast<double>(total - seen) * u < static_cast<double>(n - out.size())) {
      out.push_back(cases[seen]);
    }
  }
  return out;
}

std::vector<TestCase> ReadCasesJsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open case file '" + path.string() + "'");
  std::vector<TestCase> cases;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (Trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": not JSON");
    }
    cases.push_back(TestCaseFromJson(j));
  }
  return cases;
}

void WriteCasesJsonl(const std::filesystem::path& path, const std::vector<TestCase>& cases) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  for (const auto& tc : cases) out << ToJson(tc).dump() << '\n';
  if (!out) Fail(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace moraleval
