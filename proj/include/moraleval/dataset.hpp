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

// Dataset ingestion: external CSV/TSV/JSONL files are mapped onto TestCase
// through a declarative DatasetSpec, optionally filtered (Social-Chem-101)
// and sampled. The canonical on-disk form is one TestCase per JSONL line.

#ifndef MORALEVAL_DATASET_HPP_
#define MORALEVAL_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "moraleval/theory.hpp"

namespace moraleval {

enum class GoldLabel {
  kWrong,
  kNotWrong,
  kReasonable,
  kUnreasonable,
  kFirstMorePleasant,
};

std::string_view ToString(GoldLabel gold);
GoldLabel GoldLabelFromString(std::string_view s);
TaskShape ShapeForGold(GoldLabel gold);

struct TestCase {
  std::string id;
  std::string dataset;
  TaskShape shape = TaskShape::kSingleScenario;
  std::string scenario;
  std::optional<std::string> scenario_b;
  std::optional<std::string> statement;
  GoldLabel gold = GoldLabel::kNotWrong;
  std::map<std::string, std::string> meta;

  friend bool operator==(const TestCase&, const TestCase&) = default;
};

// Throws kInvalidArgument naming the case id when an invariant is broken.
void Validate(const TestCase& tc);

nlohmann::ordered_json ToJson(const TestCase& tc);
TestCase TestCaseFromJson(const nlohmann::json& j);

enum class FileFormat { kCsv, kTsv, kJsonl };
enum class Preprocess { kNone, kSocialChem101 };

struct DatasetSpec {
  std::string name;
  std::filesystem::path path;
  FileFormat format = FileFormat::kCsv;
  // Logical field -> column name (or zero-based column index as decimal text
  // when has_header is false). Logical fields: scenario, scenario_b,
  // statement, label; SocialChem101 also needs category, agreement, judgment.
  std::map<std::string, std::string> column_map;
  // Raw label text -> gold label. Unused for pairwise and SocialChem101.
  std::map<std::string, GoldLabel> label_semantics;
  TaskShape shape = TaskShape::kSingleScenario;
  Preprocess preprocess = Preprocess::kNone;
  bool has_header = true;
  // Extra columns copied into TestCase::meta verbatim.
  std::vector<std::string> meta_columns;
};

// Relative paths inside the spec file resolve against the spec's directory.
DatasetSpec LoadDatasetSpec(const std::filesystem::path& spec_file);
DatasetSpec DatasetSpecFromJson(const nlohmann::json& j,
                                const std::filesystem::path& base_dir = {});

enum class SkipKind { kMalformed, kFiltered };

struct SkipRecord {
  std::size_t row_index = 0;
  SkipKind kind = SkipKind::kMalformed;
  std::string reason;
};

struct LoadResult {
  std::vector<TestCase> cases;
  std::vector<SkipRecord> skipped;
};

// Rows that are more than this fraction malformed abort the load.
inline constexpr double kMaxMalformedFraction = 0.05;

// One raw row: column name -> cell text, plus its zero-based data row index.
struct RawRow {
  std::size_t index = 0;
  std::map<std::string, std::string> cells;
};

// Parses delimited text (RFC 4180 quoting) into rows of cells.
std::vector<std::vector<std::string>> ParseDelimited(std::string_view text, char delimiter);

LoadResult Load(const DatasetSpec& spec);

// Keeps rows with category "morality/ethics" and agreement > 0.75; the
// 5-way judgment {0,1} maps to Wrong and {2,3,4} to NotWrong.
LoadResult PreprocessSocialChem(const std::vector<RawRow>& rows, const DatasetSpec& spec);

inline constexpr std::string_view kSocialChemCategory = "morality/ethics";
inline constexpr double kSocialChemAgreementFloor = 0.75;

// Uniform sample without replacement, preserving input order. Deterministic
// for a fixed (cases, n, seed) on every platform.
std::vector<TestCase> Sample(const std::vector<TestCase>& cases, std::size_t n,
                             std::uint64_t seed);

std::vector<TestCase> ReadCasesJsonl(const std::filesystem::path& path);
void WriteCasesJsonl(const std::filesystem::path& path, const std::vector<TestCase>& cases);

}  // namespace moraleval

#endif  // MORALEVAL_DATASET_HPP_
