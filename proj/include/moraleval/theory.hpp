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

// Registry of theory-guided instruction templates.
//
// Every (theory, task shape) pair maps to one InstructionTemplate: the named
// analysis fields the model is asked to fill in, followed by a task-specific
// judgment question. Vanilla templates carry no analysis fields.

#ifndef MORALEVAL_THEORY_HPP_
#define MORALEVAL_THEORY_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace moraleval {

enum class TheoryKind {
  kVanilla,
  kJustice,
  kDeontology,
  kUtilitarianism,
  kTdmGen,
  kTdmCulture,
};

inline constexpr std::string_view kDefaultCulture = "English-speaking";

class Theory {
 public:
  // Throws kInvalidArgument unless culture is present (and non-empty) exactly
  // when kind is kTdmCulture.
  explicit Theory(TheoryKind kind, std::optional<std::string> culture = {});

  static Theory Vanilla() { return Theory(TheoryKind::kVanilla); }
  static Theory Justice() { return Theory(TheoryKind::kJustice); }
  static Theory Deontology() { return Theory(TheoryKind::kDeontology); }
  static Theory Utilitarianism() { return Theory(TheoryKind::kUtilitarianism); }
  static Theory TdmGen() { return Theory(TheoryKind::kTdmGen); }
  static Theory TdmCulture(std::string culture = std::string(kDefaultCulture)) {
    return Theory(TheoryKind::kTdmCulture, std::move(culture));
  }

  // Stable textual id: "vanilla", "justice", "deontology", "utilitarianism",
  // "tdm-gen", "tdm-culture:<culture>".
  std::string Id() const;

  // Inverse of Id(). Also accepts the short aliases "just", "deont", "util"
  // and "tdm-en" (= tdm-culture:English-speaking).
  static Theory FromId(std::string_view id);

  TheoryKind kind() const { return kind_; }
  const std::optional<std::string>& culture() const { return culture_; }

  friend bool operator==(const Theory&, const Theory&) = default;

 private:
  TheoryKind kind_;
  std::optional<std::string> culture_;
};

enum class TaskShape {
  kSingleScenario,   // commonsense morality and Justice items
  kExemptionOrRole,  // Deontology: scenario plus exemption/task statement
  kPairwiseComparison,  // Utilitarianism: two scenarios, pick the more pleasant
};

enum class JudgmentDomain {
  kBinaryMorality01,          // 0 = in line with morality, 1 = not
  kReasonable1Unreasonable0,  // 1 = reasonable, 0 = unreasonable
  kPairChoice01,              // 0 = Scenario 0, 1 = Scenario 1
};

std::string_view ToString(TaskShape shape);
std::string_view ToString(JudgmentDomain domain);
TaskShape TaskShapeFromString(std::string_view s);
JudgmentDomain JudgmentDomainFromString(std::string_view s);
JudgmentDomain DomainForShape(TaskShape shape);

struct AnalysisField {
  std::string json_key;
  std::string instruction;
  std::string format_note;

  friend bool operator==(const AnalysisField&, const AnalysisField&) = default;
};

inline constexpr std::string_view kFieldFormatNote = "[Be brief and concise]";
inline constexpr std::string_view kJudgmentFormatNote =
    "[Answer this question with number only]";
inline constexpr std::string_view kJudgmentKey = "Moral judgment";

struct InstructionTemplate {
  Theory theory = Theory::Vanilla();
  TaskShape shape = TaskShape::kSingleScenario;
  std::vector<AnalysisField> analysis_fields;
  std::string judgment_key;
  std::string judgment_question;
  // The shorter wording from the prompt skeleton overview; only differs from
  // judgment_question for single-scenario templates.
  std::string judgment_question_alt;
  // The answer choices as they appear inside both question wordings, and the
  // same choices listed in reverse order.
  std::string choices;
  std::string choices_swapped;
  JudgmentDomain judgment_domain = JudgmentDomain::kBinaryMorality01;
  std::string preamble;
  // Whether field format notes are printed in front of each field
  // instruction. The TDM scaffold prints its three questions bare.
  bool inline_field_notes = true;
  // Text placed after the closing quote of each input line ("." or "").
  std::string input_terminator;

  friend bool operator==(const InstructionTemplate&,
                         const InstructionTemplate&) = default;
};

class TheoryRegistry {
 public:
  static const TheoryRegistry& Default();

  // Returns the canonical template. Every pair is currently supported;
  // kUnsupported is reserved for future restrictions.
  InstructionTemplate Get(const Theory& theory, TaskShape shape) const;

  // Deterministic: theory kind order, then shape order. TdmCulture appears
  // once, under kDefaultCulture.
  std::vector<std::pair<Theory, TaskShape>> ListSupported() const;

  // Version tag embedded in run manifests and the template export.
  std::string_view Version() const { return "templates-v1"; }

  nlohmann::ordered_json ExportJson() const;

 private:
  TheoryRegistry() = default;
};

nlohmann::ordered_json ToJson(const InstructionTemplate& tmpl);

}  // namespace moraleval

#endif  // MORALEVAL_THEORY_HPP_
