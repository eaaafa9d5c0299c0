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

#include "moraleval/prompt.hpp"

#include <utility>

#include "moraleval/digest.hpp"
#include "moraleval/error.hpp"

namespace moraleval {
namespace {

constexpr std::string_view kSwapSuffix = "+swap";
constexpr std::string_view kSquareSuffix = "+square";
constexpr std::string_view kAltWordingSuffix = "+alt";

// Swaps round and square brackets in template-authored text.
std::string SwapBrackets(std::string s) {
  for (char& c : s) {
    switch (c) {
      case '(': c = '['; break;
      case ')': c = ']'; break;
      case '[': c = '('; break;
      case ']': c = ')'; break;
      default: break;
    }
  }
  return s;
}

std::string ReplaceOnce(std::string s, std::string_view from, std::string_view to) {
  const auto pos = s.find(from);
  if (pos == std::string::npos) {
    Fail(ErrorCode::kRuntime, "template question lacks its choice list '" +
                                  std::string(from) + "'");
  }
  s.replace(pos, from.size(), to);
  return s;
}

bool EndsWith(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

void CheckShape(const TestCase& tc, std::optional<TaskShape> expected) {
  if (expected && *expected != tc.shape) {
    Fail(ErrorCode::kInvalidArgument,
         "shape mismatch: case '" + tc.id + "' is " + std::string(ToString(tc.shape)) +
             " but " + std::string(ToString(*expected)) + " was expected");
  }
  const bool pairwise = tc.shape == TaskShape::kPairwiseComparison;
  const bool exemption = tc.shape == TaskShape::kExemptionOrRole;
  if (pairwise != tc.scenario_b.has_value() || exemption != tc.statement.has_value()) {
    Fail(ErrorCode::kInvalidArgument, "shape mismatch: case '" + tc.id +
                                          "' fields do not fit shape " +
                                          std::string(ToString(tc.shape)));
  }
}

std::string InputLine(std::string_view label, std::string_view text,
                      std::string_view terminator) {
  std::string line(label);
  line += ": \"";
  line += EscapeQuoted(text);
  line += '"';
  line += terminator;
  line += '\n';
  return line;
}

}  // namespace

std::string Method::Id() const {
  std::string id = theory.Id();
  if (variant.choice_order_swapped) id += kSwapSuffix;
  if (variant.bracket_style == BracketStyle::kSquareBrackets) id += kSquareSuffix;
  if (variant.wording == QuestionWording::kAlternate) id += kAltWordingSuffix;
  return id;
}

Method Method::FromId(std::string_view id) {
  Method m;
  if (EndsWith(id, kAltWordingSuffix)) {
    m.variant.wording = QuestionWording::kAlternate;
    id.remove_suffix(kAltWordingSuffix.size());
  }
  if (EndsWith(id, kSquareSuffix)) {
    m.variant.bracket_style = BracketStyle::kSquareBrackets;
    id.remove_suffix(kSquareSuffix.size());
  }
  if (EndsWith(id, kSwapSuffix)) {
    m.variant.choice_order_swapped = true;
    id.remove_suffix(kSwapSuffix.size());
  }
  m.theory = Theory::FromId(id);
  return m;
}

std::string EscapeQuoted(std::string_view text) {
  const std::string dumped = nlohmann::json(std::string(text))
                                 .dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  return dumped.substr(1, dumped.size() - 2);
}

RenderedPrompt Render(const TestCase& tc, const Method& method,
                      std::optional<TaskShape> expected_shape,
                      const TheoryRegistry& registry) {
  CheckShape(tc, expected_shape);
  const InstructionTemplate tmpl = registry.Get(method.theory, tc.shape);
  const PromptVariant& v = method.variant;
  const bool square = v.bracket_style == BracketStyle::kSquareBrackets;
  const auto styled = [square](std::string s) {
    return square ? SwapBrackets(std::move(s)) : s;
  };

  RenderedPrompt out;
  out.judgment_key = tmpl.judgment_key;
  out.judgment_domain = tmpl.judgment_domain;

  std::string text;
  const std::string& term = tmpl.input_terminator;
  switch (tc.shape) {
    case TaskShape::kSingleScenario:
      text += InputLine("Scenario", tc.scenario, term);
      break;
    case TaskShape::kExemptionOrRole:
      text += InputLine("Scenario", tc.scenario, term);
      text += InputLine("Statement", *tc.statement, term);
      break;
    case TaskShape::kPairwiseComparison: {
      const std::string* scenarios[] = {&tc.scenario, &*tc.scenario_b};
      out.presentation_order = v.choice_order_swapped ? std::vector<int>{1, 0}
                                                      : std::vector<int>{0, 1};
      out.choice_remap = {0, 1};
      for (int idx : out.presentation_order) {
        text += InputLine("Scenario " + std::to_string(idx), *scenarios[idx], term);
      }
      break;
    }
  }

  text += tmpl.preamble;
  text += "\n{\n";
  for (const auto& field : tmpl.analysis_fields) {
    std::string value = field.instruction;
    if (tmpl.inline_field_notes) value = field.format_note + " " + value;
    text += "  \"" + field.json_key + "\": \"" + styled(std::move(value)) + "\",\n";
    out.expected_keys.push_back(field.json_key);
  }

  std::string question = v.wording == QuestionWording::kAlternate
                             ? tmpl.judgment_question_alt
                             : tmpl.judgment_question;
  if (v.choice_order_swapped) {
    question = ReplaceOnce(std::move(question), tmpl.choices, tmpl.choices_swapped);
  }
  text += "  \"" + tmpl.judgment_key + "\": \"" +
          styled(std::string(kJudgmentFormatNote) + " " + question) + "\"\n}\n";
  out.expected_keys.push_back(tmpl.judgment_key);

  out.text = std::move(text);
  out.prompt_hash = Sha256Hex(out.text);
  return out;
}

std::vector<RenderedPrompt> RenderVariantSuite(const TestCase& tc, const Theory& theory) {
  Method base{theory, {}};
  Method swapped = base;
  swapped.variant.choice_order_swapped = true;
  Method bracketed = base;
  bracketed.variant.bracket_style = BracketStyle::kSquareBrackets;
  return {Render(tc, base), Render(tc, swapped), Render(tc, bracketed)};
}

nlohmann::ordered_json ToJson(const RenderedPrompt& p) {
  nlohmann::ordered_json j = {{"text", p.text},
                              {"expected_keys", p.expected_keys},
                              {"judgment_key", p.judgment_key},
                              {"judgment_domain", ToString(p.judgment_domain)},
                              {"prompt_hash", p.prompt_hash}};
  if (!p.presentation_order.empty()) {
    j["presentation_order"] = p.presentation_order;
    j["choice_remap"] = p.choice_remap;
  }
  return j;
}

RenderedPrompt RenderedPromptFromJson(const nlohmann::json& j) {
  RenderedPrompt p;
  try {
    p.text = j.value("text", "");
    p.expected_keys = j.at("expected_keys").get<std::vector<std::string>>();
    p.judgment_key = j.at("judgment_key").get<std::string>();
    p.judgment_domain = JudgmentDomainFromString(j.at("judgment_domain").get<std::string>());
    p.prompt_hash = j.value("prompt_hash", "");
    if (j.contains("presentation_order")) {
      p.presentation_order = j.at("presentation_order").get<std::vector<int>>();
      p.choice_remap = j.at("choice_remap").get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, std::string("bad rendered prompt: ") + e.what());
  }
  return p;
}

}  // namespace moraleval
