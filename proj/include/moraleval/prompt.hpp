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

// Prompt assembly. A prompt is the input block, the step-by-step preamble and
// a JSON scaffold listing the analysis fields and the judgment question.
//
// Whitespace policy (golden files under tests/golden follow it):
//   * one input per line: `Label: "<escaped text>"<terminator>`
//   * the preamble on its own line, then `{` on its own line
//   * one scaffold entry per line, indented by two spaces, `,` after all but
//     the last entry
//   * `}` followed by a single newline ends the prompt

#ifndef MORALEVAL_PROMPT_HPP_
#define MORALEVAL_PROMPT_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "moraleval/dataset.hpp"
#include "moraleval/theory.hpp"

namespace moraleval {

enum class BracketStyle { kParentheses, kSquareBrackets };
enum class QuestionWording { kCanonical, kAlternate };

struct PromptVariant {
  bool choice_order_swapped = false;
  BracketStyle bracket_style = BracketStyle::kParentheses;
  QuestionWording wording = QuestionWording::kCanonical;

  friend bool operator==(const PromptVariant&, const PromptVariant&) = default;
};

struct Method {
  Theory theory = Theory::Vanilla();
  PromptVariant variant;

  // "<theory id>" followed by "+swap", "+square" and "+alt" for each
  // non-default variant setting, in that order.
  std::string Id() const;
  static Method FromId(std::string_view id);

  friend bool operator==(const Method&, const Method&) = default;
};

struct RenderedPrompt {
  std::string text;
  std::vector<std::string> expected_keys;
  std::string judgment_key;
  JudgmentDomain judgment_domain = JudgmentDomain::kBinaryMorality01;
  std::string prompt_hash;
  // Pairwise only: dataset index of the scenario shown first and second.
  std::vector<int> presentation_order;
  // Pairwise only: answer label -> dataset index. Labels travel with their
  // scenarios, so this stays the identity even when presentation is swapped.
  std::vector<int> choice_remap;
};

// Throws kInvalidArgument on a shape mismatch: the case's fields do not fit
// its shape, or expected_shape is given and differs from the case's shape.
RenderedPrompt Render(const TestCase& tc, const Method& method,
                      std::optional<TaskShape> expected_shape = std::nullopt,
                      const TheoryRegistry& registry = TheoryRegistry::Default());

// Default, choice-order-swapped and bracket-swapped prompts, in that order.
std::vector<RenderedPrompt> RenderVariantSuite(const TestCase& tc, const Theory& theory);

// Escapes text for placement between double quotes in the scaffold.
std::string EscapeQuoted(std::string_view text);

nlohmann::ordered_json ToJson(const RenderedPrompt& prompt);
RenderedPrompt RenderedPromptFromJson(const nlohmann::json& j);

}  // namespace moraleval

#endif  // MORALEVAL_PROMPT_HPP_
