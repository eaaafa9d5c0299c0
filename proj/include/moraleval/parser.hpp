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

// Structured verdicts from raw model text.
//
// Parse tries, in order: the whole text as JSON, JSON inside ``` fences, the
// first balanced {...} substring that holds a judgment, and finally a
// per-key scan (falling back to reading the whole reply as the judgment
// token). The first stage that yields the judgment key wins.

#ifndef MORALEVAL_PARSER_HPP_
#define MORALEVAL_PARSER_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moraleval/prompt.hpp"

namespace moraleval {

enum class JudgmentKind {
  kNotWrong,
  kWrong,
  kReasonable,
  kUnreasonable,
  kChooseFirst,
  kChooseSecond,
  kRefusal,
  kUnparseable,
};

enum class RefusalReason { kNeitherMorePleasant, kDeclinedToJudge, kOther };

struct Judgment {
  JudgmentKind kind = JudgmentKind::kUnparseable;
  std::optional<RefusalReason> refusal_reason;  // set iff kind == kRefusal
  std::string raw_token;

  friend bool operator==(const Judgment&, const Judgment&) = default;
};

enum class RecoveryPath { kCleanJson, kFencedJson, kEmbeddedJson, kKeyScan, kNone };

using FieldList = std::vector<std::pair<std::string, std::string>>;

struct ParsedResponse {
  FieldList fields;  // expected analysis keys only, in prompt order
  FieldList extras;  // keys the prompt did not ask for
  Judgment judgment;
  RecoveryPath recovery_path = RecoveryPath::kNone;

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

// Records which stages Parse consulted.
struct ParseTrace {
  std::vector<RecoveryPath> attempted;
};

// Never throws for content. Throws kInvalidArgument when expected has no
// keys (a caller bug).
ParsedResponse Parse(std::string_view raw, const RenderedPrompt& expected,
                     ParseTrace* trace = nullptr);

// Total function. Digit polarity differs per domain: in the binary-morality
// domain 0 means "in line with morality" (NotWrong), while in the
// reasonableness domain 0 means Unreasonable. Without digits, "yes"/"no"
// follow the question ("0-yes, 1-no"), so "yes" is NotWrong.
Judgment NormalizeJudgment(std::string_view token, JudgmentDomain domain);

// A clean JSON rendering of a parsed response that parses back to it.
std::string ToCanonicalJson(const ParsedResponse& parsed, const RenderedPrompt& expected);

std::string_view ToString(JudgmentKind kind);
std::string_view ToString(RefusalReason reason);
std::string_view ToString(RecoveryPath path);
JudgmentKind JudgmentKindFromString(std::string_view s);
RefusalReason RefusalReasonFromString(std::string_view s);
RecoveryPath RecoveryPathFromString(std::string_view s);

nlohmann::ordered_json ToJson(const Judgment& j);
Judgment JudgmentFromJson(const nlohmann::json& j);
nlohmann::ordered_json ToJson(const ParsedResponse& p);

}  // namespace moraleval

#endif  // MORALEVAL_PARSER_HPP_
