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

#ifndef MORALEVAL_DIGEST_HPP_
#define MORALEVAL_DIGEST_HPP_

#include <string>
#include <string_view>

namespace moraleval {

// Lowercase hex SHA-256 of the exact bytes (64 characters).
std::string Sha256Hex(std::string_view bytes);

}  // namespace moraleval

#endif  // MORALEVAL_DIGEST_HPP_
