// Copyright 2026 The cdrift Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cdrift {

enum class ErrorCode {
  ParseError,
  MissingReference,
  DuplicateRelation,
  DuplicateId,
  UnknownCategory,
  UnknownEntity,
  UnknownAttribute,
  UnknownToken,
  NotNormalized,
  UnterminatedThinkSpan,
  LengthMismatch,
  DegenerateFrame,
  BadMask,
  TooShort,
  SpanMismatch,
  NoMentions,
  EmptyPool,
  EmptyBatch,
  NoPairsAfterFilter,
  InfeasibleConfig,
  InvalidConfig,
  InvariantViolation,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `line()` is 1-based and only set for
/// errors that originate in a line-delimited input; 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0);

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }
  /// The message without the code and line prefix.
  const std::string& detail() const noexcept { return detail_; }
  /// Same error attributed to `line`.
  Error at_line(std::size_t line) const { return Error(code_, detail_, line); }

 private:
  ErrorCode code_;
  std::size_t line_;
  std::string detail_;
};

}  // namespace cdrift
