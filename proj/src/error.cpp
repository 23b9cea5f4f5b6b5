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


#include "cdrift/error.hpp"

namespace cdrift {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::DuplicateRelation: return "DuplicateRelation";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::UnknownEntity: return "UnknownEntity";
    case ErrorCode::UnknownAttribute: return "UnknownAttribute";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::UnterminatedThinkSpan: return "UnterminatedThinkSpan";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
    case ErrorCode::BadMask: return "BadMask";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::SpanMismatch: return "SpanMismatch";
    case ErrorCode::NoMentions: return "NoMentions";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::NoPairsAfterFilter: return "NoPairsAfterFilter";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace {

std::string format_message(ErrorCode code, const std::string& message, std::size_t line) {
  std::string out(to_string(code));
  if (line != 0) out += " (line " + std::to_string(line) + ")";
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::size_t line)
    : std::runtime_error(format_message(code, message, line)), code_(code), line_(line), detail_(message) {}

}  // namespace cdrift
