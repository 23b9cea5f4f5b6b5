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


#include "cdrift/vocabulary.hpp"

#include <fstream>
#include <sstream>

#include "cdrift/error.hpp"

namespace cdrift {

namespace {

bool has_space(std::string_view s) { return s.find_first_of(" \t\r\n") != std::string_view::npos; }

TokenId parse_header_id(std::string_view header, std::string_view key) {
  std::string needle = std::string(key) + "=";
  auto pos = header.find(needle);
  if (pos == std::string_view::npos)
    throw Error(ErrorCode::ParseError, "vocabulary header lacks '" + std::string(key) + "'", 1);
  pos += needle.size();
  std::size_t end = pos;
  while (end < header.size() && header[end] >= '0' && header[end] <= '9') ++end;
  if (end == pos) throw Error(ErrorCode::ParseError, "malformed id for " + std::string(key), 1);
  return static_cast<TokenId>(std::stoul(std::string(header.substr(pos, end - pos))));
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens, ThinkMarkers markers)
    : tokens_(std::move(tokens)), markers_(markers) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty() || has_space(t))
      throw Error(ErrorCode::ParseError, "invalid token text at id " + std::to_string(i));
    if (!lookup_.emplace(t, static_cast<TokenId>(i)).second)
      throw Error(ErrorCode::DuplicateId, "token '" + t + "' appears twice");
  }
  if (markers_.open >= tokens_.size() || markers_.close >= tokens_.size() ||
      markers_.open == markers_.close)
    throw Error(ErrorCode::ParseError, "think markers must be two distinct in-range ids");
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("#vocab", 0) != 0)
    throw Error(ErrorCode::ParseError, "vocabulary must start with a '#vocab' header", 1);
  ThinkMarkers markers{parse_header_id(line, "think_open"), parse_header_id(line, "think_close")};
  std::vector<std::string> tokens;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens), markers);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open vocabulary file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Vocabulary::serialize() const {
  std::string out = "#vocab think_open=" + std::to_string(markers_.open) +
                    " think_close=" + std::to_string(markers_.close) + "\n";
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

std::optional<TokenId> Vocabulary::find(std::string_view text) const {
  auto it = lookup_.find(std::string(text));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    auto id = find(word);
    if (!id) throw Error(ErrorCode::UnknownToken, "'" + word + "' is not in the vocabulary");
    out.push_back(*id);
  }
  return out;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out += ' ';
    out += id < tokens_.size() ? tokens_[id] : "<oov:" + std::to_string(id) + ">";
  }
  return out;
}

}  // namespace cdrift
