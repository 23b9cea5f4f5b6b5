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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cdrift {

using TokenId = std::uint32_t;

struct ThinkMarkers {
  TokenId open = 0;
  TokenId close = 1;
  bool operator==(const ThinkMarkers&) const = default;
};

/// Ordered token table; a token's id is its index.
///
/// File format: a header line `#vocab think_open=<id> think_close=<id>`
/// followed by one token text per line. Token texts are non-empty, unique and
/// contain no whitespace.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, ThinkMarkers markers);

  static Vocabulary parse(std::string_view text);
  static Vocabulary load(const std::filesystem::path& path);
  std::string serialize() const;

  std::size_t size() const { return tokens_.size(); }
  const ThinkMarkers& markers() const { return markers_; }
  const std::string& text(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> find(std::string_view text) const;
  /// Whitespace-split lookup. Throws UnknownToken on the first unknown word.
  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && markers_.open == other.markers_.open &&
           markers_.close == other.markers_.close;
  }

 private:
  std::vector<std::string> tokens_;
  ThinkMarkers markers_;
  std::unordered_map<std::string, TokenId> lookup_;
};

}  // namespace cdrift
