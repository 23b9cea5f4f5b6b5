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


#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cdrift/error.hpp"
#include "cdrift/manifest.hpp"
#include "cdrift/toy_policy.hpp"

namespace cdrift {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'D', 'R', 'I', 'F', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size())
    throw Error(ErrorCode::ParseError, "checkpoint is truncated");
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  offset += sizeof(T);
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

}  // namespace

std::string encode_checkpoint(const PolicyParams& params) {
  params.validate();
  json header = {{"features", to_json(params.features)},
                 {"labels", params.labels},
                 {"token_weights", {params.token_weights.rows, params.token_weights.cols}},
                 {"head_weights", {params.head_weights.rows, params.head_weights.cols}}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (double w : params.token_weights.data) put_le<double>(out, w);
  for (double w : params.head_weights.data) put_le<double>(out, w);
  return out;
}

PolicyParams decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::ParseError, "not a checkpoint (bad magic)");
  std::size_t offset = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, offset);
  if (version != kVersion)
    throw Error(ErrorCode::ParseError, "unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, offset);
  if (offset + header_len > bytes.size()) throw Error(ErrorCode::ParseError, "checkpoint is truncated");
  json header = json::parse(bytes.substr(offset, header_len), nullptr, false);
  offset += header_len;
  if (header.is_discarded()) throw Error(ErrorCode::ParseError, "checkpoint header is not JSON");

  PolicyParams p;
  try {
    p.features = feature_map_from_json(header.at("features"));
    p.labels = header.at("labels").get<std::vector<std::string>>();
    auto tw = header.at("token_weights").get<std::vector<std::size_t>>();
    auto hw = header.at("head_weights").get<std::vector<std::size_t>>();
    if (tw.size() != 2 || hw.size() != 2) throw Error(ErrorCode::ParseError, "bad matrix dims");
    p.token_weights = Matrix(tw[0], tw[1]);
    p.head_weights = Matrix(hw[0], hw[1]);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint header: ") + e.what());
  }
  const std::size_t expected =
      (p.token_weights.data.size() + p.head_weights.data.size()) * sizeof(double);
  if (bytes.size() - offset != expected)
    throw Error(ErrorCode::ParseError, "checkpoint payload size does not match its header");
  for (double& w : p.token_weights.data) w = get_le<double>(bytes, offset);
  for (double& w : p.head_weights.data) w = get_le<double>(bytes, offset);
  p.validate();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  write_file_atomic(path, encode_checkpoint(params));
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace cdrift
