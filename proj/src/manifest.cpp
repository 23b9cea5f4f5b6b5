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


#include "cdrift/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <sstream>

#include "cdrift/error.hpp"

namespace cdrift {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::InvariantViolation, "sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.string(), sha256_file(path)});
}

void RunManifest::add_output(const std::filesystem::path& path) {
  outputs.push_back({path.string(), sha256_file(path)});
}

json RunManifest::to_json() const {
  auto digests = [](const std::vector<FileDigest>& files) {
    json arr = json::array();
    for (const auto& f : files) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return arr;
  };
  return {{"command", command},
          {"config", config},
          {"seed", seed},
          {"inputs", digests(inputs)},
          {"outputs", digests(outputs)},
          {"tool_version", tool_version}};
}

RunManifest RunManifest::from_json(const json& doc) {
  RunManifest m;
  try {
    m.command = doc.at("command").get<std::string>();
    m.config = doc.at("config");
    m.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& f : doc.at("inputs"))
      m.inputs.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
    for (const auto& f : doc.at("outputs"))
      m.outputs.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
    m.tool_version = doc.at("tool_version").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  return m;
}

void RunManifest::write(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump(2) + "\n");
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::ParseError, "manifest is not JSON");
  return from_json(doc);
}

std::vector<std::string> RunManifest::verify() const {
  std::vector<std::string> bad;
  auto check = [&](const FileDigest& f) {
    std::error_code ec;
    if (!std::filesystem::exists(f.path, ec) || sha256_file(f.path) != f.sha256) bad.push_back(f.path);
  };
  for (const auto& f : inputs) check(f);
  for (const auto& f : outputs) check(f);
  return bad;
}

}  // namespace cdrift
