// Copyright 2026 The foodmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "foodmil/error.hpp"

namespace foodmil {

inline constexpr const char* kToolVersion = "0.1.0";

/// Hex SHA-256 of a file's bytes.
inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 unavailable");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

/// Everything needed to re-run an artifact-producing command: the fully
/// resolved argument list (defaults included) and digests of its inputs.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> args;            // resolved, without program and subcommand names
  nlohmann::json config;                    // option name -> value
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::uint64_t seed = 0;
  std::string version = kToolVersion;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"tool", "foodmil"},   {"version", m.version}, {"subcommand", m.subcommand}, {"args", m.args},
          {"config", m.config},  {"inputs", m.inputs},   {"seed", m.seed}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.subcommand = j.at("subcommand").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config = j.value("config", nlohmann::json::object());
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.version = j.value("version", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

inline void save_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path);
  out << to_json(m).dump(2) << '\n';
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest " + path + ": " + e.what());
  }
}

}  // namespace foodmil
