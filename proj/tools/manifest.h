/*
 * Copyright 2026 The simattr Authors.
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

#ifndef SIMATTR_TOOLS_MANIFEST_H_
#define SIMATTR_TOOLS_MANIFEST_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace simattr::cli {

inline constexpr std::string_view kToolVersion = "0.3.0";

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Reproducibility record written next to every command's outputs.
struct RunManifest {
  std::string command;
  // Full argument vector (without the program name); replaying it
  // reproduces the outputs.
  std::vector<std::string> args;
  // Every option with its resolved value.
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::string tool_version{kToolVersion};
  std::string started_at;
  std::string finished_at;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

RunManifest read_manifest(const std::filesystem::path& path);

// UTC timestamp, ISO 8601 with second resolution.
std::string utc_now();

// Writes `contents` to path.tmp and renames it over `path`.
void write_atomically(const std::filesystem::path& path, std::string_view contents);

}  // namespace simattr::cli

#endif  // SIMATTR_TOOLS_MANIFEST_H_
