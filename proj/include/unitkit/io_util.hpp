// Copyright 2026 The unitkit Authors
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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace unitkit {

/// Reads a whole file into memory. Throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

/// Splits on a single delimiter, keeping empty fields.
std::vector<std::string_view> split(std::string_view text, char delim);

/// Splits on runs of ASCII whitespace, dropping empty fields.
std::vector<std::string_view> split_ws(std::string_view text);

/// Parses a full-string integer or floating-point value; throws FormatError.
std::uint64_t parse_u64(std::string_view text);
double parse_f64(std::string_view text);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace unitkit
