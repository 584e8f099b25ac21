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

#include "unitkit/packer.hpp"

#include <sstream>
#include <string>

#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"

namespace unitkit {

PackedDataset pack(std::span<const UnitSequence> corpus, std::uint32_t k,
                   std::uint32_t chunk_len, bool use_separator) {
  if (corpus.empty()) throw InvalidArgument("cannot pack an empty corpus");
  if (chunk_len == 0) throw InvalidArgument("chunk_len must be >= 1");
  if (k == 0) throw InvalidArgument("k must be >= 1");

  PackedDataset out;
  out.chunk_len = chunk_len;
  out.vocab_size = use_separator ? k + 1 : k;
  if (use_separator) out.separator_id = k;

  std::vector<std::uint32_t> current;
  current.reserve(chunk_len);
  auto push = [&](std::uint32_t token) {
    current.push_back(token);
    if (current.size() == chunk_len) {
      out.chunks.push_back(std::move(current));
      current.clear();
      current.reserve(chunk_len);
    }
  };
  for (const auto& seq : corpus) {
    for (auto u : seq.units) {
      if (u >= k) {
        throw InvalidArgument("unit " + std::to_string(u) + " in " +
                              seq.utt_id + " is outside [0, " +
                              std::to_string(k) + ")");
      }
      push(u);
    }
    if (use_separator) push(k);
  }
  out.dropped_tail = current.size();
  out.tail = std::move(current);
  return out;
}

void write_packed(const PackedDataset& packed,
                  const std::filesystem::path& destination) {
  std::ostringstream out;
  out << "#chunk_len=" << packed.chunk_len << ";vocab=" << packed.vocab_size
      << ";sep=";
  if (packed.separator_id) {
    out << *packed.separator_id;
  } else {
    out << "none";
  }
  out << '\n';
  for (const auto& chunk : packed.chunks) {
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (i) out << ' ';
      out << chunk[i];
    }
    out << '\n';
  }
  write_file_atomic(destination, out.str());
}

PackedDataset read_packed(const std::filesystem::path& source) {
  const std::string text = read_file(source);
  auto lines = split(text, '\n');
  if (lines.empty() || !lines[0].starts_with('#')) {
    throw FormatError(FormatError::Kind::malformed, "missing packed header");
  }
  PackedDataset out;
  bool have_len = false;
  bool have_vocab = false;
  for (auto field : split(lines[0].substr(1), ';')) {
    auto eq = field.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError(FormatError::Kind::malformed, "bad header field");
    }
    auto key = field.substr(0, eq);
    auto value = field.substr(eq + 1);
    if (key == "chunk_len") {
      out.chunk_len = static_cast<std::uint32_t>(parse_u64(value));
      have_len = true;
    } else if (key == "vocab") {
      out.vocab_size = static_cast<std::uint32_t>(parse_u64(value));
      have_vocab = true;
    } else if (key == "sep") {
      if (value != "none") {
        out.separator_id = static_cast<std::uint32_t>(parse_u64(value));
      }
    }
  }
  if (!have_len || !have_vocab || out.chunk_len == 0) {
    throw FormatError(FormatError::Kind::malformed,
                      "packed header lacks chunk_len or vocab");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::uint32_t> chunk;
    chunk.reserve(out.chunk_len);
    for (auto tok : split_ws(lines[i])) {
      const auto v = parse_u64(tok);
      if (v >= out.vocab_size) {
        throw FormatError(FormatError::Kind::malformed,
                          "token outside vocabulary");
      }
      chunk.push_back(static_cast<std::uint32_t>(v));
    }
    if (chunk.size() != out.chunk_len) {
      throw FormatError(FormatError::Kind::size_mismatch,
                        "chunk " + std::to_string(i) + " has " +
                            std::to_string(chunk.size()) + " tokens");
    }
    out.chunks.push_back(std::move(chunk));
  }
  return out;
}

}  // namespace unitkit
