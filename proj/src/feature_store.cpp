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

#include "unitkit/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/random.hpp"

namespace unitkit {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kFeatureMagic = "SFEA";
constexpr std::uint16_t kFeatureVersion = 1;
constexpr std::size_t kFeatureHeaderBytes = 20;

void check_utt_id(const std::string& id) {
  if (id.empty()) throw InvalidArgument("empty utt_id");
  if (id.find_first_of("\t\n\r") != std::string::npos) {
    throw InvalidArgument("utt_id contains tab or newline: " + id);
  }
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::uint32_t frames_, std::uint32_t dim_,
                             float hop_ms_, std::vector<float> values_)
    : frames(frames_), dim(dim_), hop_ms(hop_ms_), values(std::move(values_)) {
  validate();
}

void FeatureMatrix::validate() const {
  if (dim == 0) throw InvalidArgument("feature dim must be >= 1");
  if (!(hop_ms > 0.0f) || !std::isfinite(hop_ms)) {
    throw InvalidArgument("hop_ms must be positive and finite");
  }
  if (values.size() != static_cast<std::size_t>(frames) * dim) {
    throw InvalidArgument("feature values length != frames * dim");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite feature value");
  }
}

double CorpusManifest::total_ms() const {
  double total = 0.0;
  for (const auto& e : entries) total += e.duration_ms;
  return total;
}

std::string encode_features(const FeatureMatrix& features) {
  features.validate();
  detail::ByteWriter w;
  w.bytes(kFeatureMagic);
  w.u16(kFeatureVersion);
  w.u16(0);
  w.u32(features.dim);
  w.u32(features.frames);
  w.f32(features.hop_ms);
  w.f32s(features.values);
  return w.data();
}

FeatureMatrix decode_features(std::string_view bytes) {
  using Kind = FormatError::Kind;
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError(Kind::size_mismatch, "feature header truncated");
  }
  detail::ByteReader r(bytes);
  if (r.bytes(4) != kFeatureMagic) {
    throw FormatError(Kind::bad_magic, "not a feature file (bad magic)");
  }
  if (auto version = r.u16(); version != kFeatureVersion) {
    throw FormatError(Kind::version_mismatch,
                      "unsupported feature version " + std::to_string(version));
  }
  r.u16();  // reserved
  FeatureMatrix m;
  m.dim = r.u32();
  m.frames = r.u32();
  m.hop_ms = r.f32();
  const auto count = static_cast<std::uint64_t>(m.frames) * m.dim;
  if (r.remaining() != count * 4) {
    throw FormatError(Kind::size_mismatch,
                      "feature payload is " + std::to_string(r.remaining()) +
                          " bytes, header implies " +
                          std::to_string(count * 4));
  }
  m.values.resize(count);
  for (auto& v : m.values) v = r.f32();
  m.validate();
  return m;
}

void write_features(const UtteranceRecord& record, const fs::path& destination) {
  check_utt_id(record.utt_id);
  write_file_atomic(destination, encode_features(record.features));
}

UtteranceRecord read_features(const fs::path& source) {
  return {source.stem().string(), decode_features(read_file(source))};
}

void validate_manifest(const CorpusManifest& manifest) {
  std::set<std::string_view> seen;
  for (const auto& e : manifest.entries) {
    check_utt_id(e.utt_id);
    if (!seen.insert(e.utt_id).second) {
      throw InvalidArgument("duplicate utt_id in manifest: " + e.utt_id);
    }
    if (!(e.duration_ms >= 0.0)) {
      throw InvalidArgument("negative duration for " + e.utt_id);
    }
  }
}

void write_manifest(const CorpusManifest& manifest, const fs::path& destination) {
  validate_manifest(manifest);
  std::ostringstream out;
  for (const auto& e : manifest.entries) {
    out << e.utt_id << '\t' << e.path.generic_string() << '\t'
        << format_double(e.duration_ms) << '\n';
  }
  write_file_atomic(destination, out.str());
}

CorpusManifest read_manifest(const fs::path& source) {
  CorpusManifest manifest;
  manifest.root = source.parent_path();
  const std::string text = read_file(source);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw FormatError(FormatError::Kind::malformed,
                        source.string() + ":" + std::to_string(line_no) +
                            ": expected 3 tab-separated fields");
    }
    manifest.entries.push_back({std::string(fields[0]),
                                fs::path(std::string(fields[1])),
                                parse_f64(fields[2])});
  }
  validate_manifest(manifest);
  return manifest;
}

CorpusManifest sample_subset(const CorpusManifest& manifest,
                             double target_hours, std::uint64_t seed) {
  if (manifest.entries.empty()) throw InvalidArgument("empty manifest");
  if (!(target_hours > 0.0)) {
    throw InvalidArgument("target_hours must be positive");
  }
  std::vector<std::size_t> order(manifest.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  seeded_shuffle(order.begin(), order.end(), rng);

  const double target_ms = target_hours * 3600.0 * 1000.0;
  CorpusManifest subset;
  subset.root = manifest.root;
  double total = 0.0;
  for (auto idx : order) {
    if (total >= target_ms) break;
    subset.entries.push_back(manifest.entries[idx]);
    total += manifest.entries[idx].duration_ms;
  }
  return subset;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec,
                                   const fs::path& out_dir) {
  const std::uint32_t classes = spec.num_latent_classes;
  if (spec.dim == 0) throw InvalidArgument("synthetic dim must be >= 1");
  if (classes == 0) throw InvalidArgument("num_latent_classes must be >= 1");
  if (!(spec.noise_scale >= 0.0)) {
    throw InvalidArgument("noise_scale must be >= 0");
  }
  if (spec.min_frames > spec.max_frames || spec.min_run == 0 ||
      spec.min_run > spec.max_run) {
    throw InvalidArgument("invalid synthetic frame or run range");
  }
  if (!spec.transitions.empty() &&
      spec.transitions.size() != static_cast<std::size_t>(classes) * classes) {
    throw InvalidArgument("transition matrix must be classes x classes");
  }

  SyntheticCorpus corpus;
  corpus.manifest.root = out_dir;

  // Prototypes are redrawn until pairwise distinct so the zero-noise corpus
  // has exactly `classes` distinct frame vectors.
  Rng proto_rng(spec.prototype_seed.value_or(spec.seed) ^ 0x9e3779b97f4a7c15ULL);
  auto& protos = corpus.prototypes;
  protos.resize(static_cast<std::size_t>(classes) * spec.dim);
  for (std::uint32_t c = 0; c < classes; ++c) {
    bool distinct = false;
    while (!distinct) {
      for (std::uint32_t d = 0; d < spec.dim; ++d) {
        protos[c * spec.dim + d] =
            static_cast<float>(spec.prototype_scale * proto_rng.normal());
      }
      distinct = true;
      for (std::uint32_t o = 0; o < c && distinct; ++o) {
        distinct = !std::equal(protos.begin() + o * spec.dim,
                               protos.begin() + (o + 1) * spec.dim,
                               protos.begin() + c * spec.dim);
      }
    }
  }

  Rng rng(spec.seed);
  auto next_class = [&](std::optional<std::uint32_t> prev) -> std::uint32_t {
    if (spec.transitions.empty() || !prev) {
      return static_cast<std::uint32_t>(rng.below(classes));
    }
    const double* row = spec.transitions.data() + *prev * classes;
    double u = rng.uniform();
    for (std::uint32_t c = 0; c + 1 < classes; ++c) {
      if (u < row[c]) return c;
      u -= row[c];
    }
    return classes - 1;
  };

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());

  const int width = std::max<int>(
      4, static_cast<int>(std::to_string(spec.num_utts).size()));
  for (std::uint32_t u = 0; u < spec.num_utts; ++u) {
    const auto frames = static_cast<std::uint32_t>(
        spec.min_frames + rng.below(spec.max_frames - spec.min_frames + 1ULL));

    // Lay out runs of latent classes covering all frames.
    std::vector<std::uint32_t> run_class;
    std::vector<std::uint32_t> run_len;
    std::optional<std::uint32_t> prev;
    for (std::uint32_t covered = 0; covered < frames;) {
      const auto c = next_class(prev);
      const auto len = static_cast<std::uint32_t>(
          spec.min_run + rng.below(spec.max_run - spec.min_run + 1ULL));
      run_class.push_back(c);
      run_len.push_back(std::min(len, frames - covered));
      covered += run_len.back();
      prev = c;
    }

    std::vector<float> values(static_cast<std::size_t>(frames) * spec.dim);
    std::vector<std::uint32_t> labels(frames);
    std::uint32_t t = 0;
    for (std::size_t r = 0; r < run_class.size(); ++r) {
      const float* from = protos.data() + run_class[r] * spec.dim;
      const float* to = (r + 1 < run_class.size())
                            ? protos.data() + run_class[r + 1] * spec.dim
                            : from;
      for (std::uint32_t i = 0; i < run_len[r]; ++i, ++t) {
        labels[t] = run_class[r];
        const double alpha =
            spec.smooth ? static_cast<double>(i) / run_len[r] : 0.0;
        for (std::uint32_t d = 0; d < spec.dim; ++d) {
          double v = (1.0 - alpha) * from[d] + alpha * to[d];
          if (spec.noise_scale > 0.0) v += spec.noise_scale * rng.normal();
          values[static_cast<std::size_t>(t) * spec.dim + d] =
              static_cast<float>(v);
        }
      }
    }

    std::string index = std::to_string(u);
    index.insert(0, static_cast<std::size_t>(width) - std::min<std::size_t>(
                                                          index.size(), width),
                 '0');
    UtteranceRecord rec{spec.id_prefix + index,
                        FeatureMatrix(frames, spec.dim, spec.hop_ms,
                                      std::move(values))};
    const fs::path rel = rec.utt_id + ".sfea";
    write_features(rec, out_dir / rel);
    corpus.manifest.entries.push_back(
        {rec.utt_id, rel, rec.features.duration_ms()});
    corpus.frame_classes.push_back(std::move(labels));
  }
  write_manifest(corpus.manifest, out_dir / "manifest.tsv");
  return corpus;
}

}  // namespace unitkit
