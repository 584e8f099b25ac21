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

#include <cmath>
#include <filesystem>
#include <limits>
#include <bit>
#include <map>
#include <set>

#include "doctest.h"
#include "test_support.hpp"
#include "unitkit/error.hpp"
#include "unitkit/feature_store.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/quantizer.hpp"

using namespace unitkit;
using unitkit::testing::TempDir;

TEST_CASE("empty matrix writes a header-only file and round-trips") {
  TempDir dir;
  UtteranceRecord rec{"empty", FeatureMatrix(0, 4, 20.0f, {})};
  write_features(rec, dir / "empty.sfea");
  CHECK(std::filesystem::file_size(dir / "empty.sfea") == 20);
  const auto back = read_features(dir / "empty.sfea");
  CHECK(back == rec);
  CHECK(back.features.frames == 0);
  CHECK(back.features.dim == 4);
}

TEST_CASE("small matrix round-trips with 20 + 4*T*D bytes") {
  TempDir dir;
  UtteranceRecord rec{"small",
                      FeatureMatrix(2, 3, 20.0f, {1, 2, 3, 4, 5, 6})};
  write_features(rec, dir / "small.sfea");
  CHECK(std::filesystem::file_size(dir / "small.sfea") == 20 + 4 * 2 * 3);
  CHECK(read_features(dir / "small.sfea") == rec);
}

TEST_CASE("header layout is bit-exact little-endian") {
  const auto bytes = encode_features(FeatureMatrix(1, 2, 20.0f, {1.0f, -2.0f}));
  REQUIRE(bytes.size() == 28);
  const unsigned char expected[] = {
      'S', 'F', 'E', 'A', 1, 0, 0, 0,     // magic, version, reserved
      2, 0, 0, 0, 1, 0, 0, 0,             // dim, frames
      0x00, 0x00, 0xa0, 0x41,             // 20.0f
      0x00, 0x00, 0x80, 0x3f,             // 1.0f
      0x00, 0x00, 0x00, 0xc0};            // -2.0f
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    CHECK(static_cast<unsigned char>(bytes[i]) == expected[i]);
  }
}

TEST_CASE("round-trip is bit-exact for random records") {
  TempDir dir;
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto frames = static_cast<std::uint32_t>(rng.below(40));
    const auto dim = static_cast<std::uint32_t>(1 + rng.below(16));
    std::vector<float> values(static_cast<std::size_t>(frames) * dim);
    // Arbitrary finite bit patterns, including subnormals and negative zero.
    for (auto& v : values) {
      float f;
      do {
        f = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()));
      } while (!std::isfinite(f));
      v = f;
    }
    UtteranceRecord rec{"r" + std::to_string(trial),
                        FeatureMatrix(frames, dim, 20.0f, values)};
    const auto path = dir / (rec.utt_id + ".sfea");
    write_features(rec, path);
    const auto back = read_features(path);
    REQUIRE(back.features.values.size() == values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      CHECK(std::bit_cast<std::uint32_t>(back.features.values[i]) ==
            std::bit_cast<std::uint32_t>(values[i]));
    }
  }
}

TEST_CASE("read rejects bad magic, version and truncated payloads") {
  auto bytes = encode_features(FeatureMatrix(2, 3, 20.0f, {1, 2, 3, 4, 5, 6}));

  auto expect_kind = [](const std::string& data, FormatError::Kind kind) {
    try {
      decode_features(data);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.kind() == kind);
    }
  };

  auto bad_magic = bytes;
  bad_magic.replace(0, 4, "XXXX");
  expect_kind(bad_magic, FormatError::Kind::bad_magic);

  auto bad_version = bytes;
  bad_version[4] = 2;
  expect_kind(bad_version, FormatError::Kind::version_mismatch);

  expect_kind(bytes.substr(0, bytes.size() - 4),
              FormatError::Kind::size_mismatch);
  expect_kind(bytes + "xxxx", FormatError::Kind::size_mismatch);
  expect_kind(bytes.substr(0, 10), FormatError::Kind::size_mismatch);
}

TEST_CASE("non-finite values are rejected before writing") {
  TempDir dir;
  FeatureMatrix m;
  m.frames = 1;
  m.dim = 2;
  m.values = {1.0f, std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_AS(write_features({"nan", m}, dir / "nan.sfea"), InvalidArgument);
  CHECK_FALSE(std::filesystem::exists(dir / "nan.sfea"));
  CHECK_THROWS_AS(FeatureMatrix(1, 1, 0.0f, {1.0f}), InvalidArgument);
  CHECK_THROWS_AS(FeatureMatrix(2, 2, 20.0f, {1.0f}), InvalidArgument);
  CHECK_THROWS_AS(write_features({"a\tb", FeatureMatrix(0, 1, 20.0f, {})},
                                 dir / "x.sfea"),
                  InvalidArgument);
}

TEST_CASE("manifest records 20 ms frames as duration") {
  TempDir dir;
  Rng rng(3);
  UtteranceRecord rec{"u", unitkit::testing::random_matrix(rng, 100, 1024)};
  write_features(rec, dir / "u.sfea");
  CorpusManifest m;
  m.entries.push_back({"u", "u.sfea", rec.features.duration_ms()});
  write_manifest(m, dir / "manifest.tsv");
  const auto back = read_manifest(dir / "manifest.tsv");
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].duration_ms == 2000.0);
  CHECK(read_file(dir / "manifest.tsv") == "u\tu.sfea\t2000\n");
  CHECK(read_features(back.resolve(back.entries[0])).features == rec.features);
}

TEST_CASE("manifest rejects duplicate ids and malformed lines") {
  TempDir dir;
  write_file_atomic(dir / "dup.tsv", "a\ta.sfea\t10\na\tb.sfea\t20\n");
  CHECK_THROWS_AS(read_manifest(dir / "dup.tsv"), InvalidArgument);
  write_file_atomic(dir / "bad.tsv", "a\ta.sfea\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.tsv"), FormatError);
}

namespace {

CorpusManifest hours_manifest(std::size_t n, double hours_each) {
  CorpusManifest m;
  for (std::size_t i = 0; i < n; ++i) {
    m.entries.push_back({"u" + std::to_string(i), "u" + std::to_string(i),
                         hours_each * 3600.0 * 1000.0});
  }
  return m;
}

}  // namespace

TEST_CASE("sample_subset returns the whole manifest when it is too short") {
  const auto m = hours_manifest(50, 1.0);
  const auto s = sample_subset(m, 100.0, 1);
  CHECK(s.entries.size() == 50);
  std::set<std::string> ids;
  for (const auto& e : s.entries) ids.insert(e.utt_id);
  CHECK(ids.size() == 50);
}

TEST_CASE("sample_subset picks the minimal prefix deterministically") {
  const auto m = hours_manifest(10, 1.0);
  const auto a = sample_subset(m, 3.0, 7);
  const auto b = sample_subset(m, 3.0, 7);
  CHECK(a.entries.size() == 3);
  CHECK(a.entries == b.entries);
  CHECK_THROWS_AS(sample_subset(CorpusManifest{}, 1.0, 0), InvalidArgument);
  CHECK_THROWS_AS(sample_subset(m, 0.0, 0), InvalidArgument);
}

TEST_CASE("sample_subset minimality over random manifests") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    CorpusManifest m;
    const auto n = 1 + rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) {
      m.entries.push_back({"u" + std::to_string(i), "x",
                           static_cast<double>(1 + rng.below(20000))});
    }
    const double target_hours = (1.0 + rng.below(200000)) / 3.6e6;
    const double target_ms = target_hours * 3.6e6;
    const auto s = sample_subset(m, target_hours, trial);
    CHECK(s.entries == sample_subset(m, target_hours, trial).entries);
    if (m.total_ms() >= target_ms) {
      CHECK(s.total_ms() >= target_ms);
      CHECK(s.total_ms() - s.entries.back().duration_ms < target_ms);
    } else {
      CHECK(s.entries.size() == m.entries.size());
    }
  }
}

TEST_CASE("paper subset size is accepted") {
  const auto m = hours_manifest(300, 0.5);
  CHECK(sample_subset(m, 100.0, 0).entries.size() == 200);
}

TEST_CASE("zero-noise synthetic corpus has exactly the class prototypes") {
  TempDir dir;
  SyntheticSpec spec;
  spec.num_utts = 6;
  spec.num_latent_classes = 3;
  spec.noise_scale = 0.0;
  spec.dim = 5;
  spec.seed = 9;
  const auto corpus = generate_synthetic(spec, dir.path());
  std::set<std::vector<float>> distinct;
  for (const auto& e : corpus.manifest.entries) {
    const auto rec = read_features(corpus.manifest.resolve(e));
    for (std::uint32_t t = 0; t < rec.features.frames; ++t) {
      auto row = rec.features.row(t);
      distinct.emplace(row.begin(), row.end());
    }
  }
  CHECK(distinct.size() == 3);
  const auto reloaded = read_manifest(dir / "manifest.tsv");
  CHECK(reloaded.entries == corpus.manifest.entries);
}

TEST_CASE("synthetic generation is deterministic per seed") {
  TempDir a;
  TempDir b;
  SyntheticSpec spec;
  spec.num_utts = 4;
  spec.seed = 42;
  generate_synthetic(spec, a.path());
  generate_synthetic(spec, b.path());
  for (const auto& name : {"utt0000.sfea", "utt0003.sfea", "manifest.tsv"}) {
    CHECK(read_file(a / name) == read_file(b / name));
  }
  spec.seed = 43;
  TempDir c;
  generate_synthetic(spec, c.path());
  CHECK(read_file(a / "utt0000.sfea") != read_file(c / "utt0000.sfea"));
}

TEST_CASE("K-means recovers well-separated synthetic classes") {
  TempDir dir;
  SyntheticSpec spec;
  spec.num_utts = 8;
  spec.num_latent_classes = 3;
  spec.noise_scale = 0.01;
  spec.dim = 6;
  spec.seed = 17;
  const auto corpus = generate_synthetic(spec, dir.path());
  std::vector<float> frames;
  std::vector<std::uint32_t> latent;
  for (std::size_t u = 0; u < corpus.manifest.entries.size(); ++u) {
    const auto rec =
        read_features(corpus.manifest.resolve(corpus.manifest.entries[u]));
    frames.insert(frames.end(), rec.features.values.begin(),
                  rec.features.values.end());
    latent.insert(latent.end(), corpus.frame_classes[u].begin(),
                  corpus.frame_classes[u].end());
  }
  KMeansConfig cfg;
  cfg.k = 3;
  cfg.seed = 1;
  const VectorView view(frames, spec.dim);
  const auto cb = train_kmeans(view, cfg);
  const auto labels = assign(cb, view);
  // Label agreement: the cluster -> class map must be a bijection.
  std::map<std::uint32_t, std::set<std::uint32_t>> by_cluster;
  std::map<std::uint32_t, std::set<std::uint32_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_cluster[labels[i]].insert(latent[i]);
    by_class[latent[i]].insert(labels[i]);
  }
  CHECK(by_cluster.size() == 3);
  for (const auto& [c, classes] : by_cluster) CHECK(classes.size() == 1);
  for (const auto& [c, clusters] : by_class) CHECK(clusters.size() == 1);
}

TEST_CASE("synthetic spec validation") {
  TempDir dir;
  SyntheticSpec spec;
  spec.dim = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, dir.path()), InvalidArgument);
  spec = {};
  spec.num_latent_classes = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, dir.path()), InvalidArgument);
  spec = {};
  spec.noise_scale = -1.0;
  CHECK_THROWS_AS(generate_synthetic(spec, dir.path()), InvalidArgument);
  spec = {};
  spec.transitions = {1.0};
  CHECK_THROWS_AS(generate_synthetic(spec, dir.path()), InvalidArgument);
}
