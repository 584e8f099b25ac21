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

#include <algorithm>

#include "doctest.h"
#include "test_support.hpp"
#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/unitizer.hpp"

using namespace unitkit;
using unitkit::testing::TempDir;

namespace {

using Units = std::vector<std::uint32_t>;

// Run-length encoding oracle: symbol of every maximal run.
Units rle_symbols(const Units& x) {
  Units out;
  std::size_t i = 0;
  while (i < x.size()) {
    std::size_t j = i;
    while (j < x.size() && x[j] == x[i]) ++j;
    out.push_back(x[i]);
    i = j;
  }
  return out;
}

Codebook codebook_1d(std::vector<float> cents) {
  Codebook cb;
  cb.dim = 1;
  cb.k = static_cast<std::uint32_t>(cents.size());
  cb.centroids = std::move(cents);
  return cb;
}

UnitSequence with_spans(Units units, std::vector<TimeSpan> spans) {
  UnitSequence s;
  s.units = std::move(units);
  s.spans = std::move(spans);
  return s;
}

}  // namespace

TEST_CASE("deduplicate examples") {
  CHECK(deduplicate(Units{54, 54, 54, 88, 88, 3}) == Units{54, 88, 3});
  CHECK(deduplicate(Units{}).empty());
  CHECK(deduplicate(Units{1, 2, 1, 2}) == Units{1, 2, 1, 2});
}

TEST_CASE("deduplicate properties on random sequences") {
  Rng rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    Units x(rng.below(40));
    const auto alphabet = 1 + rng.below(5);
    for (auto& u : x) u = static_cast<std::uint32_t>(rng.below(alphabet));
    const auto d = deduplicate(x);
    CHECK(d == rle_symbols(x));
    CHECK(deduplicate(d) == d);
    CHECK(d.size() <= x.size());
    const bool has_repeat =
        std::adjacent_find(x.begin(), x.end()) != x.end();
    CHECK((d.size() == x.size()) == !has_repeat);
  }
}

TEST_CASE("sequence dedup merges spans of collapsed runs") {
  auto s = with_spans({5, 5, 7, 5},
                      {{0, 20}, {20, 40}, {40, 60}, {60, 80}});
  const auto d = deduplicate(s);
  CHECK(d.dedup);
  CHECK(d.units == Units{5, 7, 5});
  CHECK(*d.raw_length == 4);
  CHECK(*d.spans == std::vector<TimeSpan>{{0, 40}, {40, 60}, {60, 80}});
}

TEST_CASE("encode composes segmentation, assignment and dedup") {
  SUBCASE("constant utterance collapses to one unit") {
    const FeatureMatrix f(12, 1, 20.0f, std::vector<float>(12, 3.0f));
    const auto cb = codebook_1d({0.0f, 3.0f});
    const auto seq = encode(f, FixedPlan{40}, cb, true, "c");
    CHECK(seq.units == Units{1});
    CHECK(*seq.spans == std::vector<TimeSpan>{{0, 240}});
    CHECK(*seq.raw_length == 6);
  }
  SUBCASE("10 frames, N=80, k=2 hand case") {
    // Segment means: [0,4) -> 0.25, [4,8) -> 0.5, [8,10) -> 9.5
    const FeatureMatrix f(10, 1, 20.0f, {0, 0, 0, 1, 0, 1, 0, 1, 9, 10});
    const auto cb = codebook_1d({0.0f, 10.0f});
    const auto raw = encode(f, FixedPlan{80}, cb, false);
    CHECK(raw.units == Units{0, 0, 1});
    CHECK(*raw.spans == std::vector<TimeSpan>{{0, 80}, {80, 160}, {160, 200}});
    const auto dd = encode(f, FixedPlan{80}, cb, true);
    CHECK(dd.units == Units{0, 1});
    CHECK(*dd.spans == std::vector<TimeSpan>{{0, 160}, {160, 200}});
  }
  SUBCASE("N=20 without dedup yields one unit per frame") {
    Rng rng(4);
    const auto f = unitkit::testing::random_matrix(rng, 25, 1);
    const auto cb = codebook_1d({-1.0f, 0.0f, 1.0f});
    CHECK(encode(f, FixedPlan{20}, cb, false).units.size() == 25);
  }
  SUBCASE("dimension mismatch") {
    const FeatureMatrix f(2, 2, 20.0f, {0, 0, 1, 1});
    CHECK_THROWS_AS(encode(f, FixedPlan{20}, codebook_1d({0}), false),
                    InvalidArgument);
  }
}

TEST_CASE("dedup spans conserve total duration") {
  Rng rng(6);
  const auto cb = codebook_1d({-1.0f, 0.0f, 1.0f});
  for (int trial = 0; trial < 100; ++trial) {
    const auto frames = static_cast<std::uint32_t>(1 + rng.below(100));
    const auto f = unitkit::testing::random_matrix(rng, frames, 1);
    const auto seq = encode(f, FixedPlan{20 * static_cast<std::uint32_t>(
                                                1 + rng.below(8))},
                            cb, true);
    double total = 0.0;
    double cursor = 0.0;
    for (const auto& s : *seq.spans) {
      CHECK(s.start_ms == cursor);
      cursor = s.end_ms;
      total += s.end_ms - s.start_ms;
    }
    CHECK(total == frames * 20.0);
    for (std::size_t i = 1; i < seq.units.size(); ++i) {
      CHECK(seq.units[i] != seq.units[i - 1]);
    }
  }
}

TEST_CASE("corpus statistics") {
  UnitSequence a;
  a.utt_id = "a";
  a.units = {1, 2, 3};
  a.dedup = true;
  a.raw_length = 5;
  UnitSequence b;
  b.utt_id = "b";
  b.units = {1, 2, 3, 4, 5};
  b.dedup = true;
  b.raw_length = 9;
  const std::vector<UnitSequence> corpus{a, b};
  const auto stats = corpus_stats(corpus, {"80", 128});
  CHECK(stats.total_tokens_post_dedup == 8);
  CHECK(stats.total_tokens_pre_dedup == 14);
  CHECK(stats.per_utterance.size() == 2);

  UnitSequence raw;
  raw.utt_id = "r";
  raw.units = {4, 4, 4, 2};
  const std::vector<UnitSequence> raw_corpus{raw};
  const auto raw_stats = corpus_stats(raw_corpus, {"20", 8});
  CHECK(raw_stats.total_tokens_pre_dedup == 4);
  CHECK(raw_stats.total_tokens_post_dedup == 2);

  auto mixed = corpus;
  mixed[1].config = TokenizerConfig{"40", 128};
  CHECK_THROWS_AS(corpus_stats(mixed, {"80", 128}), InvalidArgument);
  auto unknown = corpus;
  unknown[0].raw_length.reset();
  CHECK_THROWS_AS(corpus_stats(unknown, {"80", 128}), InvalidArgument);
}

TEST_CASE("pre-dedup tokens strictly decrease with N") {
  Rng rng(10);
  std::vector<FeatureMatrix> corpus;
  for (int i = 0; i < 5; ++i) {
    corpus.push_back(unitkit::testing::random_matrix(rng, 300, 2));
  }
  Codebook cb;
  cb.dim = 2;
  cb.k = 4;
  cb.centroids = {0, 0, 1, 1, -1, 1, 1, -1};
  std::uint64_t previous = UINT64_MAX;
  for (std::uint32_t n : {20u, 40u, 80u, 120u, 160u, 200u, 240u, 280u}) {
    std::vector<UnitSequence> seqs;
    for (const auto& f : corpus) seqs.push_back(encode(f, FixedPlan{n}, cb, true));
    const auto stats = corpus_stats(seqs, {std::to_string(n), 4});
    CHECK(stats.total_tokens_pre_dedup < previous);
    CHECK(stats.total_tokens_post_dedup <= stats.total_tokens_pre_dedup);
    previous = stats.total_tokens_pre_dedup;
  }
}

TEST_CASE("align_diff") {
  SUBCASE("self diff has no differences") {
    const auto a = with_spans({1, 2, 3}, {{0, 40}, {40, 60}, {60, 100}});
    const auto d = align_diff(a, a);
    CHECK(d.size() == 3);
    for (const auto& i : d) CHECK_FALSE(i.differs);
  }
  SUBCASE("hand partition") {
    const auto a = with_spans({5}, {{0, 80}});
    const auto b = with_spans({5, 9}, {{0, 40}, {40, 80}});
    const auto d = align_diff(a, b);
    REQUIRE(d.size() == 2);
    CHECK(d[0] == DiffInterval{{0, 40}, 5u, 5u, false});
    CHECK(d[1] == DiffInterval{{40, 80}, 5u, 9u, true});
  }
  SUBCASE("sequences of different length") {
    const auto a = with_spans({1, 2}, {{0, 20}, {20, 60}});
    const auto b = with_spans({1}, {{0, 40}});
    const auto d = align_diff(a, b);
    REQUIRE(d.size() == 3);
    CHECK(d[1] == DiffInterval{{20, 40}, 2u, 1u, true});
    CHECK(d[2] == DiffInterval{{40, 60}, 2u, std::nullopt, true});
  }
  SUBCASE("stimuli differing inside one 80 ms window map to one unit") {
    // Frames 4-6 (80-140 ms) differ slightly; at N = 80 both pool into the
    // same centroid region, at N = 20 the frame-level units differ.
    std::vector<float> va(10, 0.0f);
    std::vector<float> vb = va;
    for (int t = 4; t < 7; ++t) vb[t] = 0.6f;
    const FeatureMatrix fa(10, 1, 20.0f, va);
    const FeatureMatrix fb(10, 1, 20.0f, vb);
    const auto cb = codebook_1d({0.0f, 1.0f});
    const auto ua = encode(fa, FixedPlan{80}, cb, true);
    const auto ub = encode(fb, FixedPlan{80}, cb, true);
    for (const auto& i : align_diff(ua, ub)) CHECK_FALSE(i.differs);
    const auto fine = align_diff(encode(fa, FixedPlan{20}, cb, true),
                                 encode(fb, FixedPlan{20}, cb, true));
    const bool any = std::any_of(fine.begin(), fine.end(),
                                 [](const DiffInterval& i) { return i.differs; });
    CHECK(any);
  }
  SUBCASE("missing spans") {
    UnitSequence bare;
    bare.units = {1};
    CHECK_THROWS_AS(align_diff(bare, bare), InvalidArgument);
  }
}

TEST_CASE("unit corpus files round-trip") {
  TempDir dir;
  std::vector<UnitSequence> corpus;
  corpus.push_back(with_spans({54, 88, 3}, {{0, 60}, {60, 100}, {100, 120}}));
  corpus.back().utt_id = "u1";
  corpus.push_back(with_spans({}, {}));
  corpus.back().utt_id = "u2";
  write_unit_corpus(corpus, dir / "units.txt", dir / "spans.txt");
  CHECK(read_file(dir / "units.txt") == "u1\t54 88 3\nu2\t\n");
  CHECK(read_file(dir / "spans.txt") == "u1\t0:60 60:100 100:120\nu2\t\n");
  const auto back = read_unit_corpus(dir / "units.txt", dir / "spans.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[0].units == corpus[0].units);
  CHECK(*back[0].spans == *corpus[0].spans);
  CHECK(read_unit_corpus(dir / "units.txt")[0].spans == std::nullopt);

  write_file_atomic(dir / "dup.txt", "a\t1\na\t2\n");
  CHECK_THROWS_AS(read_unit_corpus(dir / "dup.txt"), FormatError);
}
