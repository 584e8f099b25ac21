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
#include <functional>

#include "doctest.h"
#include "test_support.hpp"
#include "unitkit/error.hpp"
#include "unitkit/evaluator.hpp"
#include "unitkit/io_util.hpp"

using namespace unitkit;
using unitkit::testing::TempDir;

namespace {

class FnScorer final : public Scorer {
 public:
  using Fn = std::function<PairScores(const ScoringRequest&)>;
  explicit FnScorer(Fn fn) : fn_(std::move(fn)) {}
  PairScores score(const ScoringRequest& r) const override { return fn_(r); }

 private:
  Fn fn_;
};

double sum_units(std::span<const std::uint32_t> u) {
  double s = 0;
  for (auto x : u) s += x;
  return s;
}

std::vector<StimulusPair> make_pairs(Rng& rng, std::size_t n,
                                     std::size_t categories = 3) {
  std::vector<StimulusPair> pairs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = pairs[i];
    p.pair_id = "p" + std::to_string(i);
    p.benchmark = "bench";
    p.category = "c" + std::to_string(rng.below(categories));
    p.pos_units.resize(1 + rng.below(8));
    p.neg_units.resize(1 + rng.below(8));
    for (auto& u : p.pos_units) u = static_cast<std::uint32_t>(rng.below(50));
    for (auto& u : p.neg_units) u = static_cast<std::uint32_t>(rng.below(50));
  }
  return pairs;
}

SeedAggregate agg(std::string bench, std::string seg, std::uint32_t k,
                  double acc) {
  SeedAggregate a;
  a.benchmark = std::move(bench);
  a.segmentation = std::move(seg);
  a.k = k;
  a.seeds = 3;
  a.accuracy = {acc, 0.0};
  return a;
}

}  // namespace

TEST_CASE("pair credit") {
  CHECK(pair_credit({-1.0, -2.0}) == 1.0);
  CHECK(pair_credit({-2.0, -1.0}) == 0.0);
  CHECK(pair_credit({-1.5, -1.5}) == 0.5);
}

TEST_CASE("perfect, constant and random scorers") {
  Rng rng(1);
  const auto pairs = make_pairs(rng, 500);
  const FnScorer perfect([](const ScoringRequest&) { return PairScores{0, -1}; });
  const auto r1 = evaluate(perfect, pairs);
  CHECK(r1.accuracy == 1.0);
  CHECK(r1.tie_rate == 0.0);
  CHECK(r1.pair_count == 500);

  const FnScorer constant([](const ScoringRequest&) { return PairScores{-3, -3}; });
  const auto r2 = evaluate(constant, pairs);
  CHECK(r2.accuracy == 0.5);
  CHECK(r2.tie_rate == 1.0);

  const auto many = make_pairs(rng, 10000);
  const FnScorer random([](const ScoringRequest& r) {
    Rng local(std::hash<std::string_view>{}(r.pair_id));
    return PairScores{local.uniform(), local.uniform()};
  });
  const auto r3 = evaluate(random, many, "bench", {}, 4);
  CHECK(std::abs(r3.accuracy - 0.5) <= 0.02);
}

TEST_CASE("accuracy is invariant under monotone transforms of scores") {
  Rng rng(2);
  const auto pairs = make_pairs(rng, 1000);
  const FnScorer base([](const ScoringRequest& r) {
    return PairScores{-sum_units(r.pos_units), -sum_units(r.neg_units)};
  });
  const FnScorer transformed([](const ScoringRequest& r) {
    return PairScores{3.0 * -sum_units(r.pos_units) + 7.0,
                      3.0 * -sum_units(r.neg_units) + 7.0};
  });
  const auto a = evaluate(base, pairs);
  const auto b = evaluate(transformed, pairs);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.tie_rate == b.tie_rate);
  CHECK(a.categories == b.categories);
}

TEST_CASE("category breakdown is consistent with the overall accuracy") {
  Rng rng(3);
  const auto pairs = make_pairs(rng, 777, 5);
  const FnScorer s([](const ScoringRequest& r) {
    return PairScores{-sum_units(r.pos_units), -sum_units(r.neg_units)};
  });
  const auto report = evaluate(s, pairs, "bench", {"80", 64, 0}, 3);
  std::size_t total = 0;
  double weighted = 0.0;
  for (const auto& [c, a] : report.categories) {
    total += a.pairs;
    weighted += a.accuracy * static_cast<double>(a.pairs);
  }
  CHECK(total == 777);
  CHECK(weighted / 777.0 == doctest::Approx(report.accuracy).epsilon(1e-12));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(report.results[i].pair_id == pairs[i].pair_id);
  }
}

TEST_CASE("hand-sized category example") {
  std::vector<StimulusPair> pairs{
      {"a", "b", "x", {1}, {2}},
      {"b", "b", "x", {2}, {1}},
      {"c", "b", "y", {1}, {1}},
  };
  const FnScorer s([](const ScoringRequest& r) {
    return PairScores{sum_units(r.pos_units), sum_units(r.neg_units)};
  });
  const auto report = evaluate(s, pairs);
  CHECK(report.accuracy == doctest::Approx(1.5 / 3));
  CHECK(report.categories.at("x") == CategoryAccuracy{0.5, 2});
  CHECK(report.categories.at("y") == CategoryAccuracy{0.5, 1});
  CHECK(report.tie_rate == doctest::Approx(1.0 / 3));
}

TEST_CASE("scorer failures name the pair") {
  std::vector<StimulusPair> pairs{{"ok", "b", "x", {1}, {2}},
                                  {"bad", "b", "x", {1}, {2}}};
  const FnScorer s([](const ScoringRequest& r) -> PairScores {
    if (r.pair_id == "bad") throw std::runtime_error("boom");
    return {0, 0};
  });
  try {
    evaluate(s, pairs);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  CHECK_THROWS_AS(evaluate(s, std::span<const StimulusPair>{}), InvalidArgument);
}

TEST_CASE("seed aggregation") {
  std::vector<EvalReport> reports(3);
  const double accs[] = {0.64, 0.65, 0.66};
  for (int i = 0; i < 3; ++i) {
    reports[i].benchmark = "b";
    reports[i].config = {"80", 512, static_cast<std::uint64_t>(i)};
    reports[i].accuracy = accs[i];
    reports[i].categories["c"] = {accs[i], 10};
  }
  const auto a = aggregate_seeds(reports);
  CHECK(a.seeds == 3);
  CHECK(a.accuracy.mean == doctest::Approx(0.65).epsilon(1e-12));
  CHECK(a.accuracy.std == doctest::Approx(0.0081649658).epsilon(1e-8));
  CHECK(a.categories.at("c").mean == doctest::Approx(0.65));
  reports[2].config.k = 256;
  CHECK_THROWS_AS(aggregate_seeds(reports), InvalidArgument);
  CHECK_THROWS_AS(aggregate_seeds({}), InvalidArgument);
}

TEST_CASE("segmentation labels order numerically then by name") {
  std::vector<std::string> labels{"syllable", "280", "40", "phone", "120", "20"};
  std::sort(labels.begin(), labels.end(), segmentation_less);
  CHECK(labels == std::vector<std::string>{"20", "40", "120", "280", "phone",
                                           "syllable"});
}

TEST_CASE("grid tables") {
  const std::vector<std::string> ns{"20", "40", "80", "120", "160", "200", "240", "280"};
  const std::vector<std::uint32_t> ks{128, 256, 512, 1024, 2048, 4096, 8192, 16384};
  Rng rng(4);
  std::vector<SeedAggregate> aggs;
  for (const char* b : {"b1", "b2"}) {
    for (const auto& n : ns) {
      for (auto k : ks) aggs.push_back(agg(b, n, k, rng.uniform()));
    }
  }
  const auto tables = grid_table(aggs);
  REQUIRE(tables.per_benchmark.size() == 2);
  CHECK(tables.average.rows == ns);
  CHECK(tables.average.cols == ks);
  std::size_t present = 0;
  for (const auto& c : tables.average.cells) present += c.has_value();
  CHECK(present == 64);
  REQUIRE(tables.best_k.size() == 8);

  for (std::size_t r = 0; r < ns.size(); ++r) {
    // Independent scan over the average row.
    double best = -1;
    std::uint32_t best_k = 0;
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const double v = (aggs[r * 8 + c].accuracy.mean +
                        aggs[64 + r * 8 + c].accuracy.mean) /
                       2.0;
      CHECK(*tables.average.at(r, c) == doctest::Approx(v).epsilon(1e-15));
      if (v > best) {
        best = v;
        best_k = ks[c];
      }
    }
    CHECK(tables.best_k[r].segmentation == ns[r]);
    CHECK(tables.best_k[r].k == best_k);
  }

  auto dup = aggs;
  dup.push_back(aggs.front());
  CHECK_THROWS_AS(grid_table(dup), InvalidArgument);
  CHECK_THROWS_AS(grid_table({}), InvalidArgument);
}

TEST_CASE("grid edge cases") {
  const std::vector<SeedAggregate> one{agg("b", "80", 64, 0.7)};
  const auto t = grid_table(one);
  REQUIRE(t.best_k.size() == 1);
  CHECK(t.best_k[0] == BestK{"80", 64, 0.7});

  // Ties pick the smaller K.
  const std::vector<SeedAggregate> tie{agg("b", "80", 512, 0.7),
                                       agg("b", "80", 64, 0.7),
                                       agg("b", "80", 128, 0.6)};
  CHECK(grid_table(tie).best_k[0].k == 64);

  // A cell missing from one benchmark is absent in the average.
  const std::vector<SeedAggregate> partial{agg("b1", "80", 64, 0.7),
                                           agg("b1", "80", 128, 0.9),
                                           agg("b2", "80", 64, 0.5)};
  const auto p = grid_table(partial);
  CHECK(p.average.at(0, 0) == 0.6);
  CHECK_FALSE(p.average.at(0, 1).has_value());
  CHECK(p.best_k[0].k == 64);
}

TEST_CASE("benchmark manifests and unit lookup") {
  TempDir dir;
  const std::vector<BenchmarkEntry> entries{
      {"p1", "sblimp", "agreement", "u1", "u2"},
      {"p2", "sblimp", "anaphor", "u3", "u1"},
  };
  write_benchmark_manifest(entries, dir / "m.jsonl");
  const auto back = read_benchmark_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].pair_id == "p2");
  CHECK(back[1].category == "anaphor");
  CHECK(back[1].pos == "u3");

  write_file_atomic(dir / "dup.jsonl",
                    "{\"pair_id\":\"a\",\"category\":\"c\",\"pos\":\"x\",\"neg\":\"y\"}\n"
                    "{\"pair_id\":\"a\",\"category\":\"c\",\"pos\":\"x\",\"neg\":\"y\"}\n");
  CHECK_THROWS_AS(read_benchmark_manifest(dir / "dup.jsonl"), FormatError);
  write_file_atomic(dir / "bad.jsonl", "{\"pair_id\":\"a\"}\n");
  CHECK_THROWS_AS(read_benchmark_manifest(dir / "bad.jsonl"), FormatError);

  std::vector<UnitSequence> corpus(3);
  corpus[0].utt_id = "u1";
  corpus[0].units = {1, 2};
  corpus[1].utt_id = "u2";
  corpus[1].units = {3};
  corpus[2].utt_id = "u3";
  corpus[2].units = {4, 5, 6};
  const auto pairs = pairs_from_units(back, corpus);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].pos_units == std::vector<std::uint32_t>{1, 2});
  CHECK(pairs[1].neg_units == std::vector<std::uint32_t>{1, 2});
  CHECK(pairs[1].pos_units == std::vector<std::uint32_t>{4, 5, 6});
  corpus.pop_back();
  CHECK_THROWS_AS(pairs_from_units(back, corpus), InvalidArgument);
}

TEST_CASE("report serialization") {
  Rng rng(5);
  const auto pairs = make_pairs(rng, 40);
  const FnScorer s([](const ScoringRequest& r) {
    return PairScores{-sum_units(r.pos_units) / 3.0, -sum_units(r.neg_units) / 7.0};
  });
  const auto report = evaluate(s, pairs, "bench", {"syllable", 256, 2});
  const auto back = report_from_json(report_to_json(report));
  CHECK(back.benchmark == "bench");
  CHECK(back.config == report.config);
  CHECK(back.accuracy == report.accuracy);
  CHECK(back.tie_rate == report.tie_rate);
  CHECK(back.categories == report.categories);
  REQUIRE(back.results.size() == report.results.size());
  CHECK(back.results[7].scores == report.results[7].scores);

  std::vector<EvalReport> reports{report};
  const auto csv = aggregates_to_csv(std::vector<SeedAggregate>{aggregate_seeds(reports)});
  CHECK(csv.rfind("benchmark,N,K,seeds,accuracy_mean,accuracy_std,tie_rate,c0,c1,c2\n", 0) == 0);
  CHECK(csv.find("bench,syllable,256,1,") != std::string::npos);
}
