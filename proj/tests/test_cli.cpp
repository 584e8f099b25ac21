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

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/packer.hpp"
#include "unitkit/quantizer.hpp"
#include "unitkit/sweep.hpp"
#include "unitkit/unit_lm.hpp"
#include "unitkit/unitizer.hpp"

using namespace unitkit;
using unitkit::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args, const fs::path& cwd,
        const std::string& env = "") {
  const std::string cmd = "cd '" + cwd.string() + "' && " + env + " '" +
                          UNITKIT_CLI_PATH + "' " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST_CASE("pipeline subcommands") {
  TempDir dir;
  const fs::path d = dir.path();
  auto ok = [&](const std::string& args) {
    const auto r = cli(args, d);
    CHECK_MESSAGE(r.code == 0, args << "\n" << r.out);
    return r.out;
  };

  ok("features synth --out train --utts 12 --dim 4 --seed 1 --prototype-seed 5");
  CHECK(read_manifest(d / "train/manifest.tsv").entries.size() == 12);
  ok("features synth --out stim --utts 6 --dim 4 --seed 2 --prototype-seed 5 "
     "--prefix s");

  ok("features sample --manifest train/manifest.tsv --hours 0.001 --seed 3 "
     "--out sub.tsv");
  const auto sub = read_manifest(d / "sub.tsv");
  CHECK(sub.total_ms() >= 3600.0);
  CHECK(fs::exists(sub.resolve(sub.entries[0])));

  write_file_atomic(d / "km.json", R"({"k": 8, "segment_ms": 40, "seed": 2,
                                      "manifest": "train/manifest.tsv"})");
  ok("kmeans train --config km.json --out cb.scbk --k 6");
  const auto cb = read_codebook(d / "cb.scbk");
  CHECK(cb.k == 6);  // flag beats config
  CHECK(cb.meta.segment_width_ms == 40);
  CHECK(cb.meta.seed == 2);

  ok("encode --manifest train/manifest.tsv --codebook cb.scbk --out units.txt "
     "--spans spans.txt");
  const auto units = read_unit_corpus(d / "units.txt", d / "spans.txt");
  CHECK(units.size() == 12);
  for (const auto& u : units) {
    CHECK(deduplicate(u.units) == u.units);
  }
  ok("encode --manifest train/manifest.tsv --codebook cb.scbk --no-dedup "
     "--out raw.txt");
  ok("encode --manifest stim/manifest.tsv --codebook cb.scbk --out stim_units.txt");

  ok("pack --units units.txt --k 6 --chunk-len 16 --out packed.txt");
  const auto packed = read_packed(d / "packed.txt");
  CHECK(packed.chunk_len == 16);
  CHECK(packed.separator_id == 6u);

  ok("lm train --units units.txt --vocab 6 --order 3 --out lm.sngm");
  const auto model = read_ngram(d / "lm.sngm");
  CHECK(model.order() == 3);
  const auto scored = ok("lm score --model lm.sngm --units units.txt --out lp.tsv");
  CHECK(scored.find("perplexity") != std::string::npos);
  const auto lp = read_file(d / "lp.tsv");
  CHECK(lp.find(units[0].utt_id + "\t" +
                format_double(model.sequence_logprob(units[0].units))) !=
        std::string::npos);

  std::vector<BenchmarkEntry> entries{{"a", "toy", "x", "s0000.sfea", "s0001.sfea"},
                                      {"b", "toy", "y", "s0002", "s0003"},
                                      {"c", "toy", "y", "s0004", "s0005"}};
  write_benchmark_manifest(entries, d / "pairs.jsonl");
  ok("lm score --model lm.sngm --units stim_units.txt --pairs pairs.jsonl "
     "--out pair_scores.tsv");
  CHECK(load_external_scores(d / "pair_scores.tsv").size() == 3);
  const auto ev = ok("eval --pairs pairs.jsonl --units stim_units.txt --model "
                     "lm.sngm --benchmark toy --segmentation 40 --k 6 --out "
                     "report.json");
  const auto report = report_from_json(read_file(d / "report.json"));
  CHECK(report.pair_count == 3);
  CHECK(report.config.k == 6);
  const auto ev2 = ok("eval --pairs pairs.jsonl --scores pair_scores.tsv "
                      "--benchmark toy");
  CHECK(ev2.substr(0, ev2.find('\n')) == ev.substr(0, ev.find('\n')));

  ok("stats --units raw.txt --out stats.json");
  const auto stats = nlohmann::json::parse(read_file(d / "stats.json"));
  std::size_t dedup_total = 0;
  for (const auto& u : units) dedup_total += u.units.size();
  CHECK(stats.at("total_tokens_post_dedup").get<std::size_t>() == dedup_total);
  CHECK(stats.at("total_tokens_pre_dedup").get<std::size_t>() >= dedup_total);

  const auto diff = ok("diff --features train/utt0000.sfea --codebook-a cb.scbk "
                       "--codebook-b cb.scbk --segment-ms-b 80");
  CHECK(diff.rfind("start_ms\tend_ms\tunit_a\tunit_b\tdiffers\n", 0) == 0);
  const auto same = ok("diff --features train/utt0000.sfea --codebook-a cb.scbk "
                       "--codebook-b cb.scbk");
  CHECK(same.find("\t1\n") == std::string::npos);
}

TEST_CASE("errors exit non-zero") {
  TempDir dir;
  CHECK(cli("", dir.path()).code != 0);
  CHECK(cli("kmeans train --manifest nowhere.tsv", dir.path()).code != 0);
  const auto r = cli("kmeans train --manifest nowhere.tsv --out x --segment-ms 40",
                     dir.path());
  CHECK(r.code == 2);
  CHECK(r.out.find("error:") != std::string::npos);
  CHECK(cli("lm train --units nowhere.txt --vocab 0 --out m", dir.path()).code != 0);
}

TEST_CASE("sweep run and report honour the output root") {
  TempDir dir;
  const auto data = unitkit::testing::make_toy_data(dir.path());
  SweepConfig c;
  c.n_values = {40, 80};
  c.k_values = {4, 8};
  c.seeds = {0};
  c.features_manifest = data.features_manifest;
  c.benchmarks = {{"toy", data.benchmark_manifest}};
  c.output_dir = "sweep_out";
  c.scorer.order = 3;
  write_file_atomic(dir / "sweep.json", sweep_config_to_json(c));

  const std::string env = "UNITKIT_OUTPUT_ROOT='" + (dir / "root").string() + "'";
  const auto first = cli("sweep run --config sweep.json --seeds 0 1", dir.path(), env);
  REQUIRE_MESSAGE(first.code == 0, first.out);
  CHECK(first.out.find("8 cells, 0 failed") != std::string::npos);
  const fs::path out = dir / "root" / "sweep_out";
  CHECK(fs::exists(out / "report" / "best_k.csv"));
  CHECK(fs::exists(out / "ledger.json"));

  const auto second = cli("sweep run --config sweep.json --seeds 0 1", dir.path(), env);
  CHECK(second.code == 0);
  CHECK(second.out.find("0 stages computed") != std::string::npos);
  CHECK(second.out.find("identical") != std::string::npos);

  const std::string before = read_file(out / "report" / "grid_average.csv");
  fs::remove_all(out / "report");
  const auto rep = cli("sweep report --output-dir sweep_out", dir.path(), env);
  CHECK_MESSAGE(rep.code == 0, rep.out);
  CHECK(rep.out.find("best K per N") != std::string::npos);
  CHECK(read_file(out / "report" / "grid_average.csv") == before);
  const auto aggs = nlohmann::json::parse(read_file(out / "report" / "aggregates.json"));
  CHECK(aggs.size() == 4);
  CHECK(aggs[0].at("seeds") == 2);
}
