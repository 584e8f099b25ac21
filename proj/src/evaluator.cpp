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

#include "unitkit/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"
#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/parallel.hpp"

namespace unitkit {

using nlohmann::json;

namespace {

bool is_number(const std::string& s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

double pair_credit(const PairScores& scores) {
  if (scores.pos_logprob > scores.neg_logprob) return 1.0;
  if (scores.pos_logprob < scores.neg_logprob) return 0.0;
  return 0.5;
}

EvalReport evaluate(const Scorer& scorer, std::span<const StimulusPair> pairs,
                    const std::string& benchmark, const RunConfig& config,
                    std::size_t workers) {
  if (pairs.empty()) throw InvalidArgument("no stimulus pairs to evaluate");
  EvalReport report;
  report.benchmark = benchmark;
  report.config = config;
  report.pair_count = pairs.size();
  report.results.resize(pairs.size());

  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    const auto& pair = pairs[i];
    if (pair.category.empty()) {
      throw InvalidArgument("pair " + pair.pair_id + " has no category");
    }
    PairScores scores;
    try {
      scores = scorer.score({pair.pair_id, pair.pos_units, pair.neg_units});
    } catch (const std::exception& e) {
      throw Error("scoring failed for pair " + pair.pair_id + ": " + e.what());
    }
    auto& r = report.results[i];
    r.pair_id = pair.pair_id;
    r.category = pair.category;
    r.scores = scores;
    r.credit = pair_credit(scores);
    r.tie = scores.pos_logprob == scores.neg_logprob;
  });

  double credit = 0.0;
  std::size_t ties = 0;
  for (const auto& r : report.results) {
    credit += r.credit;
    ties += r.tie;
  }
  const auto n = static_cast<double>(pairs.size());
  report.accuracy = credit / n;
  report.tie_rate = static_cast<double>(ties) / n;
  report.categories = split_by_category(report.results);
  return report;
}

std::map<std::string, CategoryAccuracy> split_by_category(
    std::span<const PairResult> results) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const auto& r : results) {
    auto& [credit, count] = sums[r.category];
    credit += r.credit;
    ++count;
  }
  std::map<std::string, CategoryAccuracy> out;
  for (const auto& [category, sc] : sums) {
    out[category] = {sc.first / static_cast<double>(sc.second), sc.second};
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

SeedAggregate aggregate_seeds(std::span<const EvalReport> reports) {
  if (reports.empty()) throw InvalidArgument("no reports to aggregate");
  const auto& first = reports.front();
  SeedAggregate agg;
  agg.benchmark = first.benchmark;
  agg.segmentation = first.config.segmentation;
  agg.k = first.config.k;
  agg.seeds = reports.size();

  std::vector<double> acc;
  std::vector<double> ties;
  std::map<std::string, std::vector<double>> cats;
  for (const auto& r : reports) {
    if (r.benchmark != agg.benchmark ||
        r.config.segmentation != agg.segmentation || r.config.k != agg.k) {
      throw InvalidArgument("aggregate_seeds given mixed configurations");
    }
    acc.push_back(r.accuracy);
    ties.push_back(r.tie_rate);
    for (const auto& [c, a] : r.categories) cats[c].push_back(a.accuracy);
  }
  agg.accuracy = mean_std(acc);
  agg.tie_rate = mean_std(ties);
  for (const auto& [c, values] : cats) agg.categories[c] = mean_std(values);
  return agg;
}

bool segmentation_less(const std::string& a, const std::string& b) {
  const bool na = is_number(a);
  const bool nb = is_number(b);
  if (na && nb) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }
  if (na != nb) return na;
  return a < b;
}

std::optional<BestK> best_k_for_row(const GridMatrix& grid, std::size_t row) {
  std::optional<BestK> best;
  for (std::size_t c = 0; c < grid.cols.size(); ++c) {
    const auto& cell = grid.at(row, c);
    if (!cell) continue;
    // Columns ascend in K, so strict > keeps the smaller K on ties.
    if (!best || *cell > best->accuracy) {
      best = BestK{grid.rows[row], grid.cols[c], *cell};
    }
  }
  return best;
}

GridTables grid_table(std::span<const SeedAggregate> aggregates) {
  if (aggregates.empty()) throw InvalidArgument("no aggregates for grid");
  std::set<std::string> benchmarks;
  std::set<std::uint32_t> ks;
  std::vector<std::string> rows;
  std::map<std::tuple<std::string, std::string, std::uint32_t>, double> cells;
  for (const auto& a : aggregates) {
    benchmarks.insert(a.benchmark);
    ks.insert(a.k);
    if (std::find(rows.begin(), rows.end(), a.segmentation) == rows.end()) {
      rows.push_back(a.segmentation);
    }
    if (!cells.emplace(std::make_tuple(a.benchmark, a.segmentation, a.k),
                       a.accuracy.mean)
             .second) {
      throw InvalidArgument("duplicate grid cell for " + a.benchmark + " (" +
                            a.segmentation + ", " + std::to_string(a.k) + ")");
    }
  }
  std::sort(rows.begin(), rows.end(), segmentation_less);
  const std::vector<std::uint32_t> cols(ks.begin(), ks.end());

  auto blank = [&](std::string name) {
    GridMatrix m;
    m.name = std::move(name);
    m.rows = rows;
    m.cols = cols;
    m.cells.assign(rows.size() * cols.size(), std::nullopt);
    return m;
  };

  GridTables out;
  out.average = blank("average");
  std::vector<double> sums(rows.size() * cols.size(), 0.0);
  std::vector<std::size_t> present(rows.size() * cols.size(), 0);
  for (const auto& b : benchmarks) {
    auto m = blank(b);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        auto it = cells.find({b, rows[r], cols[c]});
        if (it == cells.end()) continue;
        m.cells[r * cols.size() + c] = it->second;
        sums[r * cols.size() + c] += it->second;
        ++present[r * cols.size() + c];
      }
    }
    out.per_benchmark.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (present[i] == benchmarks.size()) {
      out.average.cells[i] = sums[i] / static_cast<double>(benchmarks.size());
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (auto best = best_k_for_row(out.average, r)) {
      out.best_k.push_back(*best);
    }
  }
  return out;
}

std::vector<BenchmarkEntry> read_benchmark_manifest(
    const std::filesystem::path& source) {
  std::vector<BenchmarkEntry> entries;
  std::set<std::string> ids;
  const std::string text = read_file(source);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = source.string() + ":" + std::to_string(line_no);
    try {
      const auto j = json::parse(line);
      BenchmarkEntry e;
      e.pair_id = j.at("pair_id").get<std::string>();
      e.category = j.at("category").get<std::string>();
      e.pos = j.at("pos").get<std::string>();
      e.neg = j.at("neg").get<std::string>();
      e.benchmark = j.value("benchmark", std::string("custom"));
      if (e.pair_id.empty() || e.category.empty()) {
        throw FormatError(FormatError::Kind::malformed,
                          where + ": empty pair_id or category");
      }
      if (!ids.insert(e.benchmark + '\n' + e.pair_id).second) {
        throw FormatError(FormatError::Kind::malformed,
                          where + ": duplicate pair_id " + e.pair_id);
      }
      entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw FormatError(FormatError::Kind::malformed, where + ": " + e.what());
    }
  }
  return entries;
}

void write_benchmark_manifest(std::span<const BenchmarkEntry> entries,
                              const std::filesystem::path& destination) {
  std::ostringstream out;
  for (const auto& e : entries) {
    out << json{{"pair_id", e.pair_id},
                {"benchmark", e.benchmark},
                {"category", e.category},
                {"pos", e.pos},
                {"neg", e.neg}}
               .dump()
        << '\n';
  }
  write_file_atomic(destination, out.str());
}

std::vector<StimulusPair> pairs_from_units(
    std::span<const BenchmarkEntry> entries,
    std::span<const UnitSequence> corpus) {
  std::map<std::string_view, const UnitSequence*> index;
  for (const auto& seq : corpus) index[seq.utt_id] = &seq;
  auto lookup = [&](const std::string& id, const std::string& pair) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw InvalidArgument("pair " + pair + " references unknown unit entry " +
                            id);
    }
    return it->second->units;
  };
  std::vector<StimulusPair> pairs;
  pairs.reserve(entries.size());
  for (const auto& e : entries) {
    pairs.push_back({e.pair_id, e.benchmark, e.category,
                     lookup(e.pos, e.pair_id), lookup(e.neg, e.pair_id)});
  }
  return pairs;
}

std::string aggregates_to_csv(std::span<const SeedAggregate> aggregates) {
  std::set<std::string> categories;
  for (const auto& a : aggregates) {
    for (const auto& [c, v] : a.categories) categories.insert(c);
  }
  std::ostringstream out;
  out << "benchmark,N,K,seeds,accuracy_mean,accuracy_std,tie_rate";
  for (const auto& c : categories) out << ',' << csv_field(c);
  out << '\n';
  for (const auto& a : aggregates) {
    out << csv_field(a.benchmark) << ',' << csv_field(a.segmentation) << ','
        << a.k << ',' << a.seeds << ',' << format_double(a.accuracy.mean) << ','
        << format_double(a.accuracy.std) << ','
        << format_double(a.tie_rate.mean);
    for (const auto& c : categories) {
      out << ',';
      if (auto it = a.categories.find(c); it != a.categories.end()) {
        out << format_double(it->second.mean);
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string aggregates_to_json(std::span<const SeedAggregate> aggregates) {
  json rows = json::array();
  for (const auto& a : aggregates) {
    json cats = json::object();
    for (const auto& [c, v] : a.categories) {
      cats[c] = {{"mean", v.mean}, {"std", v.std}};
    }
    rows.push_back({{"benchmark", a.benchmark},
                    {"N", a.segmentation},
                    {"K", a.k},
                    {"seeds", a.seeds},
                    {"accuracy_mean", a.accuracy.mean},
                    {"accuracy_std", a.accuracy.std},
                    {"tie_rate", a.tie_rate.mean},
                    {"categories", cats}});
  }
  return rows.dump(2) + "\n";
}

std::string report_to_json(const EvalReport& report) {
  json cats = json::object();
  for (const auto& [c, a] : report.categories) {
    cats[c] = {{"accuracy", a.accuracy}, {"pairs", a.pairs}};
  }
  json results = json::array();
  for (const auto& r : report.results) {
    results.push_back({r.pair_id, r.category, r.scores.pos_logprob,
                       r.scores.neg_logprob});
  }
  return json{{"benchmark", report.benchmark},
              {"segmentation", report.config.segmentation},
              {"k", report.config.k},
              {"seed", report.config.seed},
              {"accuracy", report.accuracy},
              {"tie_rate", report.tie_rate},
              {"pair_count", report.pair_count},
              {"categories", cats},
              {"results", results}}
      .dump(1);
}

EvalReport report_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    EvalReport r;
    r.benchmark = j.at("benchmark").get<std::string>();
    r.config.segmentation = j.at("segmentation").get<std::string>();
    r.config.k = j.at("k").get<std::uint32_t>();
    r.config.seed = j.at("seed").get<std::uint64_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.tie_rate = j.at("tie_rate").get<double>();
    r.pair_count = j.at("pair_count").get<std::size_t>();
    for (const auto& [c, a] : j.at("categories").items()) {
      r.categories[c] = {a.at("accuracy").get<double>(),
                         a.at("pairs").get<std::size_t>()};
    }
    for (const auto& row : j.at("results")) {
      PairResult pr;
      pr.pair_id = row.at(0).get<std::string>();
      pr.category = row.at(1).get<std::string>();
      pr.scores = {row.at(2).get<double>(), row.at(3).get<double>()};
      pr.credit = pair_credit(pr.scores);
      pr.tie = pr.scores.pos_logprob == pr.scores.neg_logprob;
      r.results.push_back(std::move(pr));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("report json: ") + e.what());
  }
}

}  // namespace unitkit
