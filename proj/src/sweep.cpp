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

#include "unitkit/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/packer.hpp"
#include "unitkit/parallel.hpp"
#include "unitkit/quantizer.hpp"
#include "unitkit/segmenter.hpp"
#include "unitkit/unit_lm.hpp"
#include "unitkit/unitizer.hpp"

namespace unitkit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void SweepConfig::validate() const {
  if (n_values.empty() && variable_plans.empty()) {
    throw InvalidArgument("sweep needs at least one N value or variable plan");
  }
  for (auto n : n_values) frames_per_segment(n, hop_ms);
  if (k_values.empty()) throw InvalidArgument("sweep needs at least one K");
  for (auto k : k_values) {
    if (k < 1) throw InvalidArgument("K values must be >= 1");
  }
  if (seeds.empty()) throw InvalidArgument("sweep needs at least one seed");
  if (std::set(n_values.begin(), n_values.end()).size() != n_values.size() ||
      std::set(k_values.begin(), k_values.end()).size() != k_values.size() ||
      std::set(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw InvalidArgument("duplicate N, K or seed value");
  }
  if (features_manifest.empty()) {
    throw InvalidArgument("sweep needs a features manifest");
  }
  if (!(kmeans_subset_hours > 0.0)) {
    throw InvalidArgument("kmeans_subset_hours must be positive");
  }
  if (benchmarks.empty()) throw InvalidArgument("sweep needs a benchmark");
  std::set<std::string> names;
  for (const auto& b : benchmarks) {
    if (b.name.empty() || !names.insert(b.name).second) {
      throw InvalidArgument("benchmark names must be unique and non-empty");
    }
  }
  std::set<std::string> plan_names;
  for (const auto& p : variable_plans) {
    if (p.name.empty() || p.boundary_files.empty() ||
        !plan_names.insert(p.name).second) {
      throw InvalidArgument("variable plans need unique names and files");
    }
    if (std::all_of(p.name.begin(), p.name.end(),
                    [](char c) { return c >= '0' && c <= '9'; })) {
      throw InvalidArgument("variable plan name may not be numeric");
    }
  }
  if (output_dir.empty()) throw InvalidArgument("sweep needs an output_dir");
  if (scorer.kind == ScorerConfig::Kind::ngram && scorer.order < 1) {
    throw InvalidArgument("n-gram order must be >= 1");
  }
  if (scorer.kind == ScorerConfig::Kind::external &&
      scorer.external_pattern.empty()) {
    throw InvalidArgument("external scorer needs a score path pattern");
  }
  if (chunk_len == 0) throw InvalidArgument("chunk_len must be >= 1");
}

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.empty() || p.is_absolute() ? p : base / p;
}

fs::path resolve_output(const fs::path& base, const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return fs::path(root) / p;
  }
  return base / p;
}

}  // namespace

SweepConfig parse_sweep_config(std::string_view json_text,
                               const fs::path& base_dir) {
  SweepConfig c;
  try {
    const auto j = json::parse(json_text);
    if (j.contains("n_values")) j.at("n_values").get_to(c.n_values);
    if (j.contains("k_values")) j.at("k_values").get_to(c.k_values);
    if (j.contains("seeds")) {
      if (j.at("seeds").is_number()) {
        c.seeds.clear();
        for (std::uint64_t s = 0; s < j.at("seeds").get<std::uint64_t>(); ++s) {
          c.seeds.push_back(s);
        }
      } else {
        j.at("seeds").get_to(c.seeds);
      }
    }
    const auto paths = j.value("paths", json::object());
    c.features_manifest = resolve(
        base_dir, paths.value("features_manifest",
                              j.value("features_manifest", std::string())));
    c.kmeans_subset_hours = paths.value(
        "kmeans_subset_hours", j.value("kmeans_subset_hours", 100.0));
    c.output_dir = resolve_output(
        base_dir, paths.value("output_dir", j.value("output_dir", std::string())));
    const auto benches =
        paths.value("benchmarks", j.value("benchmarks", json::array()));
    for (const auto& b : benches) {
      c.benchmarks.push_back({b.at("name").get<std::string>(),
                              resolve(base_dir, b.at("manifest").get<std::string>())});
    }
    for (const auto& v : j.value("variable_plans", json::array())) {
      VariablePlanSource src;
      src.name = v.at("name").get<std::string>();
      const auto& files = v.at("boundaries");
      if (files.is_string()) {
        src.boundary_files.push_back(resolve(base_dir, files.get<std::string>()));
      } else {
        for (const auto& f : files) {
          src.boundary_files.push_back(resolve(base_dir, f.get<std::string>()));
        }
      }
      c.variable_plans.push_back(std::move(src));
    }
    if (j.contains("scorer")) {
      const auto& s = j.at("scorer");
      const auto kind = s.value("type", std::string("ngram"));
      if (kind == "ngram") {
        c.scorer.kind = ScorerConfig::Kind::ngram;
      } else if (kind == "external") {
        c.scorer.kind = ScorerConfig::Kind::external;
      } else {
        throw InvalidArgument("unknown scorer type '" + kind + "'");
      }
      c.scorer.order = s.value("order", c.scorer.order);
      if (s.contains("discount") && !s.at("discount").is_null()) {
        c.scorer.discount = s.at("discount").get<double>();
      }
      c.scorer.per_token = s.value("per_token", false);
      if (s.contains("scores")) {
        c.scorer.external_pattern =
            resolve(base_dir, s.at("scores").get<std::string>()).string();
      }
    }
    c.hop_ms = j.value("hop_ms", c.hop_ms);
    c.dedup = j.value("dedup", c.dedup);
    c.kmeans_max_iters = j.value("kmeans_max_iters", c.kmeans_max_iters);
    c.kmeans_rel_tol = j.value("kmeans_rel_tol", c.kmeans_rel_tol);
    c.kmeans_minibatch = j.value("kmeans_minibatch", c.kmeans_minibatch);
    c.chunk_len = j.value("chunk_len", c.chunk_len);
    c.use_separator = j.value("use_separator", c.use_separator);
    c.workers = j.value("workers", c.workers);
    c.inner_workers = j.value("inner_workers", c.inner_workers);
    c.verify_cache = j.value("verify_cache", c.verify_cache);
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::malformed,
                      std::string("sweep config: ") + e.what());
  }
  return c;
}

SweepConfig load_sweep_config(const fs::path& path) {
  return parse_sweep_config(read_file(path), path.parent_path());
}

std::string sweep_config_to_json(const SweepConfig& c) {
  json benches = json::array();
  for (const auto& b : c.benchmarks) {
    benches.push_back({{"name", b.name}, {"manifest", b.manifest.string()}});
  }
  json plans = json::array();
  for (const auto& p : c.variable_plans) {
    json files = json::array();
    for (const auto& f : p.boundary_files) files.push_back(f.string());
    plans.push_back({{"name", p.name}, {"boundaries", files}});
  }
  json scorer = {
      {"type", c.scorer.kind == ScorerConfig::Kind::ngram ? "ngram" : "external"},
      {"order", c.scorer.order},
      {"per_token", c.scorer.per_token}};
  if (c.scorer.discount) scorer["discount"] = *c.scorer.discount;
  if (!c.scorer.external_pattern.empty()) {
    scorer["scores"] = c.scorer.external_pattern;
  }
  return json{{"n_values", c.n_values},
              {"k_values", c.k_values},
              {"seeds", c.seeds},
              {"paths",
               {{"features_manifest", c.features_manifest.string()},
                {"kmeans_subset_hours", c.kmeans_subset_hours},
                {"output_dir", c.output_dir.string()},
                {"benchmarks", benches}}},
              {"variable_plans", plans},
              {"scorer", scorer},
              {"hop_ms", c.hop_ms},
              {"dedup", c.dedup},
              {"kmeans_max_iters", c.kmeans_max_iters},
              {"kmeans_rel_tol", c.kmeans_rel_tol},
              {"kmeans_minibatch", c.kmeans_minibatch},
              {"chunk_len", c.chunk_len},
              {"use_separator", c.use_separator},
              {"workers", c.workers},
              {"inner_workers", c.inner_workers},
              {"verify_cache", c.verify_cache}}
      .dump(2);
}

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kmeans: return "kmeans";
    case Stage::encode: return "encode";
    case Stage::pack: return "pack";
    case Stage::lm: return "lm";
    case Stage::eval: return "eval";
  }
  return "unknown";
}

RunKeyBuilder::RunKeyBuilder(std::string_view stage) { add(stage); }

RunKeyBuilder& RunKeyBuilder::add(std::string_view field) {
  material_ += std::to_string(field.size());
  material_ += ':';
  material_ += field;
  return *this;
}

RunKeyBuilder& RunKeyBuilder::add(std::uint64_t value) {
  return add(std::string_view(std::to_string(value)));
}

RunKeyBuilder& RunKeyBuilder::add(double value) {
  return add(std::string_view(format_double(value)));
}

RunKey RunKeyBuilder::finish() const { return {sha256_hex(material_)}; }

std::size_t StageCounters::total_computed() const {
  std::size_t total = 0;
  for (const auto& [stage, n] : computed) total += n;
  return total;
}

// ---------------------------------------------------------------------------
// Sweep execution

namespace {

struct LoadedUtterance {
  std::string utt_id;
  std::string digest;
  FeatureMatrix features;
};

struct LoadedBenchmark {
  std::string name;
  std::string digest;  // manifest text + stimulus digests
  std::vector<BenchmarkEntry> entries;
  // Stimulus features keyed by the reference string in the manifest.
  std::map<std::string, LoadedUtterance> stimuli;
};

struct PlanSource {
  std::string label;
  std::optional<std::uint32_t> width_ms;
  BoundaryMap bounds;
  std::string digest;

  SegmentationPlan plan_for(const std::string& utt_id) const {
    if (width_ms) return FixedPlan{*width_ms};
    auto it = bounds.find(utt_id);
    if (it == bounds.end()) {
      throw InvalidArgument("no '" + label + "' boundaries for " + utt_id);
    }
    return it->second;
  }
};

struct CellSpec {
  const PlanSource* plan = nullptr;
  std::uint32_t k = 0;
  std::uint64_t seed = 0;

  std::string describe() const {
    return "(" + plan->label + ", " + std::to_string(k) + ", seed " +
           std::to_string(seed) + ")";
  }
};

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool write_if_changed(const fs::path& path, std::string_view contents) {
  std::error_code ec;
  if (fs::exists(path, ec)) {
    try {
      if (read_file(path) == contents) return false;
    } catch (const IoError&) {
    }
  }
  write_file_atomic(path, contents);
  return true;
}

std::string expand_pattern(std::string pattern,
                           const std::map<std::string, std::string>& vars) {
  for (const auto& [name, value] : vars) {
    const std::string token = "{" + name + "}";
    for (auto pos = pattern.find(token); pos != std::string::npos;
         pos = pattern.find(token, pos + value.size())) {
      pattern.replace(pos, token.size(), value);
    }
  }
  return pattern;
}

class SweepRunner {
 public:
  explicit SweepRunner(const SweepConfig& config)
      : config_(config), cache_root_(config.output_dir / "cache") {}

  SweepResult run();

 private:
  void load_inputs();
  CellOutcome run_cell(const CellSpec& cell, std::vector<EvalReport>& reports);
  void spot_check(const std::vector<CellSpec>& cells,
                  const std::vector<CellOutcome>& outcomes, CacheCheck& check);

  fs::path stage_dir(Stage stage, const RunKey& key) const {
    return cache_root_ / std::string(stage_name(stage)) / key.hex;
  }

  // Runs `produce(tmp_dir)` unless the artifact exists, then publishes the
  // directory with a rename.
  template <typename Produce>
  StageRecord stage(Stage stage, const RunKey& key, std::string detail,
                    Produce&& produce);

  RunKey kmeans_key(const CellSpec& cell) const;
  RunKey encode_key(const CellSpec& cell, const RunKey& km) const;
  RunKey pack_key(const CellSpec& cell, const RunKey& enc) const;
  RunKey lm_key(const CellSpec& cell, const RunKey& enc) const;
  RunKey eval_key(const CellSpec& cell, const LoadedBenchmark& bench,
                  const RunKey& km, const std::optional<RunKey>& lm,
                  const std::string& external_digest) const;

  Codebook train_codebook(const CellSpec& cell) const;
  std::vector<UnitSequence> encode_corpus(const CellSpec& cell,
                                          const Codebook& codebook) const;
  NgramModel train_lm(const CellSpec& cell,
                      const std::vector<UnitSequence>& corpus) const;
  std::vector<StimulusPair> encode_benchmark(const CellSpec& cell,
                                             const LoadedBenchmark& bench,
                                             const Codebook& codebook) const;
  std::string external_scores_path(const CellSpec& cell,
                                   const std::string& benchmark) const;

  const SweepConfig& config_;
  fs::path cache_root_;
  CorpusManifest manifest_;
  std::vector<LoadedUtterance> corpus_;
  std::map<std::string, std::size_t> corpus_index_;
  std::string corpus_digest_;
  std::vector<LoadedBenchmark> benchmarks_;
  std::vector<PlanSource> plans_;

  std::mutex counter_mutex_;
  StageCounters counters_;
};

LoadedUtterance load_utterance(const std::string& id, const fs::path& path) {
  const std::string bytes = read_file(path);
  return {id, sha256_hex(bytes), decode_features(bytes)};
}

void SweepRunner::load_inputs() {
  manifest_ = read_manifest(config_.features_manifest);
  if (manifest_.entries.empty()) throw InvalidArgument("empty features manifest");
  RunKeyBuilder corpus_key("corpus");
  for (const auto& e : manifest_.entries) {
    corpus_index_[e.utt_id] = corpus_.size();
    corpus_.push_back(load_utterance(e.utt_id, manifest_.resolve(e)));
    if (corpus_.back().features.hop_ms != config_.hop_ms) {
      throw InvalidArgument("feature hop of " + e.utt_id +
                            " differs from the configured hop_ms");
    }
    corpus_key.add(e.utt_id).add(corpus_.back().digest);
  }
  corpus_digest_ = corpus_key.finish().hex;

  for (const auto& src : config_.benchmarks) {
    LoadedBenchmark b;
    b.name = src.name;
    const std::string text = read_file(src.manifest);
    b.entries = read_benchmark_manifest(src.manifest);
    RunKeyBuilder key("benchmark");
    key.add(text);
    for (auto& e : b.entries) {
      e.benchmark = src.name;
      for (const auto* ref : {&e.pos, &e.neg}) {
        if (b.stimuli.count(*ref)) continue;
        const fs::path path = resolve(src.manifest.parent_path(), *ref);
        auto utt = load_utterance(path.stem().string(), path);
        key.add(*ref).add(utt.digest);
        b.stimuli.emplace(*ref, std::move(utt));
      }
    }
    b.digest = key.finish().hex;
    benchmarks_.push_back(std::move(b));
  }

  for (auto n : config_.n_values) {
    plans_.push_back({std::to_string(n), n, {},
                      RunKeyBuilder("fixed").add(std::uint64_t{n}).finish().hex});
  }
  for (const auto& v : config_.variable_plans) {
    PlanSource p;
    p.label = v.name;
    RunKeyBuilder key("variable");
    key.add(v.name);
    for (const auto& f : v.boundary_files) {
      key.add(read_file(f));
      for (auto& [id, plan] : read_boundaries(f)) {
        if (!p.bounds.emplace(id, std::move(plan)).second) {
          throw InvalidArgument("utterance " + id + " has boundaries in two '" +
                                v.name + "' files");
        }
      }
    }
    p.digest = key.finish().hex;
    plans_.push_back(std::move(p));
  }
}

template <typename Produce>
StageRecord SweepRunner::stage(Stage st, const RunKey& key, std::string detail,
                               Produce&& produce) {
  StageRecord rec{st, std::move(detail), key.hex, false, 0.0};
  const fs::path dir = stage_dir(st, key);
  std::error_code ec;
  if (fs::is_directory(dir, ec)) {
    rec.cached = true;
    std::lock_guard lock(counter_mutex_);
    ++counters_.cache_hits[st];
    return rec;
  }
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream tmp_name;
  tmp_name << key.hex << ".tmp." << std::this_thread::get_id();
  const fs::path tmp = dir.parent_path() / tmp_name.str();
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec) throw IoError("cannot create " + tmp.string());
  try {
    produce(tmp);
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  fs::rename(tmp, dir, ec);
  if (ec) {
    // Another worker published the same key first.
    fs::remove_all(tmp, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot publish " + dir.string());
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  std::lock_guard lock(counter_mutex_);
  ++counters_.computed[st];
  return rec;
}

RunKey SweepRunner::kmeans_key(const CellSpec& cell) const {
  const auto subset = sample_subset(manifest_, config_.kmeans_subset_hours,
                                    cell.seed);
  RunKeyBuilder key("kmeans/v1");
  key.add(cell.plan->digest)
      .add(std::uint64_t{cell.k})
      .add(cell.seed)
      .add(std::uint64_t{config_.kmeans_max_iters})
      .add(config_.kmeans_rel_tol)
      .add(std::uint64_t{config_.kmeans_minibatch});
  for (const auto& e : subset.entries) {
    key.add(e.utt_id).add(corpus_[corpus_index_.at(e.utt_id)].digest);
  }
  return key.finish();
}

RunKey SweepRunner::encode_key(const CellSpec& cell, const RunKey& km) const {
  return RunKeyBuilder("encode/v1")
      .add(km.hex)
      .add(cell.plan->digest)
      .add(std::uint64_t{config_.dedup})
      .add(corpus_digest_)
      .finish();
}

RunKey SweepRunner::pack_key(const CellSpec& cell, const RunKey& enc) const {
  return RunKeyBuilder("pack/v1")
      .add(enc.hex)
      .add(std::uint64_t{cell.k})
      .add(std::uint64_t{config_.chunk_len})
      .add(std::uint64_t{config_.use_separator})
      .finish();
}

RunKey SweepRunner::lm_key(const CellSpec& cell, const RunKey& enc) const {
  return RunKeyBuilder("lm/v1")
      .add(enc.hex)
      .add(std::uint64_t{cell.k})
      .add(std::uint64_t{config_.scorer.order})
      .add(config_.scorer.discount ? format_double(*config_.scorer.discount)
                                   : std::string("auto"))
      .finish();
}

RunKey SweepRunner::eval_key(const CellSpec& cell, const LoadedBenchmark& bench,
                             const RunKey& km, const std::optional<RunKey>& lm,
                             const std::string& external_digest) const {
  RunKeyBuilder key("eval/v1");
  key.add(bench.name)
      .add(bench.digest)
      .add(km.hex)
      .add(cell.plan->digest)
      .add(std::uint64_t{config_.dedup})
      .add(cell.plan->label)
      .add(std::uint64_t{cell.k})
      .add(cell.seed)
      .add(std::uint64_t{config_.scorer.per_token});
  key.add(lm ? lm->hex : std::string("external")).add(external_digest);
  return key.finish();
}

Codebook SweepRunner::train_codebook(const CellSpec& cell) const {
  const auto subset =
      sample_subset(manifest_, config_.kmeans_subset_hours, cell.seed);
  std::vector<float> vectors;
  std::uint32_t dim = 0;
  for (const auto& e : subset.entries) {
    const auto& utt = corpus_[corpus_index_.at(e.utt_id)];
    const auto pooled = segment(utt.features, cell.plan->plan_for(utt.utt_id));
    dim = pooled.dim;
    vectors.insert(vectors.end(), pooled.segments.begin(),
                   pooled.segments.end());
  }
  if (dim == 0) dim = corpus_.front().features.dim;
  KMeansConfig km;
  km.k = cell.k;
  km.seed = cell.seed;
  km.max_iters = config_.kmeans_max_iters;
  km.rel_tol = config_.kmeans_rel_tol;
  km.minibatch_size = config_.kmeans_minibatch;
  km.workers = config_.inner_workers;
  Codebook cb = train_kmeans(VectorView(vectors, dim), km);
  cb.meta.segment_width_ms = cell.plan->width_ms.value_or(0);
  cb.meta.segmentation = cell.plan->label;
  return cb;
}

std::vector<UnitSequence> SweepRunner::encode_corpus(
    const CellSpec& cell, const Codebook& codebook) const {
  std::vector<UnitSequence> out;
  out.reserve(corpus_.size());
  for (const auto& utt : corpus_) {
    out.push_back(encode(utt.features, cell.plan->plan_for(utt.utt_id),
                         codebook, config_.dedup, utt.utt_id));
  }
  return out;
}

NgramModel SweepRunner::train_lm(const CellSpec& cell,
                                 const std::vector<UnitSequence>& corpus) const {
  NgramConfig nc;
  nc.order = config_.scorer.order;
  nc.discount = config_.scorer.discount;
  return train_ngram(corpus, cell.k, nc);
}

std::vector<StimulusPair> SweepRunner::encode_benchmark(
    const CellSpec& cell, const LoadedBenchmark& bench,
    const Codebook& codebook) const {
  auto units_of = [&](const std::string& ref) {
    const auto& utt = bench.stimuli.at(ref);
    return encode(utt.features, cell.plan->plan_for(utt.utt_id), codebook,
                  config_.dedup, utt.utt_id)
        .units;
  };
  std::vector<StimulusPair> pairs;
  pairs.reserve(bench.entries.size());
  for (const auto& e : bench.entries) {
    pairs.push_back({e.pair_id, bench.name, e.category, units_of(e.pos),
                     units_of(e.neg)});
  }
  return pairs;
}

std::string SweepRunner::external_scores_path(const CellSpec& cell,
                                              const std::string& benchmark) const {
  return expand_pattern(config_.scorer.external_pattern,
                        {{"benchmark", benchmark},
                         {"segmentation", cell.plan->label},
                         {"k", std::to_string(cell.k)},
                         {"seed", std::to_string(cell.seed)}});
}

CellOutcome SweepRunner::run_cell(const CellSpec& cell,
                                  std::vector<EvalReport>& reports) {
  CellOutcome out;
  out.segmentation = cell.plan->label;
  out.k = cell.k;
  out.seed = cell.seed;
  try {
    const RunKey km = kmeans_key(cell);
    out.stages.push_back(stage(Stage::kmeans, km, {}, [&](const fs::path& dir) {
      write_codebook(train_codebook(cell), dir / "codebook.scbk");
    }));
    const Codebook codebook = read_codebook(stage_dir(Stage::kmeans, km) /
                                            "codebook.scbk");

    const RunKey enc = encode_key(cell, km);
    out.stages.push_back(stage(Stage::encode, enc, {}, [&](const fs::path& dir) {
      write_unit_corpus(encode_corpus(cell, codebook), dir / "units.txt",
                        dir / "spans.txt");
    }));
    const auto corpus =
        read_unit_corpus(stage_dir(Stage::encode, enc) / "units.txt");

    const RunKey pk = pack_key(cell, enc);
    out.stages.push_back(stage(Stage::pack, pk, {}, [&](const fs::path& dir) {
      write_packed(pack(corpus, cell.k, config_.chunk_len, config_.use_separator),
                   dir / "packed.txt");
    }));

    std::optional<RunKey> lm;
    std::optional<NgramModel> model;
    if (config_.scorer.kind == ScorerConfig::Kind::ngram) {
      lm = lm_key(cell, enc);
      out.stages.push_back(stage(Stage::lm, *lm, {}, [&](const fs::path& dir) {
        write_ngram(train_lm(cell, corpus), dir / "model.sngm");
      }));
      model = read_ngram(stage_dir(Stage::lm, *lm) / "model.sngm");
    }

    for (const auto& bench : benchmarks_) {
      std::string external_digest;
      std::optional<ScoreTable> table;
      if (!model) {
        const std::string path = external_scores_path(cell, bench.name);
        external_digest = sha256_hex(read_file(path));
        table = load_external_scores(path);
      }
      const RunKey ek = eval_key(cell, bench, km, lm, external_digest);
      out.stages.push_back(
          stage(Stage::eval, ek, bench.name, [&](const fs::path& dir) {
            const auto pairs = encode_benchmark(cell, bench, codebook);
            const RunConfig rc{cell.plan->label, cell.k, cell.seed};
            EvalReport report;
            if (model) {
              report = evaluate(NgramScorer(*model, config_.scorer.per_token),
                                pairs, bench.name, rc, config_.inner_workers);
            } else {
              report = evaluate(TableScorer(*table), pairs, bench.name, rc,
                                config_.inner_workers);
            }
            write_file_atomic(dir / "report.json", report_to_json(report));
          }));
      reports.push_back(report_from_json(
          read_file(stage_dir(Stage::eval, ek) / "report.json")));
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

void SweepRunner::spot_check(const std::vector<CellSpec>& cells,
                             const std::vector<CellOutcome>& outcomes,
                             CacheCheck& check) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].ok) candidates.push_back(i);
  }
  if (candidates.empty()) return;
  const auto tick = static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count());
  const auto& cell = cells[candidates[tick % candidates.size()]];
  check.performed = true;
  check.cell = cell.describe();

  const RunKey km = kmeans_key(cell);
  const RunKey enc = encode_key(cell, km);
  const fs::path scratch = config_.output_dir / "tmp" / "spot_check";
  std::error_code ec;
  fs::remove_all(scratch, ec);
  try {
    const Codebook codebook =
        read_codebook(stage_dir(Stage::kmeans, km) / "codebook.scbk");
    write_unit_corpus(encode_corpus(cell, codebook), scratch / "units.txt",
                      scratch / "spans.txt");
    const fs::path cached = stage_dir(Stage::encode, enc);
    bool same = read_file(scratch / "units.txt") ==
                    read_file(cached / "units.txt") &&
                read_file(scratch / "spans.txt") == read_file(cached / "spans.txt");
    std::string detail = "encode";
    if (same && config_.scorer.kind == ScorerConfig::Kind::ngram) {
      const auto corpus = read_unit_corpus(cached / "units.txt");
      same = train_lm(cell, corpus).serialize() ==
             read_file(stage_dir(Stage::lm, lm_key(cell, enc)) / "model.sngm");
      detail += "+lm";
    }
    check.ok = same;
    check.detail = detail + (same ? " identical" : " MISMATCH");
  } catch (const std::exception& e) {
    check.ok = false;
    check.detail = std::string("spot check failed: ") + e.what();
  }
  fs::remove_all(config_.output_dir / "tmp", ec);
}

SweepResult SweepRunner::run() {
  config_.validate();
  load_inputs();

  std::vector<CellSpec> cells;
  for (const auto& plan : plans_) {
    for (auto k : config_.k_values) {
      for (auto seed : config_.seeds) cells.push_back({&plan, k, seed});
    }
  }

  SweepResult result;
  result.cells.resize(cells.size());
  std::vector<std::vector<EvalReport>> cell_reports(cells.size());
  parallel_for(cells.size(), config_.workers, [&](std::size_t i) {
    result.cells[i] = run_cell(cells[i], cell_reports[i]);
  });
  for (auto& rs : cell_reports) {
    for (auto& r : rs) result.reports.push_back(std::move(r));
  }
  result.counters = counters_;
  if (config_.verify_cache) spot_check(cells, result.cells, result.cache_check);

  // Per-cell report copies for `sweep report`.
  for (const auto& r : result.reports) {
    write_if_changed(config_.output_dir / "reports" / r.benchmark /
                         (r.config.segmentation + "_K" +
                          std::to_string(r.config.k) + "_s" +
                          std::to_string(r.config.seed) + ".json"),
                     report_to_json(r));
  }
  if (!result.reports.empty()) {
    result.aggregates = summarize_reports(result.reports);
    result.grid = grid_table(result.aggregates);
    result.report_files =
        emit_report(result.aggregates, config_.output_dir / "report");
  }

  json ledger_cells = json::array();
  for (const auto& c : result.cells) {
    json stages = json::array();
    for (const auto& s : c.stages) {
      stages.push_back({{"stage", stage_name(s.stage)},
                        {"detail", s.detail},
                        {"key", s.key},
                        {"cached", s.cached},
                        {"seconds", s.seconds}});
    }
    json entry = {{"segmentation", c.segmentation},
                  {"k", c.k},
                  {"seed", c.seed},
                  {"status", c.ok ? "ok" : "failed"},
                  {"stages", stages}};
    if (!c.ok) entry["error"] = c.error;
    ledger_cells.push_back(std::move(entry));
  }
  json computed = json::object();
  json hits = json::object();
  for (auto st : kStages) {
    const auto name = std::string(stage_name(st));
    computed[name] = result.counters.computed.count(st)
                         ? result.counters.computed.at(st)
                         : 0;
    hits[name] = result.counters.cache_hits.count(st)
                     ? result.counters.cache_hits.at(st)
                     : 0;
  }
  json ledger = {{"timestamp", timestamp_utc()},
                 {"cells", ledger_cells},
                 {"computed", computed},
                 {"cache_hits", hits}};
  if (result.cache_check.performed) {
    ledger["cache_check"] = {{"cell", result.cache_check.cell},
                             {"ok", result.cache_check.ok},
                             {"detail", result.cache_check.detail}};
  }
  write_file_atomic(config_.output_dir / "ledger.json", ledger.dump(2) + "\n");
  return result;
}

}  // namespace

SweepResult run_sweep(const SweepConfig& config) {
  return SweepRunner(config).run();
}

std::vector<SeedAggregate> summarize_reports(std::span<const EvalReport> reports) {
  struct GroupLess {
    bool operator()(const std::tuple<std::string, std::string, std::uint32_t>& a,
                    const std::tuple<std::string, std::string, std::uint32_t>& b)
        const {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
      if (std::get<1>(a) != std::get<1>(b)) {
        return segmentation_less(std::get<1>(a), std::get<1>(b));
      }
      return std::get<2>(a) < std::get<2>(b);
    }
  };
  std::map<std::tuple<std::string, std::string, std::uint32_t>,
           std::vector<EvalReport>, GroupLess>
      groups;
  for (const auto& r : reports) {
    groups[{r.benchmark, r.config.segmentation, r.config.k}].push_back(r);
  }
  std::vector<SeedAggregate> out;
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(),
              [](const EvalReport& a, const EvalReport& b) {
                return a.config.seed < b.config.seed;
              });
    for (std::size_t i = 1; i < group.size(); ++i) {
      if (group[i].config.seed == group[i - 1].config.seed) {
        throw InvalidArgument("duplicate report for one seed in " +
                              std::get<0>(key));
      }
    }
    out.push_back(aggregate_seeds(group));
  }
  return out;
}

std::vector<EvalReport> load_reports(const fs::path& reports_dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (fs::recursive_directory_iterator it(reports_dir, ec), end; it != end;
       it.increment(ec)) {
    if (ec) break;
    if (it->is_regular_file() && it->path().extension() == ".json") {
      files.push_back(it->path());
    }
  }
  if (ec) throw IoError("cannot list " + reports_dir.string());
  std::sort(files.begin(), files.end());
  std::vector<EvalReport> reports;
  for (const auto& f : files) reports.push_back(report_from_json(read_file(f)));
  return reports;
}

std::string grid_to_csv(const GridMatrix& grid) {
  std::ostringstream out;
  out << 'N';
  for (auto k : grid.cols) out << ',' << k;
  out << '\n';
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    out << grid.rows[r];
    for (std::size_t c = 0; c < grid.cols.size(); ++c) {
      out << ',';
      if (const auto& cell = grid.at(r, c)) out << format_double(*cell);
    }
    out << '\n';
  }
  return out.str();
}

GridMatrix grid_from_csv(std::string_view text, std::string name) {
  GridMatrix grid;
  grid.name = std::move(name);
  auto lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw FormatError(FormatError::Kind::malformed, "empty grid");
  const auto header = split(lines[0], ',');
  for (std::size_t i = 1; i < header.size(); ++i) {
    grid.cols.push_back(static_cast<std::uint32_t>(parse_u64(header[i])));
  }
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto fields = split(lines[l], ',');
    if (fields.size() != header.size()) {
      throw FormatError(FormatError::Kind::malformed,
                        "grid row " + std::to_string(l) + " has wrong width");
    }
    grid.rows.emplace_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      grid.cells.push_back(fields[i].empty()
                               ? std::nullopt
                               : std::optional<double>(parse_f64(fields[i])));
    }
  }
  return grid;
}

std::string best_k_to_csv(std::span<const BestK> rows) {
  std::ostringstream out;
  out << "N,best_K,avg_accuracy\n";
  for (const auto& r : rows) {
    out << r.segmentation << ',' << r.k << ',' << format_double(r.accuracy)
        << '\n';
  }
  return out.str();
}

namespace {

json grid_to_json(const GridMatrix& grid) {
  json cells = json::array();
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < grid.cols.size(); ++c) {
      const auto& cell = grid.at(r, c);
      row.push_back(cell ? json(*cell) : json(nullptr));
    }
    cells.push_back(std::move(row));
  }
  return {{"name", grid.name},
          {"rows", grid.rows},
          {"cols", grid.cols},
          {"cells", cells}};
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

}  // namespace

std::vector<fs::path> emit_report(std::span<const SeedAggregate> aggregates,
                                  const fs::path& out_dir) {
  if (aggregates.empty()) throw InvalidArgument("no aggregates to report");
  const GridTables tables = grid_table(aggregates);
  std::vector<fs::path> written;
  auto put = [&](const fs::path& name, const std::string& contents) {
    write_if_changed(out_dir / name, contents);
    written.push_back(out_dir / name);
  };
  for (const auto& g : tables.per_benchmark) {
    put("grid_" + g.name + ".csv", grid_to_csv(g));
    put("grid_" + g.name + ".json", grid_to_json(g).dump(2) + "\n");
  }
  put("grid_average.csv", grid_to_csv(tables.average));
  put("grid_average.json", grid_to_json(tables.average).dump(2) + "\n");
  put("best_k.csv", best_k_to_csv(tables.best_k));
  json best = json::array();
  for (const auto& b : tables.best_k) {
    best.push_back(
        {{"N", b.segmentation}, {"best_K", b.k}, {"avg_accuracy", b.accuracy}});
  }
  put("best_k.json", best.dump(2) + "\n");
  put("aggregates.csv", aggregates_to_csv(aggregates));
  put("aggregates.json", aggregates_to_json(aggregates));

  std::ostringstream summary;
  summary << "benchmarks:";
  for (const auto& g : tables.per_benchmark) summary << ' ' << g.name;
  summary << "\ngrid: " << tables.average.rows.size() << " segmentations x "
          << tables.average.cols.size() << " K values\n\n";
  summary << "average accuracy (rows: N, cols: K)\n";
  summary << "N";
  for (auto k : tables.average.cols) summary << '\t' << k;
  summary << '\n';
  for (std::size_t r = 0; r < tables.average.rows.size(); ++r) {
    summary << tables.average.rows[r];
    for (std::size_t c = 0; c < tables.average.cols.size(); ++c) {
      const auto& cell = tables.average.at(r, c);
      summary << '\t' << (cell ? fixed(*cell, 4) : std::string("-"));
    }
    summary << '\n';
  }
  summary << "\nbest K per N\nN\tbest_K\tavg_accuracy\n";
  for (const auto& b : tables.best_k) {
    summary << b.segmentation << '\t' << b.k << '\t' << fixed(b.accuracy, 4)
            << '\n';
  }
  put("summary.txt", summary.str());
  return written;
}

}  // namespace unitkit
