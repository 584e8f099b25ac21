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

// unitkit command-line front end.
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "unitkit/error.hpp"
#include "unitkit/evaluator.hpp"
#include "unitkit/feature_store.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/packer.hpp"
#include "unitkit/quantizer.hpp"
#include "unitkit/segmenter.hpp"
#include "unitkit/sweep.hpp"
#include "unitkit/unit_lm.hpp"
#include "unitkit/unitizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace unitkit;

namespace {

// Options that may come from either the command line or --config.
constexpr const char* kRequired = "Required (flag or config)";

// Relative output paths land under $UNITKIT_OUTPUT_ROOT when it is set.
fs::path out_path(const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return fs::path(root) / p;
  }
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// Fills options not given on the command line from a JSON object whose keys
// are the long option names with '-' replaced by '_'.
void apply_json_config(CLI::App* app, const fs::path& path) {
  const json j = json::parse(read_file(path));
  if (!j.is_object()) throw InvalidArgument(path.string() + ": expected an object");
  for (CLI::Option* opt : app->get_options()) {
    if (opt->count() > 0) continue;
    std::string key = opt->get_single_name();
    if (key == "config" || key == "help") continue;
    for (auto& c : key) c = c == '-' ? '_' : c;
    auto it = j.find(key);
    if (it == j.end()) continue;
    auto as_text = [](const json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (it->is_array()) {
      for (const auto& v : *it) opt->add_result(as_text(v));
    } else {
      opt->add_result(as_text(*it));
    }
    opt->run_callback();
  }
}

CLI::App* command(CLI::App& parent, const std::string& name,
                  const std::string& help, std::string& config) {
  CLI::App* sub = parent.add_subcommand(name, help);
  sub->add_option("--config", config, "JSON file with option defaults")
      ->check(CLI::ExistingFile);
  return sub;
}

struct SegmentOptions {
  std::uint32_t segment_ms = 0;
  std::string boundaries;

  void add(CLI::App* app) {
    app->add_option("--segment-ms", segment_ms, "fixed segment width in ms");
    app->add_option("--boundaries", boundaries,
                    "boundary file for variable segmentation");
  }

  std::string label(const std::string& fallback = "") const {
    if (segment_ms) return std::to_string(segment_ms);
    if (!boundaries.empty()) return fs::path(boundaries).stem().string();
    return fallback;
  }

  // Returns a per-utterance plan lookup; `default_ms` applies when neither
  // option is set.
  std::function<SegmentationPlan(const std::string&)> planner(
      std::uint32_t default_ms = 0) const {
    if (!boundaries.empty()) {
      auto map = std::make_shared<BoundaryMap>(read_boundaries(boundaries));
      return [map](const std::string& id) -> SegmentationPlan {
        auto it = map->find(id);
        if (it == map->end()) {
          throw InvalidArgument("no boundaries for utterance " + id);
        }
        return it->second;
      };
    }
    const std::uint32_t ms = segment_ms ? segment_ms : default_ms;
    if (ms == 0) throw InvalidArgument("need --segment-ms or --boundaries");
    return [ms](const std::string&) -> SegmentationPlan { return FixedPlan{ms}; };
  }
};

std::vector<UtteranceRecord> load_corpus(const fs::path& manifest_path) {
  const auto m = read_manifest(manifest_path);
  std::vector<UtteranceRecord> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    auto rec = read_features(m.resolve(e));
    rec.utt_id = e.utt_id;
    out.push_back(std::move(rec));
  }
  return out;
}

// Pair references may name a unit-corpus id or a feature file; the latter
// is matched by file stem.
std::vector<StimulusPair> load_pairs(const fs::path& pairs_path,
                                     const std::vector<UnitSequence>& units) {
  auto entries = read_benchmark_manifest(pairs_path);
  std::set<std::string> ids;
  for (const auto& u : units) ids.insert(u.utt_id);
  for (auto& e : entries) {
    for (auto* ref : {&e.pos, &e.neg}) {
      if (!ids.count(*ref)) *ref = fs::path(*ref).stem().string();
    }
  }
  return pairs_from_units(entries, units);
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unitkit: discrete speech units, n-gram LMs and sweeps"};
  app.require_subcommand(1);

  // features ---------------------------------------------------------------
  CLI::App* features = app.add_subcommand("features", "feature corpora");
  features->require_subcommand(1);

  std::string sample_manifest, sample_out;
  double sample_hours = 0;
  std::uint64_t sample_seed = 0;
  std::string sample_cfg;
  CLI::App* sample = command(*features, "sample",
                             "seeded duration-budget subset of a manifest",
                             sample_cfg);
  sample->add_option("--manifest", sample_manifest)->group(kRequired);
  sample->add_option("--hours", sample_hours)->group(kRequired);
  sample->add_option("--seed", sample_seed);
  sample->add_option("--out", sample_out)->group(kRequired);

  SyntheticSpec synth_spec;
  std::string synth_out, synth_cfg;
  std::uint64_t synth_proto = 0;
  CLI::App* synth =
      command(*features, "synth", "write a synthetic feature corpus", synth_cfg);
  synth->add_option("--out", synth_out)->group(kRequired);
  synth->add_option("--utts", synth_spec.num_utts);
  synth->add_option("--min-frames", synth_spec.min_frames);
  synth->add_option("--max-frames", synth_spec.max_frames);
  synth->add_option("--dim", synth_spec.dim);
  synth->add_option("--classes", synth_spec.num_latent_classes);
  synth->add_option("--noise", synth_spec.noise_scale);
  synth->add_option("--seed", synth_spec.seed);
  synth->add_option("--hop-ms", synth_spec.hop_ms);
  synth->add_option("--min-run", synth_spec.min_run);
  synth->add_option("--max-run", synth_spec.max_run);
  synth->add_option("--prototype-scale", synth_spec.prototype_scale);
  CLI::Option* proto_opt = synth->add_option("--prototype-seed", synth_proto);
  synth->add_option("--transitions", synth_spec.transitions,
                    "row-major class transition matrix");
  synth->add_flag("--smooth", synth_spec.smooth);
  synth->add_option("--prefix", synth_spec.id_prefix);

  // kmeans -----------------------------------------------------------------
  CLI::App* kmeans = app.add_subcommand("kmeans", "codebooks");
  kmeans->require_subcommand(1);
  std::string km_manifest, km_out, km_cfg;
  double km_hours = 0;
  KMeansConfig km;
  SegmentOptions km_seg;
  CLI::App* km_train =
      command(*kmeans, "train", "train a k-means codebook on pooled segments",
              km_cfg);
  km_train->add_option("--manifest", km_manifest)->group(kRequired);
  km_seg.add(km_train);
  km_train->add_option("--k", km.k);
  km_train->add_option("--seed", km.seed);
  km_train->add_option("--max-iters", km.max_iters);
  km_train->add_option("--rel-tol", km.rel_tol);
  km_train->add_option("--minibatch", km.minibatch_size);
  km_train->add_option("--workers", km.workers);
  km_train->add_option("--hours", km_hours, "train on a seeded subset");
  km_train->add_option("--out", km_out)->group(kRequired);

  // encode -----------------------------------------------------------------
  std::string enc_manifest, enc_codebook, enc_out, enc_spans, enc_cfg;
  bool enc_no_dedup = false;
  SegmentOptions enc_seg;
  CLI::App* enc =
      command(app, "encode", "turn feature files into unit sequences", enc_cfg);
  enc->add_option("--manifest", enc_manifest)->group(kRequired);
  enc->add_option("--codebook", enc_codebook)->group(kRequired);
  enc_seg.add(enc);
  enc->add_flag("--no-dedup", enc_no_dedup);
  enc->add_option("--out", enc_out)->group(kRequired);
  enc->add_option("--spans", enc_spans, "also write per-unit time spans");

  // pack -------------------------------------------------------------------
  std::string pack_units, pack_out, pack_cfg;
  std::uint32_t pack_k = 0;
  std::uint32_t pack_len = kDefaultChunkLen;
  bool pack_no_sep = false;
  CLI::App* pk = command(app, "pack", "pack units into fixed-length chunks",
                         pack_cfg);
  pk->add_option("--units", pack_units)->group(kRequired);
  pk->add_option("--k", pack_k)->group(kRequired);
  pk->add_option("--chunk-len", pack_len);
  pk->add_flag("--no-separator", pack_no_sep);
  pk->add_option("--out", pack_out)->group(kRequired);

  // lm ---------------------------------------------------------------------
  CLI::App* lm = app.add_subcommand("lm", "n-gram unit language models");
  lm->require_subcommand(1);
  std::string lm_units, lm_out, lm_cfg;
  std::uint32_t lm_vocab = 0;
  NgramConfig ngram;
  double lm_discount = 0;
  bool lm_no_eos = false;
  CLI::App* lm_train =
      command(*lm, "train", "train an interpolated Kneser-Ney model", lm_cfg);
  lm_train->add_option("--units", lm_units)->group(kRequired);
  lm_train->add_option("--vocab", lm_vocab)->group(kRequired);
  lm_train->add_option("--order", ngram.order);
  CLI::Option* disc_opt = lm_train->add_option("--discount", lm_discount);
  lm_train->add_flag("--no-eos", lm_no_eos);
  lm_train->add_option("--out", lm_out)->group(kRequired);

  std::string sc_model, sc_units, sc_pairs, sc_out, sc_cfg;
  bool sc_per_token = false;
  CLI::App* lm_score =
      command(*lm, "score", "log-probabilities of sequences or pairs", sc_cfg);
  lm_score->add_option("--model", sc_model)->group(kRequired);
  lm_score->add_option("--units", sc_units)->group(kRequired);
  lm_score->add_option("--pairs", sc_pairs, "score a benchmark manifest");
  lm_score->add_flag("--per-token", sc_per_token);
  lm_score->add_option("--out", sc_out);

  // eval -------------------------------------------------------------------
  std::string ev_pairs, ev_units, ev_model, ev_scores, ev_out, ev_cfg;
  std::string ev_bench = "custom", ev_seg;
  std::uint32_t ev_k = 0;
  std::uint64_t ev_seed = 0;
  bool ev_per_token = false;
  std::size_t ev_workers = 1;
  CLI::App* ev = command(app, "eval", "minimal-pair accuracy", ev_cfg);
  ev->add_option("--pairs", ev_pairs)->group(kRequired);
  ev->add_option("--units", ev_units, "unit corpus holding the stimuli");
  ev->add_option("--model", ev_model);
  ev->add_option("--scores", ev_scores, "precomputed pair scores (TSV)");
  ev->add_option("--benchmark", ev_bench);
  ev->add_option("--segmentation", ev_seg);
  ev->add_option("--k", ev_k);
  ev->add_option("--seed", ev_seed);
  ev->add_flag("--per-token", ev_per_token);
  ev->add_option("--workers", ev_workers);
  ev->add_option("--out", ev_out);

  // diff -------------------------------------------------------------------
  std::string df_features, df_cb_a, df_cb_b, df_out, df_cfg;
  SegmentOptions df_seg_a, df_seg_b;
  bool df_no_dedup = false;
  CLI::App* df = command(app, "diff",
                         "compare two tokenizations of one utterance", df_cfg);
  df->add_option("--features", df_features)->group(kRequired);
  df->add_option("--codebook-a", df_cb_a)->group(kRequired);
  df->add_option("--codebook-b", df_cb_b)->group(kRequired);
  df->add_option("--segment-ms-a", df_seg_a.segment_ms);
  df->add_option("--segment-ms-b", df_seg_b.segment_ms);
  df->add_option("--boundaries-a", df_seg_a.boundaries);
  df->add_option("--boundaries-b", df_seg_b.boundaries);
  df->add_flag("--no-dedup", df_no_dedup);
  df->add_option("--out", df_out);

  // stats ------------------------------------------------------------------
  std::string st_units, st_manifest, st_codebook, st_out, st_cfg;
  SegmentOptions st_seg;
  CLI::App* st = command(app, "stats", "token counts before and after dedup",
                         st_cfg);
  st->add_option("--units", st_units, "undeduplicated unit corpus");
  st->add_option("--manifest", st_manifest);
  st->add_option("--codebook", st_codebook);
  st_seg.add(st);
  st->add_option("--out", st_out);

  // sweep ------------------------------------------------------------------
  CLI::App* sw = app.add_subcommand("sweep", "(N, K, seed) grid runs");
  sw->require_subcommand(1);
  std::string sw_config, sw_output;
  std::vector<std::uint32_t> sw_n, sw_k;
  std::vector<std::uint64_t> sw_seeds;
  std::size_t sw_workers = 0, sw_inner = 0;
  std::uint32_t sw_order = 0;
  double sw_hours = 0;
  bool sw_no_verify = false;
  CLI::App* sw_run = sw->add_subcommand("run", "run or resume a sweep");
  sw_run->add_option("--config", sw_config, "sweep JSON config")
      ->required()
      ->check(CLI::ExistingFile);
  sw_run->add_option("--output-dir", sw_output);
  sw_run->add_option("--n-values", sw_n);
  sw_run->add_option("--k-values", sw_k);
  sw_run->add_option("--seeds", sw_seeds);
  sw_run->add_option("--workers", sw_workers);
  sw_run->add_option("--inner-workers", sw_inner);
  sw_run->add_option("--order", sw_order);
  sw_run->add_option("--kmeans-subset-hours", sw_hours);
  sw_run->add_flag("--no-verify-cache", sw_no_verify);

  std::string rp_dir, rp_out;
  CLI::App* sw_report =
      sw->add_subcommand("report", "rebuild tables from per-cell reports");
  sw_report->add_option("--output-dir", rp_dir, "sweep output directory")
      ->required();
  sw_report->add_option("--out", rp_out, "defaults to <output-dir>/report");

  CLI11_PARSE(app, argc, argv);

  try {
    // Apply JSON defaults to the selected leaf command.
    const std::pair<CLI::App*, std::string*> leaves[] = {
        {sample, &sample_cfg}, {synth, &synth_cfg}, {km_train, &km_cfg},
        {enc, &enc_cfg},       {pk, &pack_cfg},     {lm_train, &lm_cfg},
        {lm_score, &sc_cfg},   {ev, &ev_cfg},       {df, &df_cfg},
        {st, &st_cfg}};
    for (const auto& [leaf, path] : leaves) {
      if (leaf->parsed() && !path->empty()) apply_json_config(leaf, *path);
    }
    for (const auto& [leaf, path] : leaves) {
      if (!leaf->parsed()) continue;
      for (CLI::Option* o : leaf->get_options()) {
        if (o->get_group() == kRequired && o->count() == 0) {
          throw InvalidArgument(o->get_name() + " is required");
        }
      }
    }

    if (sample->parsed()) {
      const auto subset =
          sample_subset(read_manifest(sample_manifest), sample_hours, sample_seed);
      const fs::path out = out_path(sample_out);
      ensure_parent(out);
      CorpusManifest rebased = subset;
      // Keep entry paths valid relative to the new manifest location.
      for (auto& e : rebased.entries) e.path = fs::absolute(subset.resolve(e));
      write_manifest(rebased, out);
      std::cout << subset.entries.size() << " utterances, "
                << format_double(subset.total_ms() / 3.6e6) << " h\n";
    } else if (synth->parsed()) {
      if (proto_opt->count()) synth_spec.prototype_seed = synth_proto;
      const auto c = generate_synthetic(synth_spec, out_path(synth_out));
      std::cout << c.manifest.entries.size() << " utterances -> "
                << (out_path(synth_out) / "manifest.tsv").string() << "\n";
    } else if (km_train->parsed()) {
      auto manifest = read_manifest(km_manifest);
      if (km_hours > 0) manifest = sample_subset(manifest, km_hours, km.seed);
      const auto plan = km_seg.planner();
      std::vector<float> vectors;
      std::uint32_t dim = 0;
      for (const auto& e : manifest.entries) {
        const auto rec = read_features(manifest.resolve(e));
        const auto pooled = segment(rec.features, plan(e.utt_id));
        dim = pooled.dim;
        vectors.insert(vectors.end(), pooled.segments.begin(),
                       pooled.segments.end());
      }
      if (dim == 0) throw InvalidArgument("no feature vectors to cluster");
      Codebook cb = train_kmeans(VectorView(vectors, dim), km);
      cb.meta.segment_width_ms = km_seg.segment_ms;
      cb.meta.segmentation = km_seg.label();
      const fs::path out = out_path(km_out);
      ensure_parent(out);
      write_codebook(cb, out);
      std::cout << "k=" << cb.k << " dim=" << cb.dim
                << " iterations=" << cb.meta.iterations_run
                << " inertia=" << format_double(cb.meta.final_inertia) << "\n";
    } else if (enc->parsed()) {
      const Codebook cb = read_codebook(enc_codebook);
      const auto plan = enc_seg.planner(cb.meta.segment_width_ms);
      const TokenizerConfig tc{enc_seg.label(cb.meta.segmentation), cb.k};
      std::vector<UnitSequence> corpus;
      for (const auto& rec : load_corpus(enc_manifest)) {
        auto seq = encode(rec.features, plan(rec.utt_id), cb, !enc_no_dedup,
                          rec.utt_id);
        seq.config = tc;
        corpus.push_back(std::move(seq));
      }
      const fs::path out = out_path(enc_out);
      ensure_parent(out);
      std::optional<fs::path> spans;
      if (!enc_spans.empty()) spans = out_path(enc_spans);
      write_unit_corpus(corpus, out, spans);
      std::size_t tokens = 0;
      for (const auto& s : corpus) tokens += s.units.size();
      std::cout << corpus.size() << " utterances, " << tokens << " units\n";
    } else if (pk->parsed()) {
      const auto packed =
          pack(read_unit_corpus(pack_units), pack_k, pack_len, !pack_no_sep);
      const fs::path out = out_path(pack_out);
      ensure_parent(out);
      write_packed(packed, out);
      std::cout << packed.chunks.size() << " chunks, " << packed.dropped_tail
                << " tokens dropped\n";
    } else if (lm_train->parsed()) {
      if (disc_opt->count()) ngram.discount = lm_discount;
      ngram.use_eos = !lm_no_eos;
      const auto model = train_ngram(read_unit_corpus(lm_units), lm_vocab, ngram);
      const fs::path out = out_path(lm_out);
      ensure_parent(out);
      write_ngram(model, out);
      std::cout << "order=" << model.order() << " vocab=" << model.vocab_size()
                << "\n";
    } else if (lm_score->parsed()) {
      const auto model = read_ngram(sc_model);
      const auto units = read_unit_corpus(sc_units);
      std::ostringstream text;
      if (!sc_pairs.empty()) {
        ScoreTable table;
        const NgramScorer scorer(model, sc_per_token);
        for (const auto& p : load_pairs(sc_pairs, units)) {
          table[p.pair_id] = scorer.score({p.pair_id, p.pos_units, p.neg_units});
        }
        if (!sc_out.empty()) {
          const fs::path out = out_path(sc_out);
          ensure_parent(out);
          write_scores(table, out);
        }
        std::cout << table.size() << " pairs scored\n";
      } else {
        for (const auto& s : units) {
          text << s.utt_id << '\t'
               << format_double(model.sequence_logprob(s.units, sc_per_token))
               << '\n';
        }
        if (!sc_out.empty()) {
          const fs::path out = out_path(sc_out);
          ensure_parent(out);
          write_file_atomic(out, text.str());
        } else {
          std::cout << text.str();
        }
        std::cout << "perplexity " << format_double(perplexity(model, units))
                  << "\n";
      }
    } else if (ev->parsed()) {
      std::vector<UnitSequence> units;
      if (!ev_units.empty()) units = read_unit_corpus(ev_units);
      std::vector<StimulusPair> pairs;
      if (units.empty()) {
        // Score tables only need ids and categories.
        for (const auto& e : read_benchmark_manifest(ev_pairs)) {
          pairs.push_back({e.pair_id, e.benchmark, e.category, {}, {}});
        }
      } else {
        pairs = load_pairs(ev_pairs, units);
      }
      std::optional<NgramModel> model;
      std::unique_ptr<Scorer> scorer;
      if (!ev_scores.empty()) {
        scorer = std::make_unique<TableScorer>(load_external_scores(ev_scores));
      } else if (!ev_model.empty()) {
        if (units.empty()) throw InvalidArgument("--model needs --units");
        model = read_ngram(ev_model);
        scorer = std::make_unique<NgramScorer>(*model, ev_per_token);
      } else {
        throw InvalidArgument("eval needs --model or --scores");
      }
      const auto report = evaluate(*scorer, pairs, ev_bench,
                                   {ev_seg, ev_k, ev_seed}, ev_workers);
      if (!ev_out.empty()) {
        const fs::path out = out_path(ev_out);
        ensure_parent(out);
        write_file_atomic(out, report_to_json(report));
      }
      std::cout << "accuracy " << format_double(report.accuracy) << " ties "
                << format_double(report.tie_rate) << " pairs "
                << report.pair_count << "\n";
      for (const auto& [c, a] : report.categories) {
        std::cout << "  " << c << ' ' << format_double(a.accuracy) << " ("
                  << a.pairs << ")\n";
      }
    } else if (df->parsed()) {
      const auto rec = read_features(df_features);
      auto tokenize = [&](const std::string& cb_path, const SegmentOptions& seg) {
        const Codebook cb = read_codebook(cb_path);
        return encode(rec.features, seg.planner(cb.meta.segment_width_ms)(rec.utt_id),
                      cb, !df_no_dedup, rec.utt_id);
      };
      const auto a = tokenize(df_cb_a, df_seg_a);
      const auto b = tokenize(df_cb_b, df_seg_b);
      std::ostringstream text;
      text << "start_ms\tend_ms\tunit_a\tunit_b\tdiffers\n";
      std::size_t differing = 0;
      for (const auto& d : align_diff(a, b)) {
        text << format_double(d.span.start_ms) << '\t'
             << format_double(d.span.end_ms) << '\t'
             << (d.unit_a ? std::to_string(*d.unit_a) : "-") << '\t'
             << (d.unit_b ? std::to_string(*d.unit_b) : "-") << '\t'
             << (d.differs ? 1 : 0) << '\n';
        differing += d.differs;
      }
      if (!df_out.empty()) {
        const fs::path out = out_path(df_out);
        ensure_parent(out);
        write_file_atomic(out, text.str());
      } else {
        std::cout << text.str();
      }
      std::cerr << differing << " differing intervals\n";
    } else if (st->parsed()) {
      std::vector<UnitSequence> corpus;
      TokenizerConfig tc;
      if (!st_units.empty()) {
        corpus = read_unit_corpus(st_units);
      } else if (!st_manifest.empty() && !st_codebook.empty()) {
        const Codebook cb = read_codebook(st_codebook);
        const auto plan = st_seg.planner(cb.meta.segment_width_ms);
        tc = {st_seg.label(cb.meta.segmentation), cb.k};
        for (const auto& rec : load_corpus(st_manifest)) {
          corpus.push_back(encode(rec.features, plan(rec.utt_id), cb, false,
                                  rec.utt_id));
        }
      } else {
        throw InvalidArgument("stats needs --units or --manifest and --codebook");
      }
      const auto s = corpus_stats(corpus, tc);
      json per = json::array();
      for (const auto& u : s.per_utterance) {
        per.push_back({{"utt_id", u.utt_id},
                       {"pre_dedup", u.pre_dedup},
                       {"post_dedup", u.post_dedup}});
      }
      const json j = {{"segmentation", tc.segmentation},
                      {"k", tc.k},
                      {"utterances", s.per_utterance.size()},
                      {"total_tokens_pre_dedup", s.total_tokens_pre_dedup},
                      {"total_tokens_post_dedup", s.total_tokens_post_dedup},
                      {"per_utterance", per}};
      if (!st_out.empty()) {
        const fs::path out = out_path(st_out);
        ensure_parent(out);
        write_file_atomic(out, json_text(j));
      }
      std::cout << "pre_dedup " << s.total_tokens_pre_dedup << " post_dedup "
                << s.total_tokens_post_dedup << "\n";
    } else if (sw_run->parsed()) {
      SweepConfig c = load_sweep_config(sw_config);
      if (!sw_output.empty()) c.output_dir = out_path(sw_output);
      if (!sw_n.empty()) c.n_values = sw_n;
      if (!sw_k.empty()) c.k_values = sw_k;
      if (!sw_seeds.empty()) c.seeds = sw_seeds;
      if (sw_workers) c.workers = sw_workers;
      if (sw_inner) c.inner_workers = sw_inner;
      if (sw_order) c.scorer.order = sw_order;
      if (sw_hours > 0) c.kmeans_subset_hours = sw_hours;
      if (sw_no_verify) c.verify_cache = false;
      const auto r = run_sweep(c);
      std::size_t failed = 0;
      for (const auto& cell : r.cells) {
        if (!cell.ok) {
          ++failed;
          std::cerr << "cell N=" << cell.segmentation << " K=" << cell.k
                    << " seed=" << cell.seed << " failed: " << cell.error
                    << "\n";
        }
      }
      std::cout << r.cells.size() << " cells, " << failed << " failed, "
                << r.counters.total_computed() << " stages computed\n";
      if (r.cache_check.performed) {
        std::cout << "cache check " << r.cache_check.cell << ": "
                  << r.cache_check.detail << "\n";
      }
      if (!r.report_files.empty()) {
        std::cout << "report: " << (c.output_dir / "report").string() << "\n";
      }
      if (failed == r.cells.size()) return 1;
      if (r.cache_check.performed && !r.cache_check.ok) return 3;
    } else if (sw_report->parsed()) {
      const fs::path dir = out_path(rp_dir);
      const auto reports = load_reports(dir / "reports");
      if (reports.empty()) throw InvalidArgument("no reports under " + dir.string());
      const fs::path out = rp_out.empty() ? dir / "report" : out_path(rp_out);
      const auto aggs = summarize_reports(reports);
      emit_report(aggs, out);
      std::cout << read_file(out / "summary.txt");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
