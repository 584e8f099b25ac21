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

#include "unitkit/unit_lm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"

namespace unitkit {

namespace {

constexpr std::string_view kNgramMagic = "SNGM";
constexpr std::uint16_t kNgramVersion = 1;

std::u32string to_key(std::span<const std::uint32_t> symbols) {
  std::u32string key;
  key.reserve(symbols.size());
  for (auto s : symbols) key.push_back(static_cast<char32_t>(s));
  return key;
}

}  // namespace

NgramModel NgramModel::train(std::span<const std::vector<std::uint32_t>> corpus,
                             std::uint32_t vocab_size,
                             const NgramConfig& config) {
  if (corpus.empty()) throw InvalidArgument("cannot train on an empty corpus");
  if (config.order < 1) throw InvalidArgument("n-gram order must be >= 1");
  if (vocab_size < 1) throw InvalidArgument("vocab_size must be >= 1");
  if (config.discount && !(*config.discount > 0.0 && *config.discount <= 1.0)) {
    throw InvalidArgument("fixed discount must lie in (0, 1]");
  }

  NgramModel m;
  m.order_ = config.order;
  m.vocab_ = vocab_size;
  m.use_eos_ = config.use_eos;
  m.grams_.resize(m.order_);
  m.contexts_.resize(m.order_);

  const std::uint32_t n = m.order_;
  auto& top = m.grams_[n - 1];
  std::u32string padded;
  for (const auto& units : corpus) {
    padded.assign(n - 1, static_cast<char32_t>(m.bos()));
    for (auto u : units) {
      if (u >= vocab_size) {
        throw InvalidArgument("unit " + std::to_string(u) +
                              " outside vocabulary of size " +
                              std::to_string(vocab_size));
      }
      padded.push_back(static_cast<char32_t>(u));
    }
    if (m.use_eos_) padded.push_back(static_cast<char32_t>(m.eos()));
    for (std::size_t i = n - 1; i < padded.size(); ++i) {
      ++top[padded.substr(i + 1 - n, n)];
    }
  }

  // Continuation counts: each distinct (k+1)-gram adds one left extension
  // to its k-suffix.
  for (std::uint32_t k = n - 1; k >= 1; --k) {
    auto& lower = m.grams_[k - 1];
    for (const auto& [gram, count] : m.grams_[k]) ++lower[gram.substr(1)];
  }

  m.discounts_.resize(n);
  for (std::uint32_t k = 1; k <= n; ++k) {
    if (config.discount) {
      m.discounts_[k - 1] = *config.discount;
      continue;
    }
    std::uint64_t n1 = 0;
    std::uint64_t n2 = 0;
    for (const auto& [gram, count] : m.grams_[k - 1]) {
      n1 += count == 1;
      n2 += count == 2;
    }
    m.discounts_[k - 1] =
        n1 == 0 ? kFallbackDiscount
                : static_cast<double>(n1) / static_cast<double>(n1 + 2 * n2);
  }
  m.build_context_tables();
  return m;
}

void NgramModel::build_context_tables() {
  contexts_.assign(order_, {});
  for (std::uint32_t k = 1; k <= order_; ++k) {
    auto& ctx = contexts_[k - 1];
    for (const auto& [gram, count] : grams_[k - 1]) {
      auto& stats = ctx[gram.substr(0, k - 1)];
      stats.total += count;
      stats.types += 1;
    }
  }
}

double NgramModel::prob_at(std::uint32_t k, std::u32string_view context,
                           std::uint32_t event) const {
  const double lower =
      k == 1 ? 1.0 / event_count() : prob_at(k - 1, context.substr(1), event);
  const auto& ctx_table = contexts_[k - 1];
  const auto it = ctx_table.find(std::u32string(context));
  if (it == ctx_table.end()) return lower;

  std::u32string key(context);
  key.push_back(static_cast<char32_t>(event));
  const auto& grams = grams_[k - 1];
  const auto g = grams.find(key);
  const double count = g == grams.end() ? 0.0 : static_cast<double>(g->second);
  const double d = discounts_[k - 1];
  const auto& stats = it->second;
  return (std::max(count - d, 0.0) +
          d * static_cast<double>(stats.types) * lower) /
         static_cast<double>(stats.total);
}

double NgramModel::prob(std::span<const std::uint32_t> context,
                        std::uint32_t event) const {
  if (order_ == 0) throw InvalidArgument("untrained n-gram model");
  if (event >= vocab_ && !(use_eos_ && event == eos())) {
    throw InvalidArgument("event " + std::to_string(event) +
                          " outside the model's event space");
  }
  const std::size_t keep = std::min<std::size_t>(context.size(), order_ - 1);
  const auto key = to_key(context.subspan(context.size() - keep));
  return prob_at(static_cast<std::uint32_t>(keep + 1), key, event);
}

double NgramModel::sequence_logprob(std::span<const std::uint32_t> units,
                                    bool per_token) const {
  if (order_ == 0) throw InvalidArgument("untrained n-gram model");
  std::u32string history(order_ - 1, static_cast<char32_t>(bos()));
  double total = 0.0;
  auto step = [&](std::uint32_t event) {
    total += std::log(prob_at(order_, history, event));
    if (order_ > 1) {
      history.erase(history.begin());
      history.push_back(static_cast<char32_t>(event));
    }
  };
  for (auto u : units) {
    if (u >= vocab_) {
      throw InvalidArgument("unit " + std::to_string(u) +
                            " outside vocabulary of size " +
                            std::to_string(vocab_));
    }
    step(u);
  }
  if (use_eos_) step(eos());
  const std::size_t events = units.size() + (use_eos_ ? 1 : 0);
  if (per_token && events > 0) total /= static_cast<double>(events);
  return total;
}

std::vector<std::vector<std::uint32_t>> NgramModel::seen_contexts() const {
  std::vector<std::vector<std::uint32_t>> out;
  if (order_ == 0) return out;
  for (const auto& [ctx, stats] : contexts_[order_ - 1]) {
    out.emplace_back(ctx.begin(), ctx.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t NgramModel::count(std::span<const std::uint32_t> gram) const {
  if (gram.empty() || gram.size() > order_) return 0;
  const auto& table = grams_[gram.size() - 1];
  const auto it = table.find(to_key(gram));
  return it == table.end() ? 0 : it->second;
}

std::string NgramModel::serialize() const {
  detail::ByteWriter w;
  w.bytes(kNgramMagic);
  w.u16(kNgramVersion);
  w.u32(order_);
  w.u32(vocab_);
  w.u32(use_eos_ ? 1u : 0u);
  for (std::uint32_t k = 1; k <= order_; ++k) {
    w.f64(discounts_[k - 1]);
    std::vector<std::pair<std::u32string, std::uint64_t>> sorted(
        grams_[k - 1].begin(), grams_[k - 1].end());
    std::sort(sorted.begin(), sorted.end());
    w.u64(sorted.size());
    for (const auto& [gram, count] : sorted) {
      for (char32_t s : gram) w.u32(static_cast<std::uint32_t>(s));
      w.u64(count);
    }
  }
  return w.data();
}

NgramModel NgramModel::deserialize(std::string_view bytes) {
  using Kind = FormatError::Kind;
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kNgramMagic) {
    throw FormatError(Kind::bad_magic, "not an n-gram model (bad magic)");
  }
  if (auto version = r.u16(); version != kNgramVersion) {
    throw FormatError(Kind::version_mismatch,
                      "unsupported n-gram version " + std::to_string(version));
  }
  NgramModel m;
  m.order_ = r.u32();
  m.vocab_ = r.u32();
  m.use_eos_ = (r.u32() & 1u) != 0;
  if (m.order_ == 0 || m.vocab_ == 0) {
    throw FormatError(Kind::malformed, "n-gram order and vocab must be >= 1");
  }
  m.grams_.resize(m.order_);
  m.discounts_.resize(m.order_);
  for (std::uint32_t k = 1; k <= m.order_; ++k) {
    m.discounts_[k - 1] = r.f64();
    const auto count = r.u64();
    auto& table = m.grams_[k - 1];
    table.reserve(count);
    std::u32string gram(k, 0);
    for (std::uint64_t i = 0; i < count; ++i) {
      for (auto& s : gram) s = static_cast<char32_t>(r.u32());
      table.emplace(gram, r.u64());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(Kind::size_mismatch, "trailing bytes in n-gram model");
  }
  m.build_context_tables();
  return m;
}

NgramModel train_ngram(std::span<const UnitSequence> corpus,
                       std::uint32_t vocab_size, const NgramConfig& config) {
  std::vector<std::vector<std::uint32_t>> sequences;
  sequences.reserve(corpus.size());
  for (const auto& seq : corpus) sequences.push_back(seq.units);
  return NgramModel::train(sequences, vocab_size, config);
}

double sequence_logprob(const NgramModel& model,
                        std::span<const std::uint32_t> units, bool per_token) {
  return model.sequence_logprob(units, per_token);
}

double perplexity(const NgramModel& model,
                  std::span<const UnitSequence> corpus) {
  if (corpus.empty()) throw InvalidArgument("perplexity of an empty corpus");
  double total = 0.0;
  std::uint64_t events = 0;
  for (const auto& seq : corpus) {
    total += model.sequence_logprob(seq.units);
    events += seq.units.size() + (model.use_eos() ? 1 : 0);
  }
  if (events == 0) throw InvalidArgument("corpus has no predicted events");
  return std::exp(-total / static_cast<double>(events));
}

void write_ngram(const NgramModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, model.serialize());
}

NgramModel read_ngram(const std::filesystem::path& path) {
  return NgramModel::deserialize(read_file(path));
}

ScoreTable load_external_scores(const std::filesystem::path& source) {
  using Kind = FormatError::Kind;
  ScoreTable table;
  const std::string text = read_file(source);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string where = source.string() + ":" + std::to_string(line_no);
    auto fields = split(line, '\t');
    if (fields.size() != 3 || fields[0].empty()) {
      throw FormatError(Kind::malformed,
                        where + ": expected pair_id, pos, neg fields");
    }
    PairScores s{parse_f64(fields[1]), parse_f64(fields[2])};
    if (!std::isfinite(s.pos_logprob) || !std::isfinite(s.neg_logprob)) {
      throw FormatError(Kind::malformed, where + ": non-finite score");
    }
    if (!table.emplace(std::string(fields[0]), s).second) {
      throw FormatError(Kind::malformed,
                        where + ": duplicate pair_id " + std::string(fields[0]));
    }
  }
  return table;
}

void write_scores(const ScoreTable& table, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& [id, s] : table) {
    out << id << '\t' << format_double(s.pos_logprob) << '\t'
        << format_double(s.neg_logprob) << '\n';
  }
  write_file_atomic(path, out.str());
}

PairScores NgramScorer::score(const ScoringRequest& request) const {
  return {model_.sequence_logprob(request.pos_units, per_token_),
          model_.sequence_logprob(request.neg_units, per_token_)};
}

PairScores TableScorer::score(const ScoringRequest& request) const {
  const auto it = table_.find(std::string(request.pair_id));
  if (it == table_.end()) {
    throw InvalidArgument("no external score for pair " +
                          std::string(request.pair_id));
  }
  return it->second;
}

}  // namespace unitkit
