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

#include "unitkit/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "json.hpp"
#include "unitkit/error.hpp"
#include "unitkit/io_util.hpp"
#include "unitkit/parallel.hpp"
#include "unitkit/random.hpp"

namespace unitkit {

namespace {

constexpr std::string_view kCodebookMagic = "SCBK";
constexpr std::uint16_t kCodebookVersion = 1;

struct Nearest {
  std::uint32_t index = 0;
  double distance = 0.0;
};

// Partial sums only grow, so a candidate can be abandoned as soon as it
// exceeds the best complete distance. Completed sums are bit-identical to
// squared_distance(), which keeps ties and oracles exact.
Nearest nearest_centroid(std::span<const float> x, const float* centroids,
                         std::size_t k, std::size_t dim) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < k; ++c) {
    const float* cp = centroids + c * dim;
    double sum = 0.0;
    std::size_t d = 0;
    for (; d < dim; ++d) {
      const double diff = static_cast<double>(x[d]) - cp[d];
      sum += diff * diff;
      if (sum > best.distance) break;
    }
    if (d == dim && sum < best.distance) {
      best = {static_cast<std::uint32_t>(c), sum};
    }
  }
  return best;
}

void check_finite(VectorView v) {
  for (float x : v.data) {
    if (!std::isfinite(x)) throw InvalidArgument("non-finite input vector");
  }
}

// Labels and distances for every point; the ordered sum is the inertia.
double assign_all(VectorView vectors, const std::vector<float>& centroids,
                  std::size_t k, std::size_t workers,
                  std::vector<std::uint32_t>& labels,
                  std::vector<double>& dists) {
  const std::size_t n = vectors.size();
  labels.resize(n);
  dists.resize(n);
  parallel_for(n, workers, [&](std::size_t i) {
    auto hit = nearest_centroid(vectors.row(i), centroids.data(), k,
                                vectors.dim);
    labels[i] = hit.index;
    dists[i] = hit.distance;
  });
  return std::accumulate(dists.begin(), dists.end(), 0.0);
}

// Recomputes centroids as cluster means and reseeds empty clusters to the
// points farthest from their (new) centroid.
void lloyd_update(VectorView vectors, const std::vector<std::uint32_t>& labels,
                  std::size_t k, std::vector<float>& centroids) {
  const std::size_t dim = vectors.dim;
  const std::size_t n = vectors.size();
  std::vector<double> sums(k * dim, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = vectors.row(i);
    double* s = sums.data() + labels[i] * dim;
    for (std::size_t d = 0; d < dim; ++d) s[d] += row[d];
    ++counts[labels[i]];
  }
  std::vector<std::size_t> empty;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      empty.push_back(c);
      continue;
    }
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t d = 0; d < dim; ++d) {
      centroids[c * dim + d] = static_cast<float>(sums[c * dim + d] * inv);
    }
  }
  if (empty.empty()) return;

  std::vector<double> far(n);
  for (std::size_t i = 0; i < n; ++i) {
    far[i] = squared_distance(vectors.row(i),
                              {centroids.data() + labels[i] * dim, dim});
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(empty.size(), n);
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return far[a] > far[b] || (far[a] == far[b] && a < b);
                    });
  for (std::size_t e = 0; e < take; ++e) {
    auto row = vectors.row(order[e]);
    std::copy(row.begin(), row.end(), centroids.begin() + empty[e] * dim);
  }
}

void run_minibatch(VectorView vectors, const KMeansConfig& config,
                   std::vector<float>& centroids, Rng& rng,
                   std::uint32_t& iterations) {
  const std::size_t dim = vectors.dim;
  const std::size_t n = vectors.size();
  const std::size_t batch = std::min<std::size_t>(config.minibatch_size, n);
  std::vector<double> exact(centroids.begin(), centroids.end());
  std::vector<std::size_t> counts(config.k, 0);
  std::vector<std::size_t> picks(batch);
  std::vector<std::uint32_t> labels(batch);
  for (iterations = 0; iterations < config.max_iters; ++iterations) {
    for (auto& p : picks) p = rng.below(n);
    parallel_for(batch, config.workers, [&](std::size_t b) {
      labels[b] = nearest_centroid(vectors.row(picks[b]), centroids.data(),
                                   config.k, dim)
                      .index;
    });
    // Per-center learning rate 1 / (points seen by that center).
    for (std::size_t b = 0; b < batch; ++b) {
      const auto c = labels[b];
      const double eta = 1.0 / static_cast<double>(++counts[c]);
      auto row = vectors.row(picks[b]);
      for (std::size_t d = 0; d < dim; ++d) {
        double& v = exact[c * dim + d];
        v = (1.0 - eta) * v + eta * row[d];
      }
    }
    bool moved = false;
    for (std::size_t i = 0; i < exact.size(); ++i) {
      const auto f = static_cast<float>(exact[i]);
      moved |= f != centroids[i];
      centroids[i] = f;
    }
    if (!moved) {
      ++iterations;
      break;
    }
  }
}

}  // namespace

VectorView::VectorView(std::span<const float> data_, std::size_t dim_)
    : data(data_), dim(dim_) {
  if (dim == 0) throw InvalidArgument("vector dim must be >= 1");
  if (data.size() % dim != 0) {
    throw InvalidArgument("vector data length is not a multiple of dim");
  }
}

void KMeansConfig::validate() const {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
  if (!(rel_tol >= 0.0)) throw InvalidArgument("rel_tol must be >= 0");
}

void Codebook::validate() const {
  if (k == 0 || dim == 0) throw InvalidArgument("empty codebook");
  if (centroids.size() != static_cast<std::size_t>(k) * dim) {
    throw InvalidArgument("codebook centroid matrix does not match k x dim");
  }
  for (float v : centroids) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite centroid");
  }
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - b[d];
    sum += diff * diff;
  }
  return sum;
}

std::vector<float> kmeanspp_init(VectorView vectors, std::uint32_t k,
                                 std::uint64_t seed, std::size_t workers) {
  const std::size_t n = vectors.size();
  const std::size_t dim = vectors.dim;
  if (n == 0) throw InvalidArgument("k-means needs at least one vector");
  if (k > n) {
    throw InvalidArgument("k = " + std::to_string(k) + " exceeds the " +
                          std::to_string(n) + " training vectors");
  }
  Rng rng(seed);
  std::vector<float> centroids;
  centroids.reserve(static_cast<std::size_t>(k) * dim);
  std::vector<char> chosen(n, 0);
  auto take = [&](std::size_t i) {
    auto row = vectors.row(i);
    centroids.insert(centroids.end(), row.begin(), row.end());
    chosen[i] = 1;
  };

  take(rng.below(n));
  std::vector<double> min_dist(n);
  parallel_for(n, workers, [&](std::size_t i) {
    min_dist[i] = squared_distance(vectors.row(i), {centroids.data(), dim});
  });

  for (std::uint32_t j = 1; j < k; ++j) {
    const double total = std::accumulate(min_dist.begin(), min_dist.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      std::size_t last_positive = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (min_dist[i] <= 0.0) continue;
        last_positive = i;
        cum += min_dist[i];
        if (cum > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = last_positive;
    } else {
      // Every point coincides with a centroid; fall back to an unused point.
      std::size_t r = rng.below(n - j);
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        if (r-- == 0) {
          pick = i;
          break;
        }
      }
    }
    take(pick);
    const float* newest = centroids.data() + static_cast<std::size_t>(j) * dim;
    parallel_for(n, workers, [&](std::size_t i) {
      min_dist[i] =
          std::min(min_dist[i], squared_distance(vectors.row(i), {newest, dim}));
    });
  }
  return centroids;
}

Codebook train_kmeans(VectorView vectors, const KMeansConfig& config) {
  config.validate();
  if (vectors.size() == 0) {
    throw InvalidArgument("k-means needs at least one vector");
  }
  check_finite(vectors);

  Codebook cb;
  cb.k = config.k;
  cb.dim = static_cast<std::uint32_t>(vectors.dim);
  cb.meta.seed = config.seed;
  cb.centroids = kmeanspp_init(vectors, config.k, config.seed, config.workers);

  std::vector<std::uint32_t> labels;
  std::vector<double> dists;
  double current =
      assign_all(vectors, cb.centroids, cb.k, config.workers, labels, dists);
  cb.meta.inertia_history.push_back(current);

  if (config.minibatch_size > 0) {
    cb.meta.minibatch = true;
    Rng rng(config.seed ^ 0xa0761d6478bd642fULL);
    run_minibatch(vectors, config, cb.centroids, rng, cb.meta.iterations_run);
    current =
        assign_all(vectors, cb.centroids, cb.k, config.workers, labels, dists);
    cb.meta.inertia_history.push_back(current);
  } else {
    while (cb.meta.iterations_run < config.max_iters && current > 0.0) {
      const std::vector<float> kept = cb.centroids;
      lloyd_update(vectors, labels, cb.k, cb.centroids);
      ++cb.meta.iterations_run;
      const double previous = current;
      std::vector<std::uint32_t> next_labels;
      std::vector<double> next_dists;
      const double next = assign_all(vectors, cb.centroids, cb.k,
                                     config.workers, next_labels, next_dists);
      if (next > previous) {
        // Float rounding of converged means; keep the better centroids.
        cb.centroids = kept;
        --cb.meta.iterations_run;
        break;
      }
      current = next;
      labels = std::move(next_labels);
      dists = std::move(next_dists);
      cb.meta.inertia_history.push_back(current);
      const double gain = previous - current;
      if (gain <= 0.0 || gain < config.rel_tol * previous) break;
    }
  }
  cb.meta.final_inertia = current;
  cb.validate();
  return cb;
}

std::vector<std::uint32_t> assign(const Codebook& codebook, VectorView vectors,
                                  std::size_t workers) {
  if (vectors.size() > 0 && vectors.dim != codebook.dim) {
    throw InvalidArgument("vector dim " + std::to_string(vectors.dim) +
                          " != codebook dim " + std::to_string(codebook.dim));
  }
  std::vector<std::uint32_t> labels;
  std::vector<double> dists;
  assign_all(vectors, codebook.centroids, codebook.k, workers, labels, dists);
  return labels;
}

double inertia(const Codebook& codebook, VectorView vectors,
               std::size_t workers) {
  if (vectors.size() > 0 && vectors.dim != codebook.dim) {
    throw InvalidArgument("vector dim " + std::to_string(vectors.dim) +
                          " != codebook dim " + std::to_string(codebook.dim));
  }
  std::vector<std::uint32_t> labels;
  std::vector<double> dists;
  return assign_all(vectors, codebook.centroids, codebook.k, workers, labels,
                    dists);
}

std::string encode_codebook(const Codebook& codebook) {
  codebook.validate();
  const nlohmann::json meta = {
      {"segment_width_ms", codebook.meta.segment_width_ms},
      {"segmentation", codebook.meta.segmentation},
      {"seed", codebook.meta.seed},
      {"iterations_run", codebook.meta.iterations_run},
      {"final_inertia", codebook.meta.final_inertia},
      {"inertia_history", codebook.meta.inertia_history},
      {"minibatch", codebook.meta.minibatch},
  };
  const std::string meta_text = meta.dump();
  detail::ByteWriter w;
  w.bytes(kCodebookMagic);
  w.u16(kCodebookVersion);
  w.u16(0);
  w.u32(codebook.k);
  w.u32(codebook.dim);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text);
  w.f32s(codebook.centroids);
  return w.data();
}

Codebook decode_codebook(std::string_view bytes) {
  using Kind = FormatError::Kind;
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kCodebookMagic) {
    throw FormatError(Kind::bad_magic, "not a codebook file (bad magic)");
  }
  if (auto version = r.u16(); version != kCodebookVersion) {
    throw FormatError(Kind::version_mismatch,
                      "unsupported codebook version " + std::to_string(version));
  }
  r.u16();
  Codebook cb;
  cb.k = r.u32();
  cb.dim = r.u32();
  const std::uint32_t meta_len = r.u32();
  const auto meta_text = r.bytes(meta_len);
  const auto count = static_cast<std::uint64_t>(cb.k) * cb.dim;
  if (r.remaining() != count * 4) {
    throw FormatError(Kind::size_mismatch,
                      "codebook payload does not match k x dim");
  }
  cb.centroids.resize(count);
  for (auto& v : cb.centroids) v = r.f32();
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    cb.meta.segment_width_ms = meta.value("segment_width_ms", 0u);
    cb.meta.segmentation = meta.value("segmentation", std::string());
    cb.meta.seed = meta.value("seed", std::uint64_t{0});
    cb.meta.iterations_run = meta.value("iterations_run", 0u);
    cb.meta.final_inertia = meta.value("final_inertia", 0.0);
    cb.meta.inertia_history =
        meta.value("inertia_history", std::vector<double>{});
    cb.meta.minibatch = meta.value("minibatch", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(Kind::malformed,
                      std::string("codebook metadata: ") + e.what());
  }
  cb.validate();
  return cb;
}

void write_codebook(const Codebook& codebook,
                    const std::filesystem::path& destination) {
  write_file_atomic(destination, encode_codebook(codebook));
}

Codebook read_codebook(const std::filesystem::path& source) {
  return decode_codebook(read_file(source));
}

}  // namespace unitkit
