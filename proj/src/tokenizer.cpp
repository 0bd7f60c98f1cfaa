#include "prefixrec/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace prefixrec {

namespace {

void check_finite(const EmbeddingMatrix& embeddings) {
  for (double x : embeddings.values) {
    if (!std::isfinite(x)) throw DataError("embedding matrix contains a non-finite value");
  }
}

// Farthest-point seeding: first centroid is a seeded random row, each
// subsequent one the row with maximal distance to its nearest chosen
// centroid (ties to the lowest row index).
std::vector<std::size_t> farthest_point_seeds(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows;
  std::vector<std::size_t> seeds;
  seeds.reserve(k);
  seeds.push_back(uniform_index(rng, n));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  while (seeds.size() < k) {
    const std::size_t last = seeds.back();
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], squared_distance(points.row_span(i), points.row_span(last)));
    }
    std::size_t pick = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] > far) {
        far = best[i];
        pick = i;
      }
    }
    seeds.push_back(pick);
  }
  return seeds;
}

Matrix kmeans(const Matrix& points, std::size_t k, Rng& rng, std::size_t max_iters) {
  const std::size_t n = points.rows;
  const std::size_t dim = points.cols;

  Matrix centroids(k, dim);
  const auto seeds = farthest_point_seeds(points, k, rng);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(points.row(seeds[c]), dim, centroids.row(c));
  }

  std::vector<std::size_t> assign(n, 0);
  std::vector<std::size_t> prev_assign;
  std::vector<std::size_t> count(k, 0);

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest_centroid(points.row_span(i), centroids);
      ++count[assign[i]];
    }

    // Re-seed empty clusters from the point farthest from its assigned
    // centroid, stealing only from clusters that keep at least one member.
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] != 0) continue;
      std::size_t pick = 0;
      double far = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[assign[i]] <= 1) continue;
        const double d = squared_distance(points.row_span(i), centroids.row_span(assign[i]));
        if (d > far) {
          far = d;
          pick = i;
        }
      }
      if (far < 0.0) continue;  // all remaining clusters are singletons
      --count[assign[pick]];
      assign[pick] = c;
      ++count[c];
      std::copy_n(points.row(pick), dim, centroids.row(c));
    }

    if (assign == prev_assign) break;
    prev_assign = assign;

    std::fill(centroids.v.begin(), centroids.v.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double* c = centroids.row(assign[i]);
      const double* p = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) c[j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      double* row = centroids.row(c);
      for (std::size_t j = 0; j < dim; ++j) row[j] /= static_cast<double>(count[c]);
    }
  }
  return centroids;
}

}  // namespace

std::size_t nearest_centroid(std::span<const double> point, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d = squared_distance(point, centroids.row_span(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Codebooks fit_codebooks(const EmbeddingMatrix& embeddings, std::size_t levels,
                        std::size_t codebook_size, std::uint64_t seed,
                        std::size_t max_iters) {
  if (levels < 1) throw ConfigError("fit_codebooks: levels must be >= 1");
  if (codebook_size < 2) throw ConfigError("fit_codebooks: codebook_size must be >= 2");
  if (embeddings.rows < codebook_size) {
    throw ConfigError("fit_codebooks: fewer items (" + std::to_string(embeddings.rows) +
                      ") than codebook_size (" + std::to_string(codebook_size) + ")");
  }
  check_finite(embeddings);

  Codebooks out;
  out.levels = levels;
  out.dim = embeddings.cols;
  out.seed = seed;
  out.centroids.reserve(levels);

  Matrix residuals(embeddings.rows, embeddings.cols);
  residuals.v = embeddings.values;

  Rng rng(seed);
  for (std::size_t level = 0; level < levels; ++level) {
    Matrix centroids = kmeans(residuals, codebook_size, rng, max_iters);
    for (std::size_t i = 0; i < residuals.rows; ++i) {
      const std::size_t a = nearest_centroid(residuals.row_span(i), centroids);
      double* r = residuals.row(i);
      const double* c = centroids.row(a);
      for (std::size_t j = 0; j < residuals.cols; ++j) r[j] -= c[j];
    }
    out.centroids.push_back(std::move(centroids));
  }
  return out;
}

TokenizedCatalog tokenize(const EmbeddingMatrix& embeddings, const Codebooks& codebooks) {
  if (embeddings.cols != codebooks.dim) {
    throw ConfigError("tokenize: embedding dim " + std::to_string(embeddings.cols) +
                      " does not match codebook dim " + std::to_string(codebooks.dim));
  }
  check_finite(embeddings);

  const std::size_t n = embeddings.rows;
  const std::size_t levels = codebooks.levels;

  std::vector<std::uint32_t> raw(n * levels);
  std::vector<double> residual(codebooks.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = embeddings.row(i);
    std::copy(row.begin(), row.end(), residual.begin());
    for (std::size_t level = 0; level < levels; ++level) {
      const Matrix& c = codebooks.centroids[level];
      const std::size_t a = nearest_centroid(residual, c);
      raw[i * levels + level] = static_cast<std::uint32_t>(a);
      const double* cr = c.row(a);
      for (std::size_t j = 0; j < codebooks.dim; ++j) residual[j] -= cr[j];
    }
  }

  // Group items by full raw sequence; map is ordered so groups enumerate
  // deterministically and members stay in ascending item-row order.
  std::map<std::vector<std::uint32_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::uint32_t> key(raw.begin() + static_cast<std::ptrdiff_t>(i * levels),
                                   raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * levels));
    groups[std::move(key)].push_back(i);
  }
  std::size_t max_group = 0;
  for (const auto& [key, members] : groups) max_group = std::max(max_group, members.size());
  const bool collide = max_group > 1;

  TokenizedCatalog cat;
  cat.num_items = n;
  cat.code_len = levels + (collide ? 1 : 0);
  cat.dedup_level_present = collide;
  cat.item_ids = embeddings.item_ids;
  cat.codes.assign(n * cat.code_len, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(raw.begin() + static_cast<std::ptrdiff_t>(i * levels), levels,
                cat.codes.begin() + static_cast<std::ptrdiff_t>(i * cat.code_len));
  }
  for (std::size_t level = 0; level < levels; ++level) {
    cat.level_vocab_sizes.push_back(
        static_cast<std::uint32_t>(codebooks.centroids[level].rows));
  }
  if (collide) {
    for (const auto& [key, members] : groups) {
      for (std::size_t j = 0; j < members.size(); ++j) {
        cat.codes[members[j] * cat.code_len + levels] = static_cast<std::uint32_t>(j);
      }
    }
    cat.level_vocab_sizes.push_back(static_cast<std::uint32_t>(max_group));
  }
  return cat;
}

}  // namespace prefixrec
