#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prefixrec/common.hpp"

namespace prefixrec {

// One real-valued embedding row per item. Row order is the canonical item
// ordering used everywhere downstream; item_ids carries the external names.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // rows * cols, row-major
  std::vector<std::string> item_ids;

  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
};

// Residual quantizer state: one centroid matrix per level, all sharing the
// embedding dimension.
struct Codebooks {
  std::size_t levels = 0;
  std::size_t dim = 0;
  std::vector<Matrix> centroids;  // levels entries, each codebook_size x dim
  std::uint64_t seed = 0;
};

// Fixed-length discrete code sequence per item. Sequences are pairwise
// distinct; when raw residual codes collide an extra disambiguation level is
// appended (0 for unaffected items, 0,1,2,... within a colliding group in
// ascending item-row order).
struct TokenizedCatalog {
  std::size_t num_items = 0;
  std::size_t code_len = 0;                     // T
  std::vector<std::uint32_t> codes;             // num_items * code_len
  std::vector<std::uint32_t> level_vocab_sizes; // code_len entries
  bool dedup_level_present = false;
  std::vector<std::string> item_ids;

  std::span<const std::uint32_t> item_codes(std::size_t item) const {
    return {codes.data() + item * code_len, code_len};
  }
};

// Fits per-level k-means codebooks on residuals (level L trains on what is
// left after subtracting the assigned centroids of levels < L).
// Deterministic for a fixed seed: farthest-point seeding, lowest-index
// tie-breaks, empty clusters re-seeded from the point farthest from its
// assigned centroid.
Codebooks fit_codebooks(const EmbeddingMatrix& embeddings, std::size_t levels,
                        std::size_t codebook_size, std::uint64_t seed,
                        std::size_t max_iters);

// Assigns each item the nearest-centroid index of its residual at every
// level, then disambiguates full-sequence collisions.
TokenizedCatalog tokenize(const EmbeddingMatrix& embeddings, const Codebooks& codebooks);

// Nearest row of `centroids` to `point`; equidistant rows resolve to the
// lowest index.
std::size_t nearest_centroid(std::span<const double> point, const Matrix& centroids);

}  // namespace prefixrec
