#include <doctest.h>

#include <cmath>

#include "prefixrec/tokenizer.hpp"
#include "support/oracles.hpp"

using namespace prefixrec;

namespace {

EmbeddingMatrix make_embeddings(std::size_t rows, std::size_t cols,
                                const std::vector<double>& values) {
  EmbeddingMatrix emb;
  emb.rows = rows;
  emb.cols = cols;
  emb.values = values;
  for (std::size_t i = 0; i < rows; ++i) emb.item_ids.push_back("i" + std::to_string(i));
  return emb;
}

EmbeddingMatrix random_embeddings(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = uniform_in(rng, -1.0, 1.0);
  return make_embeddings(rows, cols, v);
}

}  // namespace

TEST_SUITE("tokenizer") {

TEST_CASE("identical rows collapse to the shared centroid with zero residuals") {
  const EmbeddingMatrix emb = make_embeddings(4, 2, {1.5, -2.0, 1.5, -2.0, 1.5, -2.0, 1.5, -2.0});
  const Codebooks cb = fit_codebooks(emb, 2, 2, 1, 25);
  bool some_centroid_matches = false;
  for (std::size_t c = 0; c < 2; ++c) {
    if (cb.centroids[0].at(c, 0) == doctest::Approx(1.5) &&
        cb.centroids[0].at(c, 1) == doctest::Approx(-2.0)) {
      some_centroid_matches = true;
    }
  }
  CHECK(some_centroid_matches);
  CHECK(testing::total_residual_norm(emb, cb, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(testing::total_residual_norm(emb, cb, 2) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("one centroid per item covers distinct rows exactly") {
  const EmbeddingMatrix emb = make_embeddings(4, 2, {0, 0, 1, 0, 0, 1, 1, 1});
  const Codebooks cb = fit_codebooks(emb, 1, 4, 3, 25);
  CHECK(testing::total_residual_norm(emb, cb, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("total residual norm is non-increasing across levels") {
  const EmbeddingMatrix emb = random_embeddings(16, 2, 99);
  const Codebooks cb = fit_codebooks(emb, 2, 2, 5, 50);
  const double after1 = testing::total_residual_norm(emb, cb, 1);
  const double after2 = testing::total_residual_norm(emb, cb, 2);
  CHECK(after2 <= after1 + 1e-12);
  CHECK(after1 <= testing::total_residual_norm(emb, cb, 0) + 1e-12);
}

TEST_CASE("codes match the exhaustive nearest-centroid oracle") {
  const EmbeddingMatrix emb = random_embeddings(8, 3, 1234);
  const Codebooks cb = fit_codebooks(emb, 2, 2, 17, 50);
  const TokenizedCatalog cat = tokenize(emb, cb);
  for (std::size_t i = 0; i < emb.rows; ++i) {
    const auto expected = testing::reference_residual_codes(emb, cb, i);
    const auto got = cat.item_codes(i);
    for (std::size_t t = 0; t < cb.levels; ++t) CHECK(got[t] == expected[t]);
  }
}

TEST_CASE("forced collision appends a disambiguation level") {
  const EmbeddingMatrix emb = make_embeddings(2, 2, {0.3, 0.7, 0.3, 0.7});
  const Codebooks cb = fit_codebooks(emb, 2, 2, 1, 25);
  const TokenizedCatalog cat = tokenize(emb, cb);
  REQUIRE(cat.code_len == 3);
  CHECK(cat.dedup_level_present);
  CHECK(cat.item_codes(0)[0] == cat.item_codes(1)[0]);
  CHECK(cat.item_codes(0)[1] == cat.item_codes(1)[1]);
  CHECK(cat.item_codes(0)[2] == 0);
  CHECK(cat.item_codes(1)[2] == 1);
  CHECK(cat.level_vocab_sizes[2] == 2);
}

TEST_CASE("no collision means no extra level") {
  const EmbeddingMatrix emb = make_embeddings(4, 2, {0, 0, 10, 0, 0, 10, 10, 10});
  const Codebooks cb = fit_codebooks(emb, 2, 4, 1, 25);
  const TokenizedCatalog cat = tokenize(emb, cb);
  CHECK(cat.code_len == 2);
  CHECK_FALSE(cat.dedup_level_present);
}

TEST_CASE("full code sequences are pairwise distinct") {
  const EmbeddingMatrix emb = random_embeddings(40, 4, 7);
  const Codebooks cb = fit_codebooks(emb, 3, 4, 7, 50);
  const TokenizedCatalog cat = tokenize(emb, cb);
  for (std::size_t a = 0; a < cat.num_items; ++a) {
    for (std::size_t b = a + 1; b < cat.num_items; ++b) {
      const auto ca = cat.item_codes(a);
      const auto cb2 = cat.item_codes(b);
      CHECK_FALSE(std::equal(ca.begin(), ca.end(), cb2.begin()));
    }
  }
}

TEST_CASE("fixed seed reproduces a bit-identical catalog") {
  const EmbeddingMatrix emb = random_embeddings(24, 3, 11);
  const Codebooks cb1 = fit_codebooks(emb, 2, 4, 42, 50);
  const Codebooks cb2 = fit_codebooks(emb, 2, 4, 42, 50);
  for (std::size_t level = 0; level < 2; ++level) {
    CHECK(cb1.centroids[level].v == cb2.centroids[level].v);
  }
  const TokenizedCatalog c1 = tokenize(emb, cb1);
  const TokenizedCatalog c2 = tokenize(emb, cb2);
  CHECK(c1.codes == c2.codes);
  CHECK(c1.level_vocab_sizes == c2.level_vocab_sizes);
}

TEST_CASE("equidistant centroids resolve to the lowest index") {
  Matrix centroids(2, 2);
  centroids.at(0, 0) = 1.0;
  centroids.at(1, 0) = -1.0;
  const std::vector<double> point = {0.0, 0.0};
  CHECK(nearest_centroid(point, centroids) == 0);
}

TEST_CASE("error contracts") {
  const EmbeddingMatrix small = random_embeddings(3, 2, 1);
  CHECK_THROWS_AS(fit_codebooks(small, 1, 4, 1, 10), ConfigError);
  CHECK_THROWS_AS(fit_codebooks(small, 0, 2, 1, 10), ConfigError);

  EmbeddingMatrix bad = random_embeddings(4, 2, 2);
  bad.values[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_codebooks(bad, 1, 2, 1, 10), DataError);

  const EmbeddingMatrix ok = random_embeddings(4, 2, 3);
  const Codebooks cb = fit_codebooks(ok, 1, 2, 1, 10);
  const EmbeddingMatrix wrong_dim = random_embeddings(4, 3, 4);
  CHECK_THROWS_AS(tokenize(wrong_dim, cb), ConfigError);
}

}  // TEST_SUITE
