#include <doctest.h>

#include <cmath>
#include <set>

#include "prefixrec/decoder.hpp"
#include "prefixrec/losses.hpp"

using namespace prefixrec;

namespace {

TokenizedCatalog full_catalog(std::vector<std::uint32_t> vocab) {
  TokenizedCatalog cat;
  cat.code_len = vocab.size();
  cat.level_vocab_sizes = vocab;
  std::size_t total = 1;
  for (std::uint32_t v : vocab) total *= v;
  cat.num_items = total;
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rem = i;
    std::vector<std::uint32_t> codes(vocab.size());
    for (std::size_t t = vocab.size(); t-- > 0;) {
      codes[t] = static_cast<std::uint32_t>(rem % vocab[t]);
      rem /= vocab[t];
    }
    cat.codes.insert(cat.codes.end(), codes.begin(), codes.end());
    cat.item_ids.push_back("i" + std::to_string(i));
  }
  return cat;
}

ModelParams random_model(const TokenizedCatalog& cat, std::size_t d, std::uint64_t seed) {
  ModelParams p = init_params(cat, d, seed);
  Rng rng(seed + 1);
  p.for_each_tensor([&](Tensor& t) {
    for (double& x : t.data) x = uniform_in(rng, -0.9, 0.9);
  });
  return p;
}

// The documented inconsistency table: P(a)=0.4 < P(b)=0.6, but the best
// a-completion (0.4 * 0.99) beats every b-completion (0.6 * 0.5).
TableScorer inconsistency_table() {
  TableScorer scorer({2, 2});
  scorer.set_distribution({}, {0.4, 0.6});
  const std::uint32_t a[] = {0};
  const std::uint32_t b[] = {1};
  scorer.set_distribution(a, {0.99, 0.01});
  scorer.set_distribution(b, {0.5, 0.5});
  return scorer;
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("trie reaches every item with leaves at full depth") {
  const auto cat = full_catalog({2, 3});
  const auto trie = build_trie(cat);
  std::set<std::int64_t> leaves;
  for (const auto& node : trie.nodes) {
    if (node.item >= 0) {
      CHECK(node.children.empty());
      leaves.insert(node.item);
    }
  }
  CHECK(leaves.size() == cat.num_items);
}

TEST_CASE("exhaustive beam equals full sort, scores within 1e-10") {
  const auto cat = full_catalog({3, 2, 2});
  const auto trie = build_trie(cat);
  const auto params = random_model(cat, 4, 21);
  const std::uint32_t hist[] = {1, 5};

  const auto beam = beam_search(params, hist, cat.num_items, trie);
  const auto full = full_sort_topk(params, hist, cat.num_items, cat);
  REQUIRE(beam.items.size() == full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(beam.items[i].item == full[i].item);
    CHECK(std::abs(beam.items[i].score - full[i].score) <= 1e-10);
  }
}

TEST_CASE("the constructed table reproduces the training-inference inconsistency") {
  const auto cat = full_catalog({2, 2});
  const auto trie = build_trie(cat);
  const auto scorer = inconsistency_table();

  // Brute-force enumeration of the four sequences.
  const double probs[4] = {0.4 * 0.99, 0.4 * 0.01, 0.6 * 0.5, 0.6 * 0.5};
  std::size_t best = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  CHECK(best == 0);  // item (a, x)

  const auto full = full_sort_topk(scorer, 1, cat);
  REQUIRE(full.size() == 1);
  CHECK(full[0].item == 0);
  CHECK(full[0].score == doctest::Approx(std::log(0.4 * 0.99)).epsilon(1e-12));

  const auto beam = beam_search(scorer, 1, trie);
  REQUIRE(beam.items.size() == 1);
  // Prefix b wins step 1, so a b-completion is returned; ties between the
  // two b-completions break lexicographically.
  CHECK(beam.items[0].item == 2);
  CHECK_FALSE(beam.trace.prefix_survived(cat.item_codes(0).first(1)));
}

TEST_CASE("beam-1 on a memorizing model returns the target at its sequence score") {
  const auto cat = full_catalog({3, 3});
  const auto trie = build_trie(cat);
  ModelParams p = init_params(cat, 2, 3);
  p.for_each_tensor([](Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
  const auto target_codes = cat.item_codes(4);  // (1, 1)
  p.bias[0].data[target_codes[0]] = 9.0;
  p.bias[1].data[target_codes[1]] = 9.0;

  const std::uint32_t hist[] = {0};
  const auto beam = beam_search(p, hist, 1, trie);
  REQUIRE(beam.items.size() == 1);
  CHECK(beam.items[0].item == 4);

  const auto trace = forward(p, hist, target_codes);
  const auto ps = prefix_scores(trace);
  CHECK(beam.items[0].score == doctest::Approx(ps.S[1]).epsilon(1e-12));
}

TEST_CASE("full sort of a single-item catalog") {
  TokenizedCatalog cat;
  cat.num_items = 1;
  cat.code_len = 2;
  cat.level_vocab_sizes = {2, 2};
  cat.codes = {1, 0};
  cat.item_ids = {"only"};
  const auto params = random_model(cat, 3, 4);
  const std::uint32_t hist[] = {0};
  const auto full = full_sort_topk(params, hist, 5, cat);
  REQUIRE(full.size() == 1);
  CHECK(full[0].item == 0);
}

TEST_CASE("all-equal scores rank lexicographically by code sequence") {
  const auto cat = full_catalog({2, 2});
  ModelParams p = init_params(cat, 2, 5);
  p.for_each_tensor([](Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
  const std::uint32_t hist[] = {2};
  const auto full = full_sort_topk(p, hist, 4, cat);
  for (std::size_t i = 0; i < 4; ++i) CHECK(full[i].item == i);

  const auto trie = build_trie(cat);
  const auto beam = beam_search(p, hist, 4, trie);
  for (std::size_t i = 0; i < 4; ++i) CHECK(beam.items[i].item == i);
}

TEST_CASE("full sort agrees with per-item recomputation through prefix_scores") {
  const auto cat = full_catalog({4, 5});  // 20 items
  const auto params = random_model(cat, 4, 6);
  const std::uint32_t hist[] = {3, 11, 7};
  const auto full = full_sort_topk(params, hist, 20, cat);
  REQUIRE(full.size() == 20);
  for (const auto& si : full) {
    const auto trace = forward(params, hist, cat.item_codes(si.item));
    const auto ps = prefix_scores(trace);
    CHECK(std::abs(si.score - ps.S[1]) <= 1e-10);
  }
  for (std::size_t i = 1; i < full.size(); ++i) CHECK(full[i - 1].score >= full[i].score);
}

TEST_CASE("retention is 1 under an exhaustive beam and dips in the constructed case") {
  const auto cat = full_catalog({2, 2});
  const auto trie = build_trie(cat);
  const auto scorer = inconsistency_table();
  std::vector<const StepScorer*> scorers = {&scorer};

  const auto exhaustive = audit_retention_scored(scorers, 2, 4, cat, trie);
  for (double r : exhaustive.mean_per_step) CHECK(r == doctest::Approx(1.0));

  const auto tight = audit_retention_scored(scorers, 1, 1, cat, trie);
  CHECK(tight.mean_per_step[0] < 1.0);

  // Retention is non-increasing in the step for every history.
  const auto wide = audit_retention_scored(scorers, 2, 1, cat, trie);
  for (const auto& row : wide.per_history) {
    for (std::size_t t = 1; t < row.size(); ++t) CHECK(row[t] <= row[t - 1] + 1e-12);
  }
}

TEST_CASE("survival soundness: output items are exactly the never-pruned ones") {
  const auto cat = full_catalog({3, 3, 2});
  const auto trie = build_trie(cat);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto params = random_model(cat, 3, 100 + seed);
    const std::uint32_t hist[] = {static_cast<std::uint32_t>(seed)};
    const auto beam = beam_search(params, hist, 4, trie);
    std::set<std::uint32_t> output;
    for (const auto& si : beam.items) output.insert(si.item);
    for (std::size_t i = 0; i < cat.num_items; ++i) {
      const auto codes = cat.item_codes(i);
      bool survived_all = true;
      for (std::size_t t = 1; t <= cat.code_len; ++t) {
        if (!beam.trace.prefix_survived(codes.first(t))) {
          survived_all = false;
          break;
        }
      }
      CHECK(survived_all == (output.count(static_cast<std::uint32_t>(i)) == 1));
    }
  }
}

TEST_CASE("a pruned prefix never reappears in later frontiers") {
  const auto cat = full_catalog({3, 3, 3});
  const auto trie = build_trie(cat);
  const auto params = random_model(cat, 3, 42);
  const std::uint32_t hist[] = {2, 9};
  const auto beam = beam_search(params, hist, 3, trie);
  for (std::size_t t = 0; t < beam.trace.pruned.size(); ++t) {
    for (const auto& pruned : beam.trace.pruned[t]) {
      CHECK(pruned.rank > 3);
      for (std::size_t later = t; later < beam.trace.frontiers.size(); ++later) {
        for (const auto& survivor : beam.trace.frontiers[later]) {
          const bool is_extension =
              survivor.size() >= pruned.prefix.size() &&
              std::equal(pruned.prefix.begin(), pruned.prefix.end(), survivor.begin());
          CHECK_FALSE(is_extension);
        }
      }
    }
  }
}

TEST_CASE("timing table has one row per beam width plus the full sort") {
  const auto cat = full_catalog({4, 4});
  const auto trie = build_trie(cat);
  const auto params = random_model(cat, 3, 55);
  const std::vector<std::vector<std::uint32_t>> histories = {{0, 1}, {5}, {9, 2}};
  const std::size_t ks[] = {1, 4, 16};
  const auto rows = benchmark_decode(params, histories, ks, cat, trie);
  REQUIRE(rows.size() == 4);
  CHECK(rows[3].label == "full_sort");
}

TEST_CASE("decoder error contracts") {
  const auto cat = full_catalog({2, 2});
  const auto trie = build_trie(cat);
  const auto params = random_model(cat, 2, 8);
  const std::uint32_t hist[] = {0};
  CHECK_THROWS_AS(beam_search(params, hist, 0, trie), ConfigError);
  CodeTrie empty;
  empty.nodes.emplace_back();
  CHECK_THROWS_AS(beam_search(params, hist, 1, empty), ConfigError);
}

}  // TEST_SUITE
