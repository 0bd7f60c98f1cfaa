#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "prefixrec/model.hpp"
#include "prefixrec/tokenizer.hpp"

namespace prefixrec {

// Conditional log-probabilities per decoding level for a fixed query.
// Decoding is written against this interface so the same machinery runs on
// trained models and on hand-set probability tables.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t levels() const = 0;
  virtual std::uint32_t vocab_size(std::size_t level) const = 0;
  // log P(token | prefix) over the full level vocabulary.
  virtual std::vector<double> log_probs(std::span<const std::uint32_t> prefix,
                                        std::size_t level) const = 0;
};

// Scorer backed by a trained model and one pooled history.
class ModelScorer : public StepScorer {
 public:
  ModelScorer(const ModelParams& params, std::span<const std::uint32_t> history);
  std::size_t levels() const override { return params_.seq_len(); }
  std::uint32_t vocab_size(std::size_t level) const override { return params_.vocab[level]; }
  std::vector<double> log_probs(std::span<const std::uint32_t> prefix,
                                std::size_t level) const override;

 private:
  const ModelParams& params_;
  std::vector<double> pooled_;
};

// Scorer backed by explicit per-prefix distributions; used for constructed
// probability tables in audits and tests. Distributions are keyed by the
// prefix codes seen so far.
class TableScorer : public StepScorer {
 public:
  TableScorer(std::vector<std::uint32_t> vocab_sizes);
  // `probs` must sum to 1 over vocab_size(level).
  void set_distribution(std::span<const std::uint32_t> prefix, std::vector<double> probs);
  std::size_t levels() const override { return vocab_.size(); }
  std::uint32_t vocab_size(std::size_t level) const override { return vocab_[level]; }
  std::vector<double> log_probs(std::span<const std::uint32_t> prefix,
                                std::size_t level) const override;

 private:
  std::vector<std::uint32_t> vocab_;
  std::vector<std::vector<std::pair<std::vector<std::uint32_t>, std::vector<double>>>> tables_;
};

// Prefix tree over the catalog's code sequences; every leaf sits at depth T
// and carries its item. Children are kept code-sorted so traversal order is
// deterministic.
struct CodeTrie {
  struct Node {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> children;  // code -> node index
    std::int64_t item = -1;                                         // leaf only
  };
  std::vector<Node> nodes;  // nodes[0] is the root
  std::size_t depth = 0;

  const Node& root() const { return nodes[0]; }
};

CodeTrie build_trie(const TokenizedCatalog& catalog);

struct ScoredItem {
  std::uint32_t item = 0;
  double score = 0.0;
};

// Everything the pruning process discarded, step by step, plus the surviving
// frontiers. Used for retention audits and prefix-level recall.
struct PruneTrace {
  struct PrunedEntry {
    std::vector<std::uint32_t> prefix;
    std::size_t rank = 0;  // 1-based rank among that step's candidates
    double score = 0.0;
  };
  // frontiers[t] holds the step-(t+1) survivors in rank order.
  std::vector<std::vector<std::vector<std::uint32_t>>> frontiers;
  std::vector<std::vector<PrunedEntry>> pruned;

  bool prefix_survived(std::span<const std::uint32_t> prefix) const;
};

struct BeamResult {
  std::vector<ScoredItem> items;  // score-descending, ties by code sequence
  PruneTrace trace;
};

// Constrained beam search over the trie: expansions at each step are limited
// to valid continuations, cumulative scores add the level log-probability,
// and the top K candidates survive (ties broken toward the lexicographically
// smaller code sequence).
BeamResult beam_search(const StepScorer& scorer, std::size_t K, const CodeTrie& trie);
BeamResult beam_search(const ModelParams& params, std::span<const std::uint32_t> history,
                       std::size_t K, const CodeTrie& trie);

// Scores every catalog item by teacher forcing and returns the global top K
// under the same ordering as beam_search.
std::vector<ScoredItem> full_sort_topk(const StepScorer& scorer, std::size_t K,
                                       const TokenizedCatalog& catalog);
std::vector<ScoredItem> full_sort_topk(const ModelParams& params,
                                       std::span<const std::uint32_t> history, std::size_t K,
                                       const TokenizedCatalog& catalog);

// For each history: how much of the full-sort top-K_global set still has a
// surviving prefix after each beam step.
struct RetentionReport {
  std::vector<std::vector<double>> per_history;  // [history][step]
  std::vector<double> mean_per_step;
};

RetentionReport audit_retention(const ModelParams& params,
                                const std::vector<std::vector<std::uint32_t>>& histories,
                                std::size_t K_global, std::size_t K_beam,
                                const TokenizedCatalog& catalog, const CodeTrie& trie);
RetentionReport audit_retention_scored(
    const std::vector<const StepScorer*>& scorers, std::size_t K_global, std::size_t K_beam,
    const TokenizedCatalog& catalog, const CodeTrie& trie);

// Median per-query wall-clock for beam search at each K, plus full sorting.
struct TimingRow {
  std::string label;
  std::size_t K = 0;
  double median_us = 0.0;
  double speedup_vs_full = 0.0;
};

std::vector<TimingRow> benchmark_decode(const ModelParams& params,
                                        const std::vector<std::vector<std::uint32_t>>& histories,
                                        std::span<const std::size_t> K_list,
                                        const TokenizedCatalog& catalog, const CodeTrie& trie);

}  // namespace prefixrec
