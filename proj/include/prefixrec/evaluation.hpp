#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "prefixrec/dataset.hpp"
#include "prefixrec/decoder.hpp"

namespace prefixrec {

int recall_at_k(const std::vector<ScoredItem>& ranked, std::uint32_t target, std::size_t k);

// Single-relevant-item NDCG: 1/log2(1+rank) if the target ranks within k,
// else 0 (ideal DCG is 1 under leave-one-out).
double ndcg_at_k(const std::vector<ScoredItem>& ranked, std::uint32_t target, std::size_t k);

// 1 iff the target's length-m prefix is present in the step-m beam frontier.
int prefix_recall_at_k(const PruneTrace& trace, std::span<const std::uint32_t> target_codes,
                       std::size_t m, std::size_t k);

struct UserMetricRow {
  std::uint32_t user = 0;
  std::map<std::size_t, int> recall;      // cutoff -> 0/1
  std::map<std::size_t, double> ndcg;     // cutoff -> value
  std::vector<int> prefix_recall;         // per m = 1..T at the beam width
};

struct MetricReport {
  std::map<std::size_t, double> recall;   // cutoff -> mean
  std::map<std::size_t, double> ndcg;
  std::vector<double> prefix_recall;      // per m = 1..T
  std::vector<UserMetricRow> per_user;
  std::size_t beam_width = 0;
  std::uint64_t config_digest = 0;
};

// Beam-decodes every test query from the checkpointed parameters and
// averages per-user metrics. Per-prefix recall comes from the prune traces of
// the same pass.
// `workers` fans user decoding out to that many threads; rows land in
// preallocated per-user slots and aggregation runs in user order, so results
// are identical for any worker count.
enum class EvalSplit { valid, test };
MetricReport evaluate(const ModelParams& params, const InteractionDataset& ds,
                      const TokenizedCatalog& catalog, const CodeTrie& trie,
                      std::size_t K_beam, std::span<const std::size_t> cutoffs,
                      EvalSplit split = EvalSplit::test, std::size_t workers = 1);

}  // namespace prefixrec
