#include "prefixrec/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace prefixrec {

int recall_at_k(const std::vector<ScoredItem>& ranked, std::uint32_t target, std::size_t k) {
  if (k < 1) throw std::logic_error("recall_at_k: k must be >= 1");
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked[i].item == target) return 1;
  }
  return 0;
}

double ndcg_at_k(const std::vector<ScoredItem>& ranked, std::uint32_t target, std::size_t k) {
  if (k < 1) throw std::logic_error("ndcg_at_k: k must be >= 1");
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked[i].item == target) {
      return 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  return 0.0;
}

int prefix_recall_at_k(const PruneTrace& trace, std::span<const std::uint32_t> target_codes,
                       std::size_t m, std::size_t /*k*/) {
  if (m < 1 || m > trace.frontiers.size()) {
    throw std::logic_error("prefix_recall_at_k: m out of range");
  }
  return trace.prefix_survived(target_codes.first(m)) ? 1 : 0;
}

MetricReport evaluate(const ModelParams& params, const InteractionDataset& ds,
                      const TokenizedCatalog& catalog, const CodeTrie& trie,
                      std::size_t K_beam, std::span<const std::size_t> cutoffs,
                      EvalSplit split, std::size_t workers) {
  if (!ds.has_splits) throw std::logic_error("evaluate: dataset is not split");
  const std::size_t T = catalog.code_len;
  const std::size_t num_users = ds.splits.size();

  MetricReport report;
  report.beam_width = K_beam;
  report.prefix_recall.assign(T, 0.0);
  for (std::size_t k : cutoffs) {
    report.recall[k] = 0.0;
    report.ndcg[k] = 0.0;
  }
  report.per_user.resize(num_users);

  auto eval_user = [&](std::size_t u) {
    const auto& s = ds.splits[u];
    std::vector<std::uint32_t> history(s.train_prefix.begin(), s.train_prefix.end());
    std::uint32_t target;
    if (split == EvalSplit::valid) {
      target = s.valid_target;
    } else {
      history.push_back(s.valid_target);
      target = s.test_target;
    }
    const auto hist = truncated_history(history, history.size(), ds.max_history);
    const auto beam = beam_search(params, hist, K_beam, trie);

    UserMetricRow row;
    row.user = static_cast<std::uint32_t>(u);
    for (std::size_t k : cutoffs) {
      row.recall[k] = recall_at_k(beam.items, target, k);
      row.ndcg[k] = ndcg_at_k(beam.items, target, k);
    }
    const auto target_codes = catalog.item_codes(target);
    row.prefix_recall.resize(T);
    for (std::size_t m = 1; m <= T; ++m) {
      row.prefix_recall[m - 1] = prefix_recall_at_k(beam.trace, target_codes, m, K_beam);
    }
    report.per_user[u] = std::move(row);
  };

  if (workers <= 1) {
    for (std::size_t u = 0; u < num_users; ++u) eval_user(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t u = next.fetch_add(1); u < num_users; u = next.fetch_add(1)) {
          eval_user(u);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // Deterministic aggregation in user order, independent of worker count.
  for (const auto& row : report.per_user) {
    for (std::size_t k : cutoffs) {
      report.recall[k] += row.recall.at(k);
      report.ndcg[k] += row.ndcg.at(k);
    }
    for (std::size_t m = 0; m < T; ++m) report.prefix_recall[m] += row.prefix_recall[m];
  }
  const double inv = 1.0 / static_cast<double>(num_users);
  for (auto& [k, v] : report.recall) v *= inv;
  for (auto& [k, v] : report.ndcg) v *= inv;
  for (double& v : report.prefix_recall) v *= inv;
  return report;
}

}  // namespace prefixrec
