#include "prefixrec/decoder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace prefixrec {

ModelScorer::ModelScorer(const ModelParams& params, std::span<const std::uint32_t> history)
    : params_(params), pooled_(pool_history(params, history)) {}

std::vector<double> ModelScorer::log_probs(std::span<const std::uint32_t> prefix,
                                           std::size_t level) const {
  return log_softmax(step_logits(params_, pooled_, prefix, level));
}

TableScorer::TableScorer(std::vector<std::uint32_t> vocab_sizes)
    : vocab_(std::move(vocab_sizes)), tables_(vocab_.size()) {}

void TableScorer::set_distribution(std::span<const std::uint32_t> prefix,
                                   std::vector<double> probs) {
  const std::size_t level = prefix.size();
  if (level >= vocab_.size()) throw std::logic_error("TableScorer: prefix too long");
  if (probs.size() != vocab_[level]) throw std::logic_error("TableScorer: wrong vocab width");
  tables_[level].emplace_back(std::vector<std::uint32_t>(prefix.begin(), prefix.end()),
                              std::move(probs));
}

std::vector<double> TableScorer::log_probs(std::span<const std::uint32_t> prefix,
                                           std::size_t level) const {
  for (const auto& [key, probs] : tables_[level]) {
    if (key.size() == level && std::equal(key.begin(), key.end(), prefix.begin())) {
      std::vector<double> out(probs.size());
      for (std::size_t v = 0; v < probs.size(); ++v) {
        out[v] = probs[v] > 0.0 ? std::log(probs[v]) : -1e30;
      }
      return out;
    }
  }
  throw std::logic_error("TableScorer: no distribution registered for prefix");
}

CodeTrie build_trie(const TokenizedCatalog& catalog) {
  if (catalog.num_items == 0) throw ConfigError("build_trie: empty catalog");
  CodeTrie trie;
  trie.depth = catalog.code_len;
  trie.nodes.emplace_back();
  for (std::size_t i = 0; i < catalog.num_items; ++i) {
    const auto codes = catalog.item_codes(i);
    std::uint32_t node = 0;
    for (std::size_t t = 0; t < codes.size(); ++t) {
      auto& children = trie.nodes[node].children;
      auto it = std::lower_bound(children.begin(), children.end(), codes[t],
                                 [](const auto& c, std::uint32_t v) { return c.first < v; });
      if (it == children.end() || it->first != codes[t]) {
        const auto next = static_cast<std::uint32_t>(trie.nodes.size());
        it = trie.nodes[node].children.insert(it, {codes[t], next});
        trie.nodes.emplace_back();
      }
      node = it->second;
    }
    trie.nodes[node].item = static_cast<std::int64_t>(i);
  }
  return trie;
}

bool PruneTrace::prefix_survived(std::span<const std::uint32_t> prefix) const {
  if (prefix.empty() || prefix.size() > frontiers.size()) return false;
  const auto& frontier = frontiers[prefix.size() - 1];
  for (const auto& survivor : frontier) {
    if (std::equal(prefix.begin(), prefix.end(), survivor.begin())) return true;
  }
  return false;
}

namespace {

struct BeamEntry {
  std::vector<std::uint32_t> prefix;
  std::uint32_t node = 0;
  double score = 0.0;
};

bool beam_order(const BeamEntry& a, const BeamEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.prefix < b.prefix;  // lexicographic tie-break
}

}  // namespace

BeamResult beam_search(const StepScorer& scorer, std::size_t K, const CodeTrie& trie) {
  if (K < 1) throw ConfigError("beam_search: K must be >= 1");
  if (trie.nodes.size() <= 1) throw ConfigError("beam_search: empty trie");
  const std::size_t T = trie.depth;

  BeamResult result;
  result.trace.frontiers.resize(T);
  result.trace.pruned.resize(T);

  std::vector<BeamEntry> frontier{BeamEntry{}};
  std::vector<BeamEntry> candidates;
  for (std::size_t t = 0; t < T; ++t) {
    candidates.clear();
    for (const auto& entry : frontier) {
      const auto lp = scorer.log_probs(entry.prefix, t);
      for (const auto& [code, child] : trie.nodes[entry.node].children) {
        BeamEntry next;
        next.prefix = entry.prefix;
        next.prefix.push_back(code);
        next.node = child;
        next.score = entry.score + lp[code];
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), beam_order);
    const std::size_t keep = std::min(K, candidates.size());
    auto& survivors = result.trace.frontiers[t];
    survivors.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) survivors.push_back(candidates[i].prefix);
    for (std::size_t i = keep; i < candidates.size(); ++i) {
      result.trace.pruned[t].push_back(
          {std::move(candidates[i].prefix), i + 1, candidates[i].score});
    }
    candidates.resize(keep);
    frontier = std::move(candidates);
    candidates = {};
  }

  result.items.reserve(frontier.size());
  for (const auto& entry : frontier) {
    result.items.push_back(
        {static_cast<std::uint32_t>(trie.nodes[entry.node].item), entry.score});
  }
  return result;
}

BeamResult beam_search(const ModelParams& params, std::span<const std::uint32_t> history,
                       std::size_t K, const CodeTrie& trie) {
  ModelScorer scorer(params, history);
  return beam_search(scorer, K, trie);
}

std::vector<ScoredItem> full_sort_topk(const StepScorer& scorer, std::size_t K,
                                       const TokenizedCatalog& catalog) {
  if (catalog.num_items == 0) throw ConfigError("full_sort_topk: empty catalog");
  std::vector<ScoredItem> scored(catalog.num_items);
  for (std::size_t i = 0; i < catalog.num_items; ++i) {
    const auto codes = catalog.item_codes(i);
    double score = 0.0;
    for (std::size_t t = 0; t < codes.size(); ++t) {
      score += scorer.log_probs(codes.first(t), t)[codes[t]];
    }
    scored[i] = {static_cast<std::uint32_t>(i), score};
  }
  std::sort(scored.begin(), scored.end(), [&](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    const auto ca = catalog.item_codes(a.item);
    const auto cb = catalog.item_codes(b.item);
    return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end());
  });
  scored.resize(std::min(K, scored.size()));
  return scored;
}

std::vector<ScoredItem> full_sort_topk(const ModelParams& params,
                                       std::span<const std::uint32_t> history, std::size_t K,
                                       const TokenizedCatalog& catalog) {
  ModelScorer scorer(params, history);
  return full_sort_topk(scorer, K, catalog);
}

RetentionReport audit_retention_scored(
    const std::vector<const StepScorer*>& scorers, std::size_t K_global, std::size_t K_beam,
    const TokenizedCatalog& catalog, const CodeTrie& trie) {
  if (K_global < 1 || K_beam < 1) throw ConfigError("audit_retention: K must be >= 1");
  const std::size_t T = catalog.code_len;

  RetentionReport report;
  report.mean_per_step.assign(T, 0.0);
  for (const StepScorer* scorer : scorers) {
    const auto global = full_sort_topk(*scorer, K_global, catalog);
    const auto beam = beam_search(*scorer, K_beam, trie);
    std::vector<double> row(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      std::size_t surviving = 0;
      for (const auto& g : global) {
        const auto codes = catalog.item_codes(g.item);
        if (beam.trace.prefix_survived(codes.first(t + 1))) ++surviving;
      }
      row[t] = static_cast<double>(surviving) / static_cast<double>(global.size());
      report.mean_per_step[t] += row[t];
    }
    report.per_history.push_back(std::move(row));
  }
  for (double& x : report.mean_per_step) x /= static_cast<double>(scorers.size());
  return report;
}

RetentionReport audit_retention(const ModelParams& params,
                                const std::vector<std::vector<std::uint32_t>>& histories,
                                std::size_t K_global, std::size_t K_beam,
                                const TokenizedCatalog& catalog, const CodeTrie& trie) {
  std::vector<ModelScorer> owned;
  owned.reserve(histories.size());
  for (const auto& h : histories) owned.emplace_back(params, h);
  std::vector<const StepScorer*> ptrs;
  ptrs.reserve(owned.size());
  for (const auto& s : owned) ptrs.push_back(&s);
  return audit_retention_scored(ptrs, K_global, K_beam, catalog, trie);
}

std::vector<TimingRow> benchmark_decode(const ModelParams& params,
                                        const std::vector<std::vector<std::uint32_t>>& histories,
                                        std::span<const std::size_t> K_list,
                                        const TokenizedCatalog& catalog, const CodeTrie& trie) {
  if (histories.empty()) throw ConfigError("benchmark_decode: no histories");
  using Clock = std::chrono::steady_clock;

  auto median = [](std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
  };

  std::vector<double> full_times;
  full_times.reserve(histories.size());
  for (const auto& h : histories) {
    const auto start = Clock::now();
    auto r = full_sort_topk(params, h, 20, catalog);
    const auto stop = Clock::now();
    (void)r;
    full_times.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
  }
  const double full_median = median(full_times);

  std::vector<TimingRow> rows;
  for (std::size_t K : K_list) {
    std::vector<double> times;
    times.reserve(histories.size());
    for (const auto& h : histories) {
      const auto start = Clock::now();
      auto r = beam_search(params, h, K, trie);
      const auto stop = Clock::now();
      (void)r;
      times.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
    }
    const double med = median(times);
    rows.push_back({"beam", K, med, med > 0.0 ? full_median / med : 0.0});
  }
  rows.push_back({"full_sort", catalog.num_items, full_median, 1.0});
  return rows;
}

}  // namespace prefixrec
