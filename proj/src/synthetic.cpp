#include "prefixrec/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <vector>

namespace prefixrec {

namespace {

std::string padded_id(char prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%05zu", prefix, i);
  return buf;
}

}  // namespace

EmbeddingMatrix synth_embeddings(const SyntheticConfig& cfg) {
  if (cfg.clusters < 1) throw ConfigError("synthetic.clusters: must be >= 1");
  if (cfg.num_items < cfg.clusters) {
    throw ConfigError("synthetic.num_items: need at least one item per cluster");
  }
  Rng rng(cfg.seed);

  Matrix centers(cfg.clusters, cfg.embed_dim);
  for (double& x : centers.v) x = gaussian(rng);

  EmbeddingMatrix emb;
  emb.rows = cfg.num_items;
  emb.cols = cfg.embed_dim;
  emb.values.resize(cfg.num_items * cfg.embed_dim);
  emb.item_ids.reserve(cfg.num_items);
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    const std::size_t c = i % cfg.clusters;
    for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
      emb.values[i * cfg.embed_dim + j] = centers.at(c, j) + cfg.cluster_noise * gaussian(rng);
    }
    emb.item_ids.push_back(padded_id('i', i));
  }
  return emb;
}

void synth_interactions(const SyntheticConfig& cfg, std::ostream& out) {
  if (cfg.seq_len_min < 1 || cfg.seq_len_max < cfg.seq_len_min) {
    throw ConfigError("synthetic.seq_len: need 1 <= seq_len_min <= seq_len_max");
  }
  // Interaction sequences use an RNG stream decoupled from the embedding one
  // so either side can be regenerated independently.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  // Zipf popularity over the items of each cluster (item i belongs to
  // cluster i % clusters, mirroring synth_embeddings).
  std::vector<std::vector<std::uint32_t>> members(cfg.clusters);
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    members[i % cfg.clusters].push_back(static_cast<std::uint32_t>(i));
  }
  std::vector<std::vector<double>> cdf(cfg.clusters);
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    double z = 0.0;
    cdf[c].resize(members[c].size());
    for (std::size_t r = 0; r < members[c].size(); ++r) {
      z += 1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent);
      cdf[c][r] = z;
    }
    for (double& x : cdf[c]) x /= z;
  }
  auto draw_item = [&](std::size_t cluster) {
    const double u = uniform_unit(rng);
    const auto& c = cdf[cluster];
    std::size_t lo = 0, hi = c.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (c[mid] < u) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return members[cluster][lo];
  };

  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const std::size_t len =
        cfg.seq_len_min + uniform_index(rng, cfg.seq_len_max - cfg.seq_len_min + 1);
    std::size_t cluster = uniform_index(rng, cfg.clusters);
    const std::string user = padded_id('u', u);
    for (std::size_t t = 0; t < len; ++t) {
      const std::uint32_t item = draw_item(cluster);
      out << user << '\t' << padded_id('i', item) << '\t' << t << '\n';
      if (uniform_unit(rng) >= cfg.stay_prob) cluster = (cluster + 1) % cfg.clusters;
    }
  }
}

}  // namespace prefixrec
