#pragma once

#include <cstdint>
#include <iosfwd>

#include "prefixrec/dataset.hpp"
#include "prefixrec/tokenizer.hpp"

namespace prefixrec {

// Desk-scale data source: Gaussian-mixture item embeddings plus cluster-walk
// interaction sequences. Users stay in their current cluster with
// probability stay_prob and otherwise hop to the next cluster in a fixed
// cycle, so histories carry a learnable sequential signal; items inside a
// cluster follow a Zipf popularity curve.
struct SyntheticConfig {
  std::size_t num_items = 200;
  std::size_t num_users = 2000;
  std::size_t embed_dim = 16;
  std::size_t clusters = 16;
  double cluster_noise = 0.15;
  std::size_t seq_len_min = 6;
  std::size_t seq_len_max = 14;
  double stay_prob = 0.8;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 7;
};

EmbeddingMatrix synth_embeddings(const SyntheticConfig& cfg);

// Writes a TSV interaction log (user_id, item_id, timestamp) to `out`.
void synth_interactions(const SyntheticConfig& cfg, std::ostream& out);

}  // namespace prefixrec
