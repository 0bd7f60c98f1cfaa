#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "prefixrec/common.hpp"

namespace prefixrec {

// Per-user leave-one-out split: last interaction is the test target, the
// second-to-last the validation target, the remainder the training sequence.
struct UserSplit {
  std::vector<std::uint32_t> train_prefix;
  std::uint32_t valid_target = 0;
  std::uint32_t test_target = 0;
};

// Per-user chronological item sequences over a dense item index space.
// Immutable after construction; negative sampling takes caller-owned RNG
// state so parallel workers can run independent streams.
struct InteractionDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;                    // dense index -> external id
  std::vector<std::vector<std::uint32_t>> sequences;    // chronological
  std::vector<UserSplit> splits;                        // filled by split_leave_one_out
  bool has_splits = false;
  std::size_t max_history = 20;

  std::size_t num_users() const { return sequences.size(); }
  std::size_t num_items() const { return item_ids.size(); }
};

// Distinct item ids drawn uniformly without replacement, never containing
// the positive.
using NegativeSample = std::vector<std::uint32_t>;

// Parses a TSV interaction log (`user_id<TAB>item_id<TAB>timestamp`, the
// timestamp column optional when the file order is chronological) and applies
// iterative min-count filtering until a fixpoint: users below
// max(min_count, 3) interactions and items below min_count are dropped
// together until none remain. Sequences come out chronologically ordered,
// ties resolved by file order.
InteractionDataset load_interactions(const std::string& path, std::size_t min_count);
InteractionDataset load_interactions(std::istream& in, std::size_t min_count);

// Fills `splits`. Every sequence must have length >= 3.
void split_leave_one_out(InteractionDataset& ds);

NegativeSample sample_negatives(std::uint32_t positive, std::size_t n,
                                std::size_t num_items, Rng& rng);

// Training examples are (history prefix -> next item) pairs inside the
// training region; `all_pairs` selects every position, otherwise only the
// final one.
struct TrainPair {
  std::uint32_t user = 0;
  std::uint32_t target_pos = 0;  // index into train_prefix; history is [0, target_pos)
};
std::vector<TrainPair> make_train_pairs(const InteractionDataset& ds, bool all_pairs);

// Most recent `max_history` items of `seq[0, end)`.
std::span<const std::uint32_t> truncated_history(std::span<const std::uint32_t> seq,
                                                 std::size_t end, std::size_t max_history);

// Rewrites sequences and splits into the given item-id ordering (normally
// the tokenized catalog's) so model, decoder, and metrics all agree on
// indices. Fails if the log references an id absent from `canonical_ids`.
void align_to_items(InteractionDataset& ds, const std::vector<std::string>& canonical_ids);

// Line-delimited JSON split manifest, one record per user.
void write_split_manifest(const InteractionDataset& ds, std::ostream& out);

}  // namespace prefixrec
