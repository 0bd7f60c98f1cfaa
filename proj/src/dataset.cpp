#include "prefixrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace prefixrec {

namespace {

struct RawEvent {
  std::string user;
  std::string item;
  std::int64_t timestamp;
  std::size_t file_order;
};

std::vector<RawEvent> parse_tsv(std::istream& in) {
  std::vector<RawEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 2 && fields.size() != 3) {
      throw ParseError("expected 2 or 3 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError("empty user or item id", line_no);
    }
    std::int64_t ts = static_cast<std::int64_t>(events.size());
    if (fields.size() == 3) {
      const std::string& f = fields[2];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), ts);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError("bad timestamp '" + f + "'", line_no);
      }
    }
    events.push_back({std::move(fields[0]), std::move(fields[1]), ts, events.size()});
  }
  return events;
}

}  // namespace

InteractionDataset load_interactions(const std::string& path, std::size_t min_count) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction log: " + path);
  return load_interactions(in, min_count);
}

InteractionDataset load_interactions(std::istream& in, std::size_t min_count) {
  std::vector<RawEvent> events = parse_tsv(in);

  // Leave-one-out needs at least (train, valid, test) per user, so the user
  // threshold is never below 3 regardless of min_count.
  const std::size_t user_min = std::max<std::size_t>(min_count, 3);

  std::vector<bool> alive(events.size(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, std::size_t> user_count, item_count;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (!alive[i]) continue;
      ++user_count[events[i].user];
      ++item_count[events[i].item];
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (!alive[i]) continue;
      if (user_count[events[i].user] < user_min || item_count[events[i].item] < min_count) {
        alive[i] = false;
        changed = true;
      }
    }
  }

  // Dense ids in first-appearance order over surviving events.
  InteractionDataset ds;
  std::unordered_map<std::string, std::uint32_t> user_idx, item_idx;
  std::map<std::uint32_t, std::vector<std::size_t>> per_user;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (!alive[i]) continue;
    auto [uit, unew] = user_idx.try_emplace(
        events[i].user, static_cast<std::uint32_t>(ds.user_ids.size()));
    if (unew) ds.user_ids.push_back(events[i].user);
    auto [iit, inew] = item_idx.try_emplace(
        events[i].item, static_cast<std::uint32_t>(ds.item_ids.size()));
    if (inew) ds.item_ids.push_back(events[i].item);
    per_user[uit->second].push_back(i);
  }
  if (per_user.empty()) {
    throw DataError("no interactions left after " + std::to_string(min_count) +
                    "-core filtering");
  }

  ds.sequences.resize(ds.user_ids.size());
  for (auto& [u, idxs] : per_user) {
    std::stable_sort(idxs.begin(), idxs.end(), [&](std::size_t a, std::size_t b) {
      if (events[a].timestamp != events[b].timestamp)
        return events[a].timestamp < events[b].timestamp;
      return events[a].file_order < events[b].file_order;
    });
    auto& seq = ds.sequences[u];
    seq.reserve(idxs.size());
    for (std::size_t i : idxs) seq.push_back(item_idx.at(events[i].item));
  }
  return ds;
}

void split_leave_one_out(InteractionDataset& ds) {
  ds.splits.clear();
  ds.splits.reserve(ds.sequences.size());
  for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
    const auto& seq = ds.sequences[u];
    if (seq.size() < 3) {
      throw DataError("sequence too short for leave-one-out split (user '" +
                      ds.user_ids[u] + "', length " + std::to_string(seq.size()) + ")");
    }
    UserSplit s;
    s.test_target = seq[seq.size() - 1];
    s.valid_target = seq[seq.size() - 2];
    s.train_prefix.assign(seq.begin(), seq.end() - 2);
    ds.splits.push_back(std::move(s));
  }
  ds.has_splits = true;
}

NegativeSample sample_negatives(std::uint32_t positive, std::size_t n,
                                std::size_t num_items, Rng& rng) {
  if (num_items == 0 || n > num_items - 1) {
    throw ConfigError("sample_negatives: n = " + std::to_string(n) +
                      " exceeds corpus size minus one (" +
                      std::to_string(num_items == 0 ? 0 : num_items - 1) + ")");
  }
  // Floyd's algorithm over the corpus with the positive spliced out.
  const std::uint64_t universe = num_items - 1;
  auto remap = [&](std::uint64_t x) {
    return static_cast<std::uint32_t>(x < positive ? x : x + 1);
  };
  NegativeSample out;
  out.reserve(n);
  std::unordered_set<std::uint64_t> seen;
  for (std::uint64_t j = universe - n; j < universe; ++j) {
    const std::uint64_t t = uniform_index(rng, j + 1);
    if (seen.insert(t).second) {
      out.push_back(remap(t));
    } else {
      seen.insert(j);
      out.push_back(remap(j));
    }
  }
  return out;
}

std::vector<TrainPair> make_train_pairs(const InteractionDataset& ds, bool all_pairs) {
  if (!ds.has_splits) throw std::logic_error("make_train_pairs: dataset is not split");
  std::vector<TrainPair> pairs;
  for (std::size_t u = 0; u < ds.splits.size(); ++u) {
    const auto& prefix = ds.splits[u].train_prefix;
    if (prefix.size() < 2) continue;  // no (history -> next) pair inside the region
    if (all_pairs) {
      for (std::size_t pos = 1; pos < prefix.size(); ++pos) {
        pairs.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(pos)});
      }
    } else {
      pairs.push_back(
          {static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(prefix.size() - 1)});
    }
  }
  return pairs;
}

std::span<const std::uint32_t> truncated_history(std::span<const std::uint32_t> seq,
                                                 std::size_t end, std::size_t max_history) {
  const std::size_t n = std::min(end, seq.size());
  const std::size_t start = n > max_history ? n - max_history : 0;
  return seq.subspan(start, n - start);
}

void align_to_items(InteractionDataset& ds, const std::vector<std::string>& canonical_ids) {
  std::unordered_map<std::string, std::uint32_t> index;
  index.reserve(canonical_ids.size());
  for (std::size_t i = 0; i < canonical_ids.size(); ++i) {
    index.emplace(canonical_ids[i], static_cast<std::uint32_t>(i));
  }
  std::vector<std::uint32_t> remap(ds.item_ids.size());
  for (std::size_t i = 0; i < ds.item_ids.size(); ++i) {
    const auto it = index.find(ds.item_ids[i]);
    if (it == index.end()) {
      throw DataError("item '" + ds.item_ids[i] + "' is not in the tokenized catalog");
    }
    remap[i] = it->second;
  }
  for (auto& seq : ds.sequences) {
    for (auto& it : seq) it = remap[it];
  }
  for (auto& split : ds.splits) {
    for (auto& it : split.train_prefix) it = remap[it];
    split.valid_target = remap[split.valid_target];
    split.test_target = remap[split.test_target];
  }
  ds.item_ids = canonical_ids;
}

void write_split_manifest(const InteractionDataset& ds, std::ostream& out) {
  if (!ds.has_splits) throw std::logic_error("write_split_manifest: dataset is not split");
  for (std::size_t u = 0; u < ds.splits.size(); ++u) {
    nlohmann::json rec;
    rec["user"] = ds.user_ids[u];
    nlohmann::json train = nlohmann::json::array();
    for (std::uint32_t it : ds.splits[u].train_prefix) train.push_back(ds.item_ids[it]);
    rec["train"] = std::move(train);
    rec["valid"] = ds.item_ids[ds.splits[u].valid_target];
    rec["test"] = ds.item_ids[ds.splits[u].test_target];
    out << rec.dump() << '\n';
  }
}

}  // namespace prefixrec
