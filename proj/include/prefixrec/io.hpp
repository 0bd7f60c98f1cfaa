#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "prefixrec/decoder.hpp"
#include "prefixrec/evaluation.hpp"
#include "prefixrec/tokenizer.hpp"

namespace prefixrec {

// Headered numeric text table: first line `item_id v0 v1 ... v{d-1}`, one
// row per item.
EmbeddingMatrix load_embeddings_text(const std::string& path);
void save_embeddings_text(const EmbeddingMatrix& emb, std::ostream& out);

// Raw little-endian float32 matrix plus a JSON header recording rows/cols
// (and optionally item_ids).
EmbeddingMatrix load_embeddings_raw(const std::string& data_path, const std::string& header_path);

// `item_id<TAB>c1 c2 ... cT`; vocabulary sizes and the disambiguation flag
// ride in `#` header lines so the file round-trips.
void write_catalog(const TokenizedCatalog& catalog, std::ostream& out);
TokenizedCatalog read_catalog(std::istream& in);
TokenizedCatalog read_catalog_file(const std::string& path);

// Decode-input histories: `user_id<TAB>item_id item_id ...`.
struct HistoryQuery {
  std::string user_id;
  std::vector<std::string> item_ids;
};
std::vector<HistoryQuery> read_histories(const std::string& path);

void write_metric_report(const MetricReport& report, std::ostream& out);
void write_metric_csv(const MetricReport& report, const std::vector<std::string>& user_ids,
                      std::ostream& out);
void write_retention_csv(const RetentionReport& report, std::ostream& out);
void write_timing_csv(const std::vector<TimingRow>& rows, std::ostream& out);

}  // namespace prefixrec
