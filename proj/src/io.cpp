#include "prefixrec/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace prefixrec {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad numeric value '" + s + "'", line_no);
  }
}

}  // namespace

EmbeddingMatrix load_embeddings_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file: " + path);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw DataError("embeddings file is empty: " + path);
  ++line_no;
  const auto header = split_ws(line);
  if (header.size() < 2 || header[0] != "item_id") {
    throw ParseError("expected header 'item_id v0 v1 ...'", line_no);
  }
  const std::size_t dim = header.size() - 1;

  EmbeddingMatrix emb;
  emb.cols = dim;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_ws(line);
    if (fields.size() != dim + 1) {
      throw ParseError("expected " + std::to_string(dim + 1) + " columns, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    emb.item_ids.push_back(fields[0]);
    for (std::size_t j = 0; j < dim; ++j) emb.values.push_back(parse_double(fields[j + 1], line_no));
  }
  emb.rows = emb.item_ids.size();
  if (emb.rows == 0) throw DataError("embeddings file has no rows: " + path);
  return emb;
}

void save_embeddings_text(const EmbeddingMatrix& emb, std::ostream& out) {
  out << "item_id";
  for (std::size_t j = 0; j < emb.cols; ++j) out << " v" << j;
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < emb.rows; ++i) {
    out << emb.item_ids[i];
    for (double x : emb.row(i)) out << ' ' << x;
    out << '\n';
  }
}

EmbeddingMatrix load_embeddings_raw(const std::string& data_path, const std::string& header_path) {
  std::ifstream hin(header_path);
  if (!hin) throw DataError("cannot open embeddings header: " + header_path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hin);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("bad embeddings header " + header_path + ": " + e.what());
  }
  const auto rows = header.at("rows").get<std::size_t>();
  const auto cols = header.at("cols").get<std::size_t>();

  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings matrix: " + data_path);
  std::vector<float> raw(rows * cols);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in || in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float))) {
    throw DataError("embeddings matrix is shorter than rows*cols floats: " + data_path);
  }

  EmbeddingMatrix emb;
  emb.rows = rows;
  emb.cols = cols;
  emb.values.assign(raw.begin(), raw.end());
  if (header.contains("item_ids")) {
    emb.item_ids = header.at("item_ids").get<std::vector<std::string>>();
    if (emb.item_ids.size() != rows) {
      throw DataError("embeddings header item_ids length does not match rows");
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) emb.item_ids.push_back(std::to_string(i));
  }
  return emb;
}

void write_catalog(const TokenizedCatalog& catalog, std::ostream& out) {
  out << "# vocab:";
  for (std::uint32_t v : catalog.level_vocab_sizes) out << ' ' << v;
  out << '\n';
  out << "# dedup: " << (catalog.dedup_level_present ? 1 : 0) << '\n';
  for (std::size_t i = 0; i < catalog.num_items; ++i) {
    out << catalog.item_ids[i] << '\t';
    const auto codes = catalog.item_codes(i);
    for (std::size_t t = 0; t < codes.size(); ++t) out << (t ? " " : "") << codes[t];
    out << '\n';
  }
}

TokenizedCatalog read_catalog(std::istream& in) {
  TokenizedCatalog cat;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto fields = split_ws(line);
      if (fields.size() >= 2 && fields[1] == "vocab:") {
        for (std::size_t i = 2; i < fields.size(); ++i) {
          cat.level_vocab_sizes.push_back(
              static_cast<std::uint32_t>(std::stoul(fields[i])));
        }
      } else if (fields.size() >= 3 && fields[1] == "dedup:") {
        cat.dedup_level_present = fields[2] == "1";
      }
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected item_id<TAB>codes", line_no);
    cat.item_ids.push_back(line.substr(0, tab));
    const auto codes = split_ws(line.substr(tab + 1));
    if (codes.empty()) throw ParseError("item has no codes", line_no);
    if (cat.code_len == 0) cat.code_len = codes.size();
    if (codes.size() != cat.code_len) {
      throw ParseError("inconsistent code sequence length", line_no);
    }
    for (const auto& c : codes) {
      cat.codes.push_back(static_cast<std::uint32_t>(std::stoul(c)));
    }
  }
  cat.num_items = cat.item_ids.size();
  if (cat.num_items == 0) throw DataError("catalog file has no items");
  if (cat.level_vocab_sizes.empty()) {
    // No header: recover vocabulary sizes from the largest code per level.
    cat.level_vocab_sizes.assign(cat.code_len, 1);
    for (std::size_t i = 0; i < cat.num_items; ++i) {
      for (std::size_t t = 0; t < cat.code_len; ++t) {
        cat.level_vocab_sizes[t] =
            std::max(cat.level_vocab_sizes[t], cat.codes[i * cat.code_len + t] + 1);
      }
    }
  }
  if (cat.level_vocab_sizes.size() != cat.code_len) {
    throw DataError("catalog vocab header does not match code length");
  }
  return cat;
}

TokenizedCatalog read_catalog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open catalog: " + path);
  return read_catalog(in);
}

std::vector<HistoryQuery> read_histories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open histories file: " + path);
  std::vector<HistoryQuery> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError("expected user_id<TAB>item ids", line_no);
    }
    HistoryQuery q;
    q.user_id = line.substr(0, tab);
    q.item_ids = split_ws(line.substr(tab + 1));
    if (q.item_ids.empty()) throw ParseError("history has no items", line_no);
    out.push_back(std::move(q));
  }
  return out;
}

void write_metric_report(const MetricReport& report, std::ostream& out) {
  out << std::setprecision(6) << std::fixed;
  out << "beam_width\t" << report.beam_width << '\n';
  for (const auto& [k, v] : report.recall) out << "recall@" << k << '\t' << v << '\n';
  for (const auto& [k, v] : report.ndcg) out << "ndcg@" << k << '\t' << v << '\n';
  for (std::size_t m = 0; m < report.prefix_recall.size(); ++m) {
    out << "prefix_recall@" << report.beam_width << "[m=" << (m + 1) << "]\t"
        << report.prefix_recall[m] << '\n';
  }
  out << "users\t" << report.per_user.size() << '\n';
  out << "config_digest\t" << hex_digest(report.config_digest) << '\n';
}

void write_metric_csv(const MetricReport& report, const std::vector<std::string>& user_ids,
                      std::ostream& out) {
  out << "user";
  for (const auto& [k, v] : report.recall) out << ",recall@" << k;
  for (const auto& [k, v] : report.ndcg) out << ",ndcg@" << k;
  for (std::size_t m = 0; m < report.prefix_recall.size(); ++m) out << ",prefix_recall_m" << (m + 1);
  out << '\n';
  out << std::setprecision(6) << std::fixed;
  for (const auto& row : report.per_user) {
    out << user_ids[row.user];
    for (const auto& [k, v] : row.recall) out << ',' << v;
    for (const auto& [k, v] : row.ndcg) out << ',' << v;
    for (int r : row.prefix_recall) out << ',' << r;
    out << '\n';
  }
}

void write_retention_csv(const RetentionReport& report, std::ostream& out) {
  out << "step,mean_retention\n";
  out << std::setprecision(6) << std::fixed;
  for (std::size_t t = 0; t < report.mean_per_step.size(); ++t) {
    out << (t + 1) << ',' << report.mean_per_step[t] << '\n';
  }
}

void write_timing_csv(const std::vector<TimingRow>& rows, std::ostream& out) {
  out << "method,k,median_us,speedup_vs_full\n";
  out << std::setprecision(3) << std::fixed;
  for (const auto& r : rows) {
    out << r.label << ',' << r.K << ',' << r.median_us << ',' << r.speedup_vs_full << '\n';
  }
}

}  // namespace prefixrec
