#include "prefixrec/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prefixrec/decoder.hpp"
#include "prefixrec/evaluation.hpp"
#include "prefixrec/io.hpp"
#include "prefixrec/model.hpp"
#include "prefixrec/synthetic.hpp"
#include "prefixrec/trainer.hpp"

namespace prefixrec {

namespace fs = std::filesystem;

MaterializedData materialize_data(const RunConfig& cfg) {
  cfg.validate();
  const auto& j = cfg.json();

  MaterializedData data;
  std::string interactions_text;
  if (j.at("synthetic").at("enabled").get<bool>()) {
    const SyntheticConfig synth = cfg.synthetic_config();
    data.embeddings = synth_embeddings(synth);
    std::ostringstream os;
    synth_interactions(synth, os);
    interactions_text = os.str();
  } else {
    const auto fmt = j.at("dataset").at("embeddings_format").get<std::string>();
    const auto path = j.at("dataset").at("embeddings").get<std::string>();
    if (path.empty()) throw ConfigError("dataset.embeddings: required when synthetic is disabled");
    data.embeddings = fmt == "raw" ? load_embeddings_raw(path, path + ".header.json")
                                   : load_embeddings_text(path);
  }

  data.codebooks = fit_codebooks(data.embeddings,
                                 j.at("tokenizer").at("levels").get<std::size_t>(),
                                 j.at("tokenizer").at("codebook_size").get<std::size_t>(),
                                 j.at("tokenizer").at("seed").get<std::uint64_t>(),
                                 j.at("tokenizer").at("max_iters").get<std::size_t>());
  data.catalog = tokenize(data.embeddings, data.codebooks);

  const auto min_count = j.at("dataset").at("min_count").get<std::size_t>();
  if (!interactions_text.empty()) {
    std::istringstream is(interactions_text);
    data.dataset = load_interactions(is, min_count);
  } else {
    const auto path = j.at("dataset").at("interactions").get<std::string>();
    if (path.empty()) throw ConfigError("dataset.interactions: required when synthetic is disabled");
    data.dataset = load_interactions(path, min_count);
  }
  split_leave_one_out(data.dataset);
  align_to_items(data.dataset, data.catalog.item_ids);
  data.dataset.max_history = j.at("dataset").at("max_history").get<std::size_t>();
  return data;
}

namespace {

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot digest file: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return fnv1a64(os.str());
}

}  // namespace

std::string run_experiment(const RunConfig& cfg, const std::string& run_root,
                           std::size_t workers) {
  cfg.validate();
  const std::string digest8 = hex_digest(cfg.digest()).substr(0, 8);
  fs::path dir = fs::path(run_root) / (timestamp_now() + "-" + digest8);
  // Two runs inside one second get distinct suffixes.
  for (int salt = 1; fs::exists(dir); ++salt) {
    dir = fs::path(run_root) / (timestamp_now() + "-" + digest8 + "-" + std::to_string(salt));
  }
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["config"] = cfg.json();
  manifest["config_digest"] = hex_digest(cfg.digest());
  const auto t0 = std::chrono::steady_clock::now();

  try {
    MaterializedData data = materialize_data(cfg);

    {
      std::ofstream out(dir / "catalog.tsv");
      write_catalog(data.catalog, out);
    }
    {
      std::ofstream out(dir / "split_manifest.jsonl");
      write_split_manifest(data.dataset, out);
    }
    if (cfg.json().at("synthetic").at("enabled").get<bool>()) {
      std::ofstream out(dir / "interactions.tsv");
      synth_interactions(cfg.synthetic_config(), out);
      std::ofstream eout(dir / "embeddings.tsv");
      save_embeddings_text(data.embeddings, eout);
    }

    TrainConfig train_cfg = cfg.trainer_config();
    TrainResult trained;
    {
      std::ofstream metrics(dir / "metrics.jsonl");
      trained = train(train_cfg, data.dataset, data.catalog, &metrics);
    }
    save_checkpoint((dir / "checkpoint.bin").string(), trained.params, cfg.digest());
    manifest["train"] = trained.manifest;

    const CodeTrie trie = build_trie(data.catalog);
    const auto cutoffs =
        cfg.json().at("evaluation").at("cutoffs").get<std::vector<std::size_t>>();
    MetricReport report =
        evaluate(trained.params, data.dataset, data.catalog, trie,
                 cfg.json().at("evaluation").at("beam").get<std::size_t>(), cutoffs,
                 EvalSplit::test, workers);
    report.config_digest = cfg.digest();
    {
      std::ofstream out(dir / "metrics_report.txt");
      write_metric_report(report, out);
      std::ofstream csv(dir / "per_user.csv");
      write_metric_csv(report, data.dataset.user_ids, csv);
    }

    // Retention audit over the first audit.max_histories test queries.
    {
      const auto& aj = cfg.json().at("audit");
      const std::size_t cap = aj.at("max_histories").get<std::size_t>();
      std::vector<std::vector<std::uint32_t>> histories;
      for (std::size_t u = 0; u < data.dataset.splits.size() && histories.size() < cap; ++u) {
        const auto& s = data.dataset.splits[u];
        std::vector<std::uint32_t> h(s.train_prefix.begin(), s.train_prefix.end());
        h.push_back(s.valid_target);
        const auto hist = truncated_history(h, h.size(), data.dataset.max_history);
        histories.emplace_back(hist.begin(), hist.end());
      }
      const RetentionReport retention =
          audit_retention(trained.params, histories, aj.at("k_global").get<std::size_t>(),
                          aj.at("k_beam").get<std::size_t>(), data.catalog, trie);
      std::ofstream out(dir / "retention.csv");
      write_retention_csv(retention, out);
      manifest["audit"] = {{"histories", histories.size()},
                           {"mean_retention_per_step", retention.mean_per_step}};
    }

    manifest["metrics"] = {{"recall", report.recall},
                           {"ndcg", report.ndcg},
                           {"prefix_recall", report.prefix_recall}};
    manifest["digests"] = {
        {"checkpoint", hex_digest(file_digest(dir / "checkpoint.bin"))},
        {"metrics_jsonl", hex_digest(file_digest(dir / "metrics.jsonl"))},
        {"metrics_report", hex_digest(file_digest(dir / "metrics_report.txt"))},
        {"per_user_csv", hex_digest(file_digest(dir / "per_user.csv"))},
        {"retention_csv", hex_digest(file_digest(dir / "retention.csv"))},
    };
    manifest["wall_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["workers"] = workers;

    // Written last: a manifest on disk means the run completed.
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  } catch (const std::exception& e) {
    std::ofstream marker(dir / "ERROR");
    marker << e.what() << '\n';
    throw;
  }
  return dir.string();
}

}  // namespace prefixrec
