// Command-line front end: tokenize | split | train | evaluate | decode |
// audit | benchmark | sweep-beam | verify-theory | run.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "prefixrec/config.hpp"
#include "prefixrec/decoder.hpp"
#include "prefixrec/evaluation.hpp"
#include "prefixrec/io.hpp"
#include "prefixrec/model.hpp"
#include "prefixrec/pipeline.hpp"
#include "prefixrec/synthetic.hpp"
#include "prefixrec/theory.hpp"
#include "prefixrec/trainer.hpp"

namespace {

using namespace prefixrec;

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    for (const auto& ov : overrides) {
      const auto eq = ov.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("--set expects key.path=value, got '" + ov + "'");
      }
      cfg.set_override(ov.substr(0, eq), ov.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file (// comments allowed)");
  cmd->add_option("--set", args.overrides, "override a config field, e.g. trainer.beta=0.2");
}

std::size_t env_workers() {
  if (const char* w = std::getenv("PREFIXREC_WORKERS")) {
    const long n = std::strtol(w, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

std::string env_run_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* r = std::getenv("PREFIXREC_RUN_ROOT")) return r;
  return "runs";
}

std::vector<std::size_t> parse_k_list(const std::string& csv) {
  std::vector<std::size_t> ks;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) ks.push_back(static_cast<std::size_t>(std::stoul(tok)));
  }
  if (ks.empty()) throw ConfigError("empty k list");
  return ks;
}

std::vector<std::uint32_t> map_history(const HistoryQuery& q,
                                       const std::vector<std::string>& item_ids) {
  std::vector<std::uint32_t> out;
  for (const auto& id : q.item_ids) {
    bool found = false;
    for (std::size_t i = 0; i < item_ids.size(); ++i) {
      if (item_ids[i] == id) {
        out.push_back(static_cast<std::uint32_t>(i));
        found = true;
        break;
      }
    }
    if (!found) throw DataError("history item '" + id + "' is not in the catalog");
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> test_histories(const InteractionDataset& ds,
                                                       std::size_t cap) {
  std::vector<std::vector<std::uint32_t>> histories;
  for (std::size_t u = 0; u < ds.splits.size() && histories.size() < cap; ++u) {
    const auto& s = ds.splits[u];
    std::vector<std::uint32_t> h(s.train_prefix.begin(), s.train_prefix.end());
    h.push_back(s.valid_target);
    const auto hist = truncated_history(h, h.size(), ds.max_history);
    histories.emplace_back(hist.begin(), hist.end());
  }
  return histories;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"prefix-aware generative recommendation engine"};
  app.require_subcommand(1);

  // --- tokenize ---
  auto* tok_cmd = app.add_subcommand("tokenize", "fit codebooks and emit the code catalog");
  ConfigArgs tok_args;
  std::string tok_out = "catalog.tsv";
  add_config_options(tok_cmd, tok_args);
  tok_cmd->add_option("--output", tok_out, "catalog output path");
  tok_cmd->callback([&] {
    const RunConfig cfg = tok_args.resolve();
    MaterializedData data = materialize_data(cfg);
    std::ofstream out(tok_out);
    if (!out) throw DataError("cannot write " + tok_out);
    write_catalog(data.catalog, out);
    std::cout << "wrote " << tok_out << " (" << data.catalog.num_items << " items, T="
              << data.catalog.code_len << ")\n";
  });

  // --- split ---
  auto* split_cmd = app.add_subcommand("split", "filter, split, and write the split manifest");
  ConfigArgs split_args;
  std::string split_out = "split_manifest.jsonl";
  add_config_options(split_cmd, split_args);
  split_cmd->add_option("--output", split_out, "split manifest output path");
  split_cmd->callback([&] {
    const RunConfig cfg = split_args.resolve();
    MaterializedData data = materialize_data(cfg);
    std::ofstream out(split_out);
    if (!out) throw DataError("cannot write " + split_out);
    write_split_manifest(data.dataset, out);
    std::cout << "wrote " << split_out << " (" << data.dataset.num_users() << " users)\n";
  });

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  ConfigArgs train_args;
  std::string train_mode, train_ckpt = "checkpoint.bin", train_metrics = "metrics.jsonl";
  std::int64_t train_seed = -1;
  add_config_options(train_cmd, train_args);
  train_cmd->add_option("--mode", train_mode, "ce | pointwise | pairwise");
  train_cmd->add_option("--seed", train_seed, "training seed override");
  train_cmd->add_option("--checkpoint", train_ckpt, "checkpoint output path");
  train_cmd->add_option("--metrics", train_metrics, "metrics stream output path");
  train_cmd->callback([&] {
    RunConfig cfg = train_args.resolve();
    if (!train_mode.empty()) cfg.set_override("trainer.mode", train_mode);
    if (train_seed >= 0) cfg.set_override("trainer.seed", std::to_string(train_seed));
    cfg.validate();
    MaterializedData data = materialize_data(cfg);
    std::ofstream metrics(train_metrics);
    TrainResult result = train(cfg.trainer_config(), data.dataset, data.catalog, &metrics);
    save_checkpoint(train_ckpt, result.params, cfg.digest());
    std::ofstream manifest(train_ckpt + ".manifest.json");
    result.manifest["config_digest"] = hex_digest(cfg.digest());
    manifest << result.manifest.dump(2) << '\n';
    std::cout << "wrote " << train_ckpt << '\n';
  });

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand("evaluate", "metrics over the test split");
  ConfigArgs eval_args;
  std::string eval_ckpt, eval_cutoffs = "10,20", eval_report = "metrics_report.txt",
              eval_csv = "per_user.csv";
  std::size_t eval_k = 20;
  add_config_options(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval_cmd->add_option("--k", eval_k, "beam width");
  eval_cmd->add_option("--cutoffs", eval_cutoffs, "metric cutoffs, comma-separated");
  eval_cmd->add_option("--report", eval_report, "report output path");
  eval_cmd->add_option("--per-user", eval_csv, "per-user CSV output path");
  eval_cmd->callback([&] {
    const RunConfig cfg = eval_args.resolve();
    MaterializedData data = materialize_data(cfg);
    const ModelParams params = load_checkpoint(eval_ckpt);
    const CodeTrie trie = build_trie(data.catalog);
    MetricReport report = evaluate(params, data.dataset, data.catalog, trie, eval_k,
                                   parse_k_list(eval_cutoffs), EvalSplit::test, env_workers());
    report.config_digest = cfg.digest();
    std::ofstream rout(eval_report);
    write_metric_report(report, rout);
    std::ofstream cout_csv(eval_csv);
    write_metric_csv(report, data.dataset.user_ids, cout_csv);
    write_metric_report(report, std::cout);
  });

  // --- decode ---
  auto* dec_cmd = app.add_subcommand("decode", "beam-decode histories from a file");
  ConfigArgs dec_args;
  std::string dec_ckpt, dec_input;
  std::size_t dec_k = 20;
  add_config_options(dec_cmd, dec_args);
  dec_cmd->add_option("--checkpoint", dec_ckpt, "trained checkpoint")->required();
  dec_cmd->add_option("--k", dec_k, "beam width");
  dec_cmd->add_option("--input", dec_input, "histories file (user_id<TAB>item ids)")->required();
  dec_cmd->callback([&] {
    const RunConfig cfg = dec_args.resolve();
    MaterializedData data = materialize_data(cfg);
    const ModelParams params = load_checkpoint(dec_ckpt);
    const CodeTrie trie = build_trie(data.catalog);
    for (const auto& q : read_histories(dec_input)) {
      const auto history = map_history(q, data.catalog.item_ids);
      const auto result = beam_search(params, history, dec_k, trie);
      for (std::size_t r = 0; r < result.items.size(); ++r) {
        std::cout << q.user_id << '\t' << (r + 1) << '\t'
                  << data.catalog.item_ids[result.items[r].item] << '\t'
                  << result.items[r].score << '\n';
      }
    }
  });

  // --- audit ---
  auto* audit_cmd = app.add_subcommand("audit", "retention of global top items under the beam");
  ConfigArgs audit_args;
  std::string audit_ckpt, audit_out = "retention.csv";
  std::size_t audit_kg = 20, audit_kb = 20, audit_cap = 200;
  add_config_options(audit_cmd, audit_args);
  audit_cmd->add_option("--checkpoint", audit_ckpt, "trained checkpoint")->required();
  audit_cmd->add_option("--k-global", audit_kg, "full-sort top-K set size");
  audit_cmd->add_option("--k-beam", audit_kb, "beam width");
  audit_cmd->add_option("--max-histories", audit_cap, "number of test histories to audit");
  audit_cmd->add_option("--output", audit_out, "retention CSV path");
  audit_cmd->callback([&] {
    const RunConfig cfg = audit_args.resolve();
    MaterializedData data = materialize_data(cfg);
    const ModelParams params = load_checkpoint(audit_ckpt);
    const CodeTrie trie = build_trie(data.catalog);
    const auto histories = test_histories(data.dataset, audit_cap);
    const RetentionReport report =
        audit_retention(params, histories, audit_kg, audit_kb, data.catalog, trie);
    std::ofstream out(audit_out);
    write_retention_csv(report, out);
    write_retention_csv(report, std::cout);
  });

  // --- benchmark ---
  auto* bench_cmd = app.add_subcommand("benchmark", "beam vs full-sort decode latency");
  ConfigArgs bench_args;
  std::string bench_klist = "20";
  std::size_t bench_items = 10000, bench_queries = 50;
  std::string bench_out = "timing.csv";
  add_config_options(bench_cmd, bench_args);
  bench_cmd->add_option("--items", bench_items, "synthetic catalog size");
  bench_cmd->add_option("--k-list", bench_klist, "beam widths, comma-separated");
  bench_cmd->add_option("--queries", bench_queries, "number of timed queries");
  bench_cmd->add_option("--output", bench_out, "timing CSV path");
  bench_cmd->callback([&] {
    RunConfig cfg = bench_args.resolve();
    cfg.set_override("synthetic.num_items", std::to_string(bench_items));
    cfg.set_override("tokenizer.codebook_size", "32");
    // Timing needs only a catalog and query histories, not a filtered
    // interaction dataset.
    SyntheticConfig scfg = cfg.synthetic_config();
    scfg.clusters = std::min<std::size_t>(scfg.num_items, 64);
    const EmbeddingMatrix emb = synth_embeddings(scfg);
    const auto& tj = cfg.json().at("tokenizer");
    const Codebooks cb =
        fit_codebooks(emb, tj.at("levels").get<std::size_t>(),
                      tj.at("codebook_size").get<std::size_t>(),
                      tj.at("seed").get<std::uint64_t>(), tj.at("max_iters").get<std::size_t>());
    const TokenizedCatalog catalog = tokenize(emb, cb);
    const ModelParams params =
        init_params(catalog, cfg.json().at("model").at("hidden").get<std::size_t>(),
                    cfg.trainer_config().seed);
    const CodeTrie trie = build_trie(catalog);
    Rng rng(scfg.seed + 1);
    std::vector<std::vector<std::uint32_t>> histories(std::max<std::size_t>(bench_queries, 1));
    for (auto& h : histories) {
      h.resize(5);
      for (auto& x : h) x = static_cast<std::uint32_t>(uniform_index(rng, catalog.num_items));
    }
    const auto rows = benchmark_decode(params, histories, parse_k_list(bench_klist),
                                       catalog, trie);
    std::ofstream out(bench_out);
    write_timing_csv(rows, out);
    write_timing_csv(rows, std::cout);
  });

  // --- sweep-beam ---
  auto* sweep_cmd = app.add_subcommand("sweep-beam", "metrics across beam widths");
  ConfigArgs sweep_args;
  std::string sweep_ckpt, sweep_klist = "5,10,20,50,100", sweep_out = "beam_sweep.csv";
  add_config_options(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--checkpoint", sweep_ckpt, "trained checkpoint")->required();
  sweep_cmd->add_option("--k-list", sweep_klist, "beam widths, comma-separated");
  sweep_cmd->add_option("--output", sweep_out, "sweep CSV path");
  sweep_cmd->callback([&] {
    const RunConfig cfg = sweep_args.resolve();
    MaterializedData data = materialize_data(cfg);
    const ModelParams params = load_checkpoint(sweep_ckpt);
    const CodeTrie trie = build_trie(data.catalog);
    std::ofstream out(sweep_out);
    out << "k,recall@10,recall@20,ndcg@10,ndcg@20,wall_s\n";
    std::cout << "k,recall@10,recall@20,ndcg@10,ndcg@20,wall_s\n";
    for (std::size_t k : parse_k_list(sweep_klist)) {
      const std::size_t cutoffs[] = {10, 20};
      const auto t0 = std::chrono::steady_clock::now();
      const MetricReport r = evaluate(params, data.dataset, data.catalog, trie, k, cutoffs,
                                      EvalSplit::test, env_workers());
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream row;
      row << k << ',' << r.recall.at(10) << ',' << r.recall.at(20) << ',' << r.ndcg.at(10)
          << ',' << r.ndcg.at(20) << ',' << wall << '\n';
      out << row.str();
      std::cout << row.str();
    }
  });

  // --- verify-theory ---
  auto* verify_cmd = app.add_subcommand("verify-theory", "run the theory verification suites");
  std::size_t verify_trials = 10000;
  std::uint64_t verify_seed = 7;
  verify_cmd->add_option("--trials", verify_trials, "trials per suite");
  verify_cmd->add_option("--seed", verify_seed, "RNG seed");
  verify_cmd->callback([&] {
    const TheoryReport lb = verify_lower_bound(verify_trials, verify_seed);
    std::cout << "lower-bound chain: " << lb.trials << " trials, " << lb.violations
              << " violations" << (lb.passed() ? " [ok]" : " [FAILED]") << '\n';
    if (!lb.passed()) std::cout << "  first witness: " << lb.first_witness << '\n';
    const TheoryReport wp = verify_weight_program(verify_trials, verify_seed + 1);
    std::cout << "weight program:    " << wp.trials << " trials, " << wp.violations
              << " violations" << (wp.passed() ? " [ok]" : " [FAILED]") << '\n';
    if (!wp.passed()) std::cout << "  first witness: " << wp.first_witness << '\n';
    if (!lb.passed() || !wp.passed()) throw TrainingError("theory verification failed");
  });

  // --- run ---
  auto* run_cmd = app.add_subcommand("run", "full pipeline into a run directory");
  ConfigArgs run_args;
  std::string run_root;
  add_config_options(run_cmd, run_args);
  run_cmd->add_option("--run-root", run_root, "run directory root (env PREFIXREC_RUN_ROOT)");
  run_cmd->callback([&] {
    const RunConfig cfg = run_args.resolve();
    const std::string dir = run_experiment(cfg, env_run_root(run_root), env_workers());
    std::cout << "run complete: " << dir << '\n';
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
