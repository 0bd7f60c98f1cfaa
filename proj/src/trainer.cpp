#include "prefixrec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "prefixrec/decoder.hpp"
#include "prefixrec/evaluation.hpp"
#include "prefixrec/losses.hpp"

namespace prefixrec {

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::ce: return "ce";
    case TrainMode::pointwise: return "pointwise";
    case TrainMode::pairwise: return "pairwise";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "ce") return TrainMode::ce;
  if (s == "pointwise") return TrainMode::pointwise;
  if (s == "pairwise") return TrainMode::pairwise;
  throw ConfigError("trainer.mode: unknown mode '" + s + "' (ce | pointwise | pairwise)");
}

void TrainConfig::validate() const {
  if (beta < 0.0) throw ConfigError("trainer.beta: must be >= 0");
  if (eta < 0.0) throw ConfigError("trainer.eta: must be >= 0");
  if (mode == TrainMode::pairwise && negatives < 1) {
    throw ConfigError("trainer.negatives: must be >= 1 in pairwise mode");
  }
  if (patience < 1) throw ConfigError("trainer.patience: must be >= 1");
  if (epochs < 1) throw ConfigError("trainer.epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("trainer.batch_size: must be >= 1");
  if (hidden < 1) throw ConfigError("trainer.hidden: must be >= 1");
  if (lr <= 0.0) throw ConfigError("trainer.lr: must be > 0");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
    throw ConfigError("trainer.warmup_fraction: must be in [0, 1]");
  }
  if (eval_beam < 1) throw ConfigError("trainer.eval_beam: must be >= 1");
  if (stage == TrainStage::two_stage && mode == TrainMode::ce) {
    throw ConfigError("trainer.stage: two_stage requires a pointwise or pairwise mode");
  }
}

OptimizerState make_optimizer_state(const ModelParams& params) {
  OptimizerState st;
  st.m = make_gradients(params);
  st.v = make_gradients(params);
  return st;
}

double scheduled_lr(const TrainConfig& cfg, std::uint64_t step_index, std::uint64_t total_steps) {
  const double total = static_cast<double>(std::max<std::uint64_t>(total_steps, 1));
  const std::uint64_t warmup_steps =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(cfg.warmup_fraction * total)));
  const double ramp = static_cast<double>(step_index) / static_cast<double>(warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step_index) / total);
  const double cosine = 0.5 * (1.0 + std::cos(M_PI * progress));
  return cfg.lr * std::min(ramp, cosine);
}

void optimizer_step(ModelParams& params, const Gradients& grads, OptimizerState& state,
                    std::uint64_t step_index, const TrainConfig& cfg,
                    std::uint64_t total_steps) {
  const double lr_t = scheduled_lr(cfg, step_index, total_steps);
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  state.step = step_index;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_index));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_index));

  std::vector<Tensor*> pt;
  params.for_each_tensor([&](Tensor& t) { pt.push_back(&t); });
  std::vector<const Tensor*> gt;
  grads.for_each_tensor([&](const Tensor& t) { gt.push_back(&t); });
  std::vector<Tensor*> mt, vt;
  state.m.for_each_tensor([&](Tensor& t) { mt.push_back(&t); });
  state.v.for_each_tensor([&](Tensor& t) { vt.push_back(&t); });

  for (std::size_t i = 0; i < pt.size(); ++i) {
    auto& p = pt[i]->data;
    const auto& g = gt[i]->data;
    auto& m = mt[i]->data;
    auto& v = vt[i]->data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / corr1;
      const double vhat = v[j] / corr2;
      p[j] -= lr_t * (mhat / (std::sqrt(vhat) + cfg.adam_eps));
      p[j] -= lr_t * cfg.weight_decay * p[j];
    }
  }
}

namespace {

// Fisher-Yates with the project RNG; std::shuffle is implementation-defined.
template <typename T>
void deterministic_shuffle(std::vector<T>& xs, Rng& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(xs[i - 1], xs[j]);
  }
}

struct StagePlan {
  std::string name;
  TrainMode mode;
  bool include_ce;
  std::uint64_t rng_salt;
};

// One epoch-loop stage. Mutates `params` in place and returns the stage
// manifest. The positive traces of a batch are retained so the backward pass
// can run after the weight update; pairwise negatives are recomputed instead
// of retained to bound memory.
nlohmann::json run_stage(ModelParams& params, const TrainConfig& cfg, const StagePlan& plan,
                         const InteractionDataset& ds, const TokenizedCatalog& catalog,
                         const CodeTrie& trie, std::ostream* metrics) {
  const std::size_t T = catalog.code_len;
  const std::size_t corpus = catalog.num_items;

  std::vector<TrainPair> pairs = make_train_pairs(ds, cfg.train_pairs_all);
  if (pairs.empty()) {
    throw DataError("no training pairs: every training region has fewer than two items");
  }

  const std::uint64_t batches_per_epoch =
      (pairs.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total_steps = batches_per_epoch * cfg.epochs;

  Rng rng(cfg.seed + plan.rng_salt);
  PrefixWeights weights = uniform_weights(T, cfg.eta);
  OptimizerState opt = make_optimizer_state(params);
  Gradients grads = make_gradients(params);

  ModelParams best_params = params;
  double best_metric = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  nlohmann::json stage_log;
  stage_log["name"] = plan.name;
  stage_log["mode"] = to_string(plan.mode);
  stage_log["include_ce"] = plan.include_ce;
  stage_log["train_pairs"] = pairs.size();
  stage_log["batches_per_epoch"] = batches_per_epoch;
  stage_log["epochs"] = nlohmann::json::array();

  std::uint64_t step_index = 0;
  std::vector<ForwardTrace> traces;
  std::vector<std::vector<std::uint32_t>> neg_ids;       // per example
  std::vector<std::vector<double>> neg_scores;           // per example: N*T cumulative scores
  std::vector<std::vector<double>> pos_cumulative;       // per example: T cumulative scores
  const std::size_t kEvalCutoff = 10;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    deterministic_shuffle(pairs, rng);
    double epoch_loss = 0.0;
    std::uint64_t epoch_batches = 0;

    for (std::size_t begin = 0; begin < pairs.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, pairs.size());
      const std::size_t B = end - begin;
      ++step_index;

      traces.clear();
      neg_ids.clear();
      neg_scores.clear();
      pos_cumulative.clear();

      double ce_sum = 0.0;
      std::vector<double> prefix_sum(T, 0.0);

      for (std::size_t i = begin; i < end; ++i) {
        const TrainPair& ex = pairs[i];
        const auto& region = ds.splits[ex.user].train_prefix;
        const auto history = truncated_history(region, ex.target_pos, cfg.max_history);
        const std::uint32_t target = region[ex.target_pos];

        ForwardTrace trace = forward(params, history, catalog.item_codes(target));
        const PrefixScores ps = prefix_scores(trace);
        ce_sum -= ps.S[T - 1] / static_cast<double>(T);

        if (plan.mode == TrainMode::pointwise) {
          for (std::size_t m = 1; m <= T; ++m) {
            prefix_sum[m - 1] -= ps.S[m - 1] / static_cast<double>(m);
          }
        } else if (plan.mode == TrainMode::pairwise) {
          auto negs = sample_negatives(target, cfg.negatives, corpus, rng);
          std::vector<double> ns(cfg.negatives * T);
          for (std::size_t j = 0; j < negs.size(); ++j) {
            // Forward pass only; the trace is recomputed in the backward
            // sweep once the prefix weights are known.
            const ForwardTrace nt = forward(params, history, catalog.item_codes(negs[j]));
            const PrefixScores nps = prefix_scores(nt);
            for (std::size_t m = 0; m < T; ++m) ns[j * T + m] = nps.S[m];
          }
          for (std::size_t m = 1; m <= T; ++m) {
            std::vector<double> col(negs.size());
            for (std::size_t j = 0; j < negs.size(); ++j) col[j] = ns[j * T + (m - 1)];
            prefix_sum[m - 1] += pairwise_value_from_scores(ps.S[m - 1], col);
          }
          neg_ids.push_back(std::move(negs));
          neg_scores.push_back(std::move(ns));
          pos_cumulative.push_back(ps.S);
        }
        traces.push_back(std::move(trace));
      }

      const double loss_ce = ce_sum / static_cast<double>(B);
      std::vector<double> loss_prefix(T, 0.0);
      for (std::size_t m = 0; m < T; ++m) loss_prefix[m] = prefix_sum[m] / static_cast<double>(B);

      if (plan.mode != TrainMode::ce) {
        weights = update_weights(weights, loss_prefix);
      }

      double total = plan.include_ce ? loss_ce : 0.0;
      if (plan.mode != TrainMode::ce) {
        for (std::size_t m = 0; m < T; ++m) total += cfg.beta * weights.w[m] * loss_prefix[m];
      }
      if (!std::isfinite(total)) {
        std::ostringstream diag;
        diag << "non-finite loss at step " << step_index << " (lr "
             << scheduled_lr(cfg, step_index, total_steps) << ", w = [";
        for (std::size_t m = 0; m < T; ++m) diag << (m ? ", " : "") << weights.w[m];
        diag << "])";
        throw TrainingError(diag.str());
      }

      grads.zero();
      if (plan.mode != TrainMode::pairwise) {
        // One backward per example with per-step coefficients
        //   c_t = [include_ce]/T + beta * sum_{m >= t} w_m / m,
        // identical machinery for ce and pointwise modes.
        std::vector<double> coeff(T, 0.0);
        double tail = 0.0;
        for (std::size_t t = T; t >= 1; --t) {
          if (plan.mode == TrainMode::pointwise) {
            tail += cfg.beta * weights.w[t - 1] / static_cast<double>(t);
          }
          coeff[t - 1] = (plan.include_ce ? 1.0 / static_cast<double>(T) : 0.0) + tail;
        }
        LogitGrads dl(T);
        for (const ForwardTrace& trace : traces) {
          for (std::size_t t = 0; t < T; ++t) {
            const auto& lp = trace.log_probs[t];
            auto& g = dl[t];
            g.assign(lp.size(), 0.0);
            for (std::size_t v = 0; v < lp.size(); ++v) g[v] = coeff[t] * std::exp(lp[v]);
            g[trace.codes[t]] -= coeff[t];
          }
          backward(params, trace, dl, grads);
        }
      } else {
        LogitGrads dl(T);
        for (std::size_t i = 0; i < traces.size(); ++i) {
          const ForwardTrace& trace = traces[i];
          const auto& ns = neg_scores[i];
          const auto& pos_S = pos_cumulative[i];
          const std::size_t N = neg_ids[i].size();

          // Per-m logistic terms shared by the positive and negative grads.
          std::vector<double> sig(T), phi(T);
          std::vector<double> neg_weight(N * T);  // softmax over negatives at depth m
          for (std::size_t m = 0; m < T; ++m) {
            std::vector<double> diffs(N);
            for (std::size_t j = 0; j < N; ++j) diffs[j] = ns[j * T + m] - pos_S[m];
            phi[m] = log_sum_exp(diffs);
            sig[m] = sigmoid(phi[m]);
            for (std::size_t j = 0; j < N; ++j) {
              neg_weight[j * T + m] = std::exp(diffs[j] - phi[m]);
            }
          }

          std::vector<double> coeff(T, 0.0);
          double tail = 0.0;
          for (std::size_t t = T; t >= 1; --t) {
            tail += cfg.beta * weights.w[t - 1] * sig[t - 1];
            coeff[t - 1] = (plan.include_ce ? 1.0 / static_cast<double>(T) : 0.0) + tail;
          }
          for (std::size_t t = 0; t < T; ++t) {
            const auto& lp = trace.log_probs[t];
            auto& g = dl[t];
            g.assign(lp.size(), 0.0);
            for (std::size_t v = 0; v < lp.size(); ++v) g[v] = coeff[t] * std::exp(lp[v]);
            g[trace.codes[t]] -= coeff[t];
          }
          backward(params, trace, dl, grads);

          const auto& region = ds.splits[pairs[begin + i].user].train_prefix;
          const auto history =
              truncated_history(region, pairs[begin + i].target_pos, cfg.max_history);
          for (std::size_t j = 0; j < N; ++j) {
            const ForwardTrace nt = forward(params, history, catalog.item_codes(neg_ids[i][j]));
            double ntail = 0.0;
            for (std::size_t t = T; t >= 1; --t) {
              ntail -= cfg.beta * weights.w[t - 1] * sig[t - 1] * neg_weight[j * T + (t - 1)];
              const double c = ntail;
              const auto& lp = nt.log_probs[t - 1];
              auto& g = dl[t - 1];
              g.assign(lp.size(), 0.0);
              for (std::size_t v = 0; v < lp.size(); ++v) g[v] = c * std::exp(lp[v]);
              g[nt.codes[t - 1]] -= c;
            }
            backward(params, nt, dl, grads);
          }
        }
      }
      grads.scale(1.0 / static_cast<double>(B));

      if (metrics) {
        nlohmann::json rec;
        rec["kind"] = "step";
        rec["stage"] = plan.name;
        rec["step"] = step_index;
        rec["epoch"] = epoch;
        rec["lr"] = scheduled_lr(cfg, step_index, total_steps);
        rec["loss_ce"] = loss_ce;
        rec["loss_total"] = total;
        if (plan.mode != TrainMode::ce) {
          rec["loss_prefix"] = loss_prefix;
          rec["w"] = weights.w;
          rec["beta"] = cfg.beta;
          rec["hard_max"] = hard_max_loss(loss_prefix);
        }
        (*metrics) << rec.dump() << '\n';
      }

      optimizer_step(params, grads, opt, step_index, cfg, total_steps);
      epoch_loss += total;
      ++epoch_batches;
    }

    const std::size_t cutoffs[] = {kEvalCutoff};
    const MetricReport valid =
        evaluate(params, ds, catalog, trie, cfg.eval_beam, cutoffs, EvalSplit::valid);
    const double metric = valid.ndcg.at(kEvalCutoff);
    const double wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                        epoch_start)
                              .count();

    nlohmann::json erec;
    erec["epoch"] = epoch;
    erec["mean_total_loss"] = epoch_loss / static_cast<double>(epoch_batches);
    erec["valid_ndcg10"] = metric;
    if (metrics) {
      // The stream stays free of wall-clock values so identical runs produce
      // byte-identical streams; timing lives in the manifest.
      erec["kind"] = "epoch";
      erec["stage"] = plan.name;
      (*metrics) << erec.dump() << '\n';
      erec.erase("kind");
      erec.erase("stage");
    }
    erec["wall_s"] = wall_s;
    stage_log["epochs"].push_back(erec);

    if (metric > best_metric) {
      best_metric = metric;
      best_params = params;
      best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) break;
    }
  }

  params = best_params;
  stage_log["best_epoch"] = best_epoch;
  stage_log["best_valid_ndcg10"] = best_metric;
  stage_log["steps"] = step_index;
  return stage_log;
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["mode"] = to_string(cfg.mode);
  j["stage"] = cfg.stage == TrainStage::one_stage ? "one_stage" : "two_stage";
  j["beta"] = cfg.beta;
  j["eta"] = cfg.eta;
  j["negatives"] = cfg.negatives;
  j["lr"] = cfg.lr;
  j["warmup_fraction"] = cfg.warmup_fraction;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["patience"] = cfg.patience;
  j["batch_size"] = cfg.batch_size;
  j["grad_accum"] = cfg.grad_accum;
  j["seed"] = cfg.seed;
  j["hidden"] = cfg.hidden;
  j["max_history"] = cfg.max_history;
  j["train_pairs"] = cfg.train_pairs_all ? "all" : "last";
  j["eval_beam"] = cfg.eval_beam;
  return j;
}

void check_alignment(const InteractionDataset& ds, const TokenizedCatalog& catalog) {
  if (ds.item_ids != catalog.item_ids) {
    throw std::logic_error("train: dataset is not aligned to the catalog (call align_to_items)");
  }
  if (!ds.has_splits) throw std::logic_error("train: dataset is not split");
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const InteractionDataset& ds,
                  const TokenizedCatalog& catalog, std::ostream* metrics_stream) {
  cfg.validate();
  check_alignment(ds, catalog);
  if (cfg.stage == TrainStage::two_stage) {
    return train_two_stage(cfg, ds, catalog, metrics_stream);
  }

  const CodeTrie trie = build_trie(catalog);
  TrainResult result;
  result.params = init_params(catalog, cfg.hidden, cfg.seed);

  StagePlan plan{"single", cfg.mode, /*include_ce=*/true, /*rng_salt=*/0};
  nlohmann::json stage = run_stage(result.params, cfg, plan, ds, catalog, trie, metrics_stream);

  result.manifest["trainer"] = config_to_json(cfg);
  result.manifest["stages"] = nlohmann::json::array({stage});
  return result;
}

TrainResult train_two_stage(const TrainConfig& cfg, const InteractionDataset& ds,
                            const TokenizedCatalog& catalog, std::ostream* metrics_stream) {
  TrainConfig working = cfg;
  working.stage = TrainStage::two_stage;
  working.validate();
  check_alignment(ds, catalog);

  const CodeTrie trie = build_trie(catalog);
  TrainResult result;
  result.params = init_params(catalog, cfg.hidden, cfg.seed);

  StagePlan stage1{"stage1_ce", TrainMode::ce, /*include_ce=*/true, /*rng_salt=*/0};
  nlohmann::json log1 = run_stage(result.params, cfg, stage1, ds, catalog, trie, metrics_stream);

  StagePlan stage2{"stage2_prefix", cfg.mode, /*include_ce=*/false, /*rng_salt=*/1};
  nlohmann::json log2 = run_stage(result.params, cfg, stage2, ds, catalog, trie, metrics_stream);

  result.manifest["trainer"] = config_to_json(cfg);
  result.manifest["stages"] = nlohmann::json::array({log1, log2});
  return result;
}

}  // namespace prefixrec
