#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "prefixrec/adaptive_weights.hpp"
#include "prefixrec/dataset.hpp"
#include "prefixrec/model.hpp"
#include "prefixrec/tokenizer.hpp"

namespace prefixrec {

enum class TrainMode { ce, pointwise, pairwise };
enum class TrainStage { one_stage, two_stage };

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::ce;
  TrainStage stage = TrainStage::one_stage;
  double beta = 0.1;
  double eta = 1e-4;
  std::size_t negatives = 100;
  double lr = 5e-4;
  double warmup_fraction = 0.01;
  double weight_decay = 0.0;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  std::size_t batch_size = 1024;
  std::size_t grad_accum = 8;
  std::uint64_t seed = 1;
  std::size_t hidden = 32;
  std::size_t max_history = 20;
  bool train_pairs_all = true;  // every (prefix -> next) pair vs. final pair only
  std::size_t eval_beam = 20;   // beam width for the early-stopping metric
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;  // throws ConfigError naming the offending field
};

// AdamW moments; one slot per parameter tensor, geometry-matched to the model.
struct OptimizerState {
  Gradients m, v;
  std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const ModelParams& params);

// Warmup-then-cosine learning rate for 1-based step indices.
double scheduled_lr(const TrainConfig& cfg, std::uint64_t step_index, std::uint64_t total_steps);

// Adaptive-moment update with decoupled weight decay.
void optimizer_step(ModelParams& params, const Gradients& grads, OptimizerState& state,
                    std::uint64_t step_index, const TrainConfig& cfg,
                    std::uint64_t total_steps);

struct TrainResult {
  ModelParams params;
  nlohmann::json manifest;
};

// Runs the epoch loop: per batch, forward the positives (and negatives when
// pairwise), form the per-prefix losses, update the prefix weights, combine
// the total objective, backpropagate exact gradients, and step the
// optimizer. Early-stops on validation NDCG@10 under beam search.
// Deterministic for a fixed (config, dataset, catalog).
// The dataset must already be aligned to the catalog's item index space.
TrainResult train(const TrainConfig& cfg, const InteractionDataset& ds,
                  const TokenizedCatalog& catalog, std::ostream* metrics_stream = nullptr);

// Stage 1 trains with the CE objective to early stop; stage 2 resumes from
// that checkpoint optimizing only the weighted prefix loss.
TrainResult train_two_stage(const TrainConfig& cfg, const InteractionDataset& ds,
                            const TokenizedCatalog& catalog,
                            std::ostream* metrics_stream = nullptr);

}  // namespace prefixrec
