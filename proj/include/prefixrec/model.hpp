#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prefixrec/common.hpp"
#include "prefixrec/tokenizer.hpp"

namespace prefixrec {

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    data.assign(total, 0.0);
  }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }
};

// Autoregressive next-token scorer: mean-pooled history plus the summed
// embeddings of the ground-truth prefix feed a per-step projection, tanh,
// and a per-level output head. All gradients are derived analytically.
struct ModelParams {
  std::size_t d = 0;
  std::size_t num_items = 0;
  std::vector<std::uint32_t> vocab;       // per-level vocabulary sizes (T entries)
  Tensor item_embed;                      // num_items x d
  std::vector<Tensor> token_embed;        // T entries, vocab[t] x d (last unused as input)
  std::vector<Tensor> step_proj;          // T entries, d x d
  std::vector<Tensor> output_proj;        // T entries, d x vocab[t]
  std::vector<Tensor> bias;               // T entries, vocab[t]

  std::size_t seq_len() const { return vocab.size(); }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(item_embed);
    for (auto& t : token_embed) fn(t);
    for (auto& t : step_proj) fn(t);
    for (auto& t : output_proj) fn(t);
    for (auto& t : bias) fn(t);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn(item_embed);
    for (const auto& t : token_embed) fn(t);
    for (const auto& t : step_proj) fn(t);
    for (const auto& t : output_proj) fn(t);
    for (const auto& t : bias) fn(t);
  }
};

// Accumulated dL/dtheta, same geometry as the ModelParams it was built from.
struct Gradients {
  Tensor item_embed;
  std::vector<Tensor> token_embed, step_proj, output_proj, bias;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(item_embed);
    for (auto& t : token_embed) fn(t);
    for (auto& t : step_proj) fn(t);
    for (auto& t : output_proj) fn(t);
    for (auto& t : bias) fn(t);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn(item_embed);
    for (const auto& t : token_embed) fn(t);
    for (const auto& t : step_proj) fn(t);
    for (const auto& t : output_proj) fn(t);
    for (const auto& t : bias) fn(t);
  }
  void zero() {
    for_each_tensor([](Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
  }
  void scale(double a) {
    for_each_tensor([a](Tensor& t) {
      for (double& x : t.data) x *= a;
    });
  }
  // this += a * other
  void axpy(double a, const Gradients& other);
};

Gradients make_gradients(const ModelParams& params);

// Everything forward() computed, kept so backward() can replay the chain
// rule exactly. Logits are teacher-forced: step t sees only the history and
// codes at positions < t.
struct ForwardTrace {
  std::vector<std::uint32_t> history;
  std::vector<std::uint32_t> codes;
  std::vector<double> pooled;                 // d
  std::vector<std::vector<double>> pre;       // T x d, input to step_proj
  std::vector<std::vector<double>> hidden;    // T x d
  std::vector<std::vector<double>> logits;    // T x vocab[t]
  std::vector<std::vector<double>> log_probs; // T x vocab[t], log-softmax rows

  std::size_t seq_len() const { return logits.size(); }
};

// Per-step gradient of some loss with respect to the logits; an empty inner
// vector means zero for that step.
using LogitGrads = std::vector<std::vector<double>>;

ModelParams init_params(const TokenizedCatalog& catalog, std::size_t d, std::uint64_t seed);

ForwardTrace forward(const ModelParams& params, std::span<const std::uint32_t> history,
                     std::span<const std::uint32_t> codes);

// Accumulates exact dL/dtheta into `grads` for any loss expressed through
// dlogits. Linear in dlogits.
void backward(const ModelParams& params, const ForwardTrace& trace, const LogitGrads& dlogits,
              Gradients& grads);

// Decoding-side primitives: pooled history once, then per-(prefix, level)
// logits without a full trace.
std::vector<double> pool_history(const ModelParams& params, std::span<const std::uint32_t> history);
std::vector<double> step_logits(const ModelParams& params, std::span<const double> pooled,
                                std::span<const std::uint32_t> prefix, std::size_t level);
std::vector<double> log_softmax(std::span<const double> logits);

// Versioned binary checkpoint: magic, format version, config digest, then
// each tensor as (name, shape, little-endian float64 payload). Round-trips
// bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t config_digest);
ModelParams load_checkpoint(const std::string& path, std::uint64_t* config_digest = nullptr);

bool params_equal(const ModelParams& a, const ModelParams& b);

}  // namespace prefixrec
