#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prefixrec/common.hpp"

namespace prefixrec {

// A point on the interior of the T-dimensional probability simplex, updated
// multiplicatively from per-prefix losses. tau counts applied updates.
struct PrefixWeights {
  std::vector<double> w;
  double eta = 0.0;
  std::uint64_t tau = 0;
};

PrefixWeights uniform_weights(std::size_t T, double eta);

// Multiplicative update w'_m = w_m * exp(eta * L_m) / Z, computed with
// max-subtraction in the log domain. Losses enter as constants; no gradient
// flows through them.
PrefixWeights update_weights(const PrefixWeights& weights, std::span<const double> losses);

// Worst-case (hard-max) prefix loss, reported alongside the soft-weighted one.
double hard_max_loss(std::span<const double> losses);

// Objective of the KL-regularized weight program:
//   F(w) = sum_m w_m L_m - (1/eta) KL(w || w_before)
// with 0 log 0 = 0 on the boundary.
double weight_objective(std::span<const double> w, std::span<const double> w_before,
                        std::span<const double> losses, double eta);

// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> x);

// Independent maximizer of the weight program: projected gradient ascent
// with backtracking. Oracle-side only; shares nothing with update_weights
// beyond the objective definition.
std::vector<double> maximize_weight_objective(std::span<const double> w_before,
                                              std::span<const double> losses, double eta,
                                              std::size_t iters = 300);

struct KktReport {
  bool ok = true;
  std::size_t trials = 0;
  double worst_gap = 0.0;            // most negative F(after) - F(probe), clamped at 0
  std::vector<double> witness;       // probe that beat the closed form, if any
  std::string detail;
};

// Checks that `weights_after` maximizes the weight program: its objective
// must be >= every random simplex probe - 1e-9 and >= the projected-ascent
// solution - 1e-6, and it must be an interior simplex point.
KktReport verify_kkt_optimality(const PrefixWeights& weights_before,
                                std::span<const double> losses, double eta,
                                const PrefixWeights& weights_after, std::size_t trials,
                                Rng& rng);

}  // namespace prefixrec
