#pragma once

#include <cstdint>
#include <string>

#include "prefixrec/common.hpp"

namespace prefixrec {

struct TheoryReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  std::string first_witness;  // scores of the first violated trial, if any

  bool passed() const { return violations == 0; }
};

// Random-trial check of the chain linking beam-search success to the
// pairwise prefix loss. Each trial draws per-step token log-probabilities
// for one positive and up to 8 negatives (T <= 4), a beam width K, and
// verifies:
//   (a) a top-K ranking failure at depth m implies a positive margin phi_m,
//   (b) the failure indicator is dominated by exp(-(-phi_m)_+),
//   (c) exp(-(-phi_m)_+) <= exp(L_pair(m)),
//   (d) the survival indicator of an actually-executed top-K selection is
//       >= 1 - sum_m exp(L_pair(m)).
TheoryReport verify_lower_bound(std::size_t trials, std::uint64_t seed);

// Random-instance check that the multiplicative weight update solves the
// KL-regularized program: draws (T in 1..6, interior w, losses, eta), runs
// the closed-form update, and compares its objective against random simplex
// probes and a projected-ascent maximizer.
TheoryReport verify_weight_program(std::size_t trials, std::uint64_t seed);

}  // namespace prefixrec
