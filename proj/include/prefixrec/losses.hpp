#pragma once

#include <span>
#include <vector>

#include "prefixrec/model.hpp"

namespace prefixrec {

// Per-step log-probability of the ground-truth token and its running sums.
// s[t] <= 0 and S is non-increasing in the prefix length.
struct PrefixScores {
  std::vector<double> s;  // s[t], 0-based step
  std::vector<double> S;  // S[m-1] = sum of s[0..m-1]
};

// Loss value plus the gradient with respect to the logits that produced it.
// dlogits_neg is populated only by the pairwise loss (one entry per negative
// trace, aligned with the input order).
struct LossBundle {
  double value = 0.0;
  LogitGrads dlogits;                    // positive trace
  std::vector<LogitGrads> dlogits_neg;
};

PrefixScores prefix_scores(const ForwardTrace& trace);

// Mean negative log-likelihood over all T steps.
LossBundle ce_loss(const ForwardTrace& trace);

// Mean negative log-likelihood over the first m steps (1 <= m <= T);
// gradients vanish at steps beyond m. At m == T this equals ce_loss exactly.
LossBundle pointwise_prefix_loss(const ForwardTrace& trace, std::size_t m);

// Logistic comparison of the positive prefix score against the log-sum-exp
// of negative prefix scores at depth m: value = log(1 + exp(phi_m)) with
// phi_m = logsumexp_j(S_j^m - S_+^m), computed in overflow-safe form.
LossBundle pairwise_prefix_loss(const ForwardTrace& pos_trace,
                                const std::vector<ForwardTrace>& neg_traces, std::size_t m);

// Value-only form shared with the theory verifier: takes the cumulative
// prefix scores directly.
double pairwise_value_from_scores(double pos_score, std::span<const double> neg_scores);

// logsumexp_j(neg_j - pos); the quantity the logistic loss is applied to.
double pairwise_margin_from_scores(double pos_score, std::span<const double> neg_scores);

}  // namespace prefixrec
