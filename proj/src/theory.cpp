#include "prefixrec/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "prefixrec/adaptive_weights.hpp"
#include "prefixrec/losses.hpp"

namespace prefixrec {

namespace {

std::string describe_trial(std::size_t T, std::size_t N, std::size_t K,
                           const std::vector<double>& pos_s,
                           const std::vector<double>& neg_s, const char* which) {
  std::ostringstream os;
  os << "violated " << which << " (T=" << T << ", N=" << N << ", K=" << K << "; pos s = [";
  for (std::size_t t = 0; t < T; ++t) os << (t ? ", " : "") << pos_s[t];
  os << "], neg s = [";
  for (std::size_t i = 0; i < neg_s.size(); ++i) os << (i ? ", " : "") << neg_s[i];
  os << "])";
  return os.str();
}

}  // namespace

TheoryReport verify_lower_bound(std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("verify_lower_bound: trials must be >= 1");
  TheoryReport report;
  report.trials = trials;
  Rng rng(seed);

  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t T = 1 + uniform_index(rng, 4);
    const std::size_t N = 1 + uniform_index(rng, 8);
    const std::size_t K = 1 + uniform_index(rng, N + 1);  // up to all candidates

    // Per-step token log-probabilities; cumulative prefix scores follow.
    std::vector<double> pos_s(T), pos_S(T);
    std::vector<double> neg_s(N * T), neg_S(N * T);
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      pos_s[t] = uniform_in(rng, -4.0, 0.0);
      acc += pos_s[t];
      pos_S[t] = acc;
    }
    for (std::size_t j = 0; j < N; ++j) {
      acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        neg_s[j * T + t] = uniform_in(rng, -4.0, 0.0);
        acc += neg_s[j * T + t];
        neg_S[j * T + t] = acc;
      }
    }

    bool violated = false;
    const char* which = "";

    std::vector<double> pair_loss(T);
    std::vector<bool> failure(T);
    for (std::size_t m = 0; m < T && !violated; ++m) {
      std::vector<double> col(N);
      for (std::size_t j = 0; j < N; ++j) col[j] = neg_S[j * T + m];

      // Rank of the positive among all candidates at depth m+1 (strictly
      // better negatives push it down).
      std::size_t better = 0;
      for (std::size_t j = 0; j < N; ++j) {
        if (col[j] > pos_S[m]) ++better;
      }
      failure[m] = better + 1 > K;

      const double phi = pairwise_margin_from_scores(pos_S[m], col);
      pair_loss[m] = softplus(phi);
      const double surrogate = std::exp(-std::max(0.0, -phi));

      // (a) failure within the sampled set forces a positive margin
      if (failure[m] && !(phi > 0.0)) {
        violated = true;
        which = "(a) failure => phi > 0";
      }
      // (b) indicator domination by the exponential surrogate
      const double indicator = (-phi < 0.0) ? 1.0 : 0.0;
      if (!violated && indicator > surrogate + 1e-15) {
        violated = true;
        which = "(b) I(-phi < 0) <= exp(-(-phi)+)";
      }
      // (c) the surrogate is dominated by exp(L_pair)
      if (!violated && surrogate > std::exp(pair_loss[m]) + 1e-12) {
        violated = true;
        which = "(c) exp(-(-phi)+) <= exp(L_pair)";
      }
    }

    if (!violated) {
      // (d) run the actual top-K selection over the candidate pool and check
      // the union bound. Candidate 0 is the positive; ties keep the lower
      // index.
      std::vector<std::size_t> survivors(N + 1);
      for (std::size_t c = 0; c <= N; ++c) survivors[c] = c;
      bool pos_survived = true;
      for (std::size_t m = 0; m < T; ++m) {
        auto score = [&](std::size_t c) { return c == 0 ? pos_S[m] : neg_S[(c - 1) * T + m]; };
        std::stable_sort(survivors.begin(), survivors.end(),
                         [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
        if (survivors.size() > K) survivors.resize(K);
        if (std::find(survivors.begin(), survivors.end(), 0u) == survivors.end()) {
          pos_survived = false;
          break;
        }
      }
      // Sharpest executed-beam statement first (1 - sum of failure
      // indicators), then the looser differentiable relaxation.
      double indicator_bound = 1.0;
      double loss_bound = 1.0;
      for (std::size_t m = 0; m < T; ++m) {
        indicator_bound -= failure[m] ? 1.0 : 0.0;
        loss_bound -= std::exp(pair_loss[m]);
      }
      const double beam_indicator = pos_survived ? 1.0 : 0.0;
      if (beam_indicator < indicator_bound - 1e-12) {
        violated = true;
        which = "(d) I_beam >= 1 - sum I(A_m^c)";
      } else if (beam_indicator < loss_bound - 1e-12) {
        violated = true;
        which = "(d) I_beam >= 1 - sum exp(L_pair)";
      }
    }

    if (violated) {
      ++report.violations;
      if (report.first_witness.empty()) {
        report.first_witness = describe_trial(T, N, K, pos_s, neg_s, which);
      }
    }
  }
  return report;
}

TheoryReport verify_weight_program(std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("verify_weight_program: trials must be >= 1");
  TheoryReport report;
  report.trials = trials;
  Rng rng(seed);

  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t T = 1 + uniform_index(rng, 6);
    PrefixWeights before;
    before.eta = std::exp(uniform_in(rng, std::log(5e-6), std::log(5e-1)));
    before.w.resize(T);
    double z = 0.0;
    for (std::size_t m = 0; m < T; ++m) {
      before.w[m] = -std::log(std::max(uniform_unit(rng), 1e-300));
      z += before.w[m];
    }
    for (std::size_t m = 0; m < T; ++m) before.w[m] /= z;

    std::vector<double> losses(T);
    for (std::size_t m = 0; m < T; ++m) losses[m] = uniform_in(rng, 0.0, 10.0);

    const PrefixWeights after = update_weights(before, losses);
    const KktReport kkt =
        verify_kkt_optimality(before, losses, before.eta, after, /*trials=*/32, rng);
    if (!kkt.ok) {
      ++report.violations;
      if (report.first_witness.empty()) report.first_witness = kkt.detail;
    }
  }
  return report;
}

}  // namespace prefixrec
