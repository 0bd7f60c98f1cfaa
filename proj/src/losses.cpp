#include "prefixrec/losses.hpp"

#include <algorithm>
#include <cmath>

namespace prefixrec {

PrefixScores prefix_scores(const ForwardTrace& trace) {
  const std::size_t T = trace.seq_len();
  PrefixScores out;
  out.s.resize(T);
  out.S.resize(T);
  double acc = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    out.s[t] = trace.log_probs[t][trace.codes[t]];
    acc += out.s[t];
    out.S[t] = acc;
  }
  return out;
}

namespace {

// d(-log softmax(z)[y]) / dz = softmax(z) - onehot(y)
std::vector<double> nll_logit_grad(const ForwardTrace& trace, std::size_t t, double scale) {
  const auto& lp = trace.log_probs[t];
  std::vector<double> g(lp.size());
  for (std::size_t v = 0; v < lp.size(); ++v) g[v] = scale * std::exp(lp[v]);
  g[trace.codes[t]] -= scale;
  return g;
}

}  // namespace

LossBundle ce_loss(const ForwardTrace& trace) {
  const std::size_t T = trace.seq_len();
  LossBundle out;
  out.dlogits.resize(T);
  const double inv = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    out.value -= inv * trace.log_probs[t][trace.codes[t]];
    out.dlogits[t] = nll_logit_grad(trace, t, inv);
  }
  return out;
}

LossBundle pointwise_prefix_loss(const ForwardTrace& trace, std::size_t m) {
  const std::size_t T = trace.seq_len();
  if (m < 1 || m > T) throw std::logic_error("pointwise_prefix_loss: m out of range");
  LossBundle out;
  out.dlogits.resize(T);
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t t = 0; t < m; ++t) {
    out.value -= inv * trace.log_probs[t][trace.codes[t]];
    out.dlogits[t] = nll_logit_grad(trace, t, inv);
  }
  return out;
}

double pairwise_margin_from_scores(double pos_score, std::span<const double> neg_scores) {
  if (neg_scores.empty()) throw std::logic_error("pairwise margin: empty negative set");
  std::vector<double> diffs(neg_scores.size());
  for (std::size_t j = 0; j < neg_scores.size(); ++j) diffs[j] = neg_scores[j] - pos_score;
  return log_sum_exp(diffs);
}

double pairwise_value_from_scores(double pos_score, std::span<const double> neg_scores) {
  return softplus(pairwise_margin_from_scores(pos_score, neg_scores));
}

LossBundle pairwise_prefix_loss(const ForwardTrace& pos_trace,
                                const std::vector<ForwardTrace>& neg_traces, std::size_t m) {
  const std::size_t T = pos_trace.seq_len();
  if (m < 1 || m > T) throw std::logic_error("pairwise_prefix_loss: m out of range");
  if (neg_traces.empty()) throw std::logic_error("pairwise_prefix_loss: empty negative set");
  for (const auto& neg : neg_traces) {
    if (neg.seq_len() != T) throw std::logic_error("pairwise_prefix_loss: trace length mismatch");
  }

  double pos_S = 0.0;
  for (std::size_t t = 0; t < m; ++t) pos_S += pos_trace.log_probs[t][pos_trace.codes[t]];

  const std::size_t N = neg_traces.size();
  std::vector<double> diffs(N);
  for (std::size_t j = 0; j < N; ++j) {
    double neg_S = 0.0;
    for (std::size_t t = 0; t < m; ++t) neg_S += neg_traces[j].log_probs[t][neg_traces[j].codes[t]];
    diffs[j] = neg_S - pos_S;
  }

  const double phi = log_sum_exp(diffs);
  LossBundle out;
  out.value = softplus(phi);

  // dL/dS_+ = -sigmoid(phi); dL/dS_j = sigmoid(phi) * softmax(diffs)_j.
  const double sig = sigmoid(phi);
  std::vector<double> weight(N);
  for (std::size_t j = 0; j < N; ++j) weight[j] = std::exp(diffs[j] - phi);

  out.dlogits.resize(T);
  for (std::size_t t = 0; t < m; ++t) out.dlogits[t] = nll_logit_grad(pos_trace, t, sig);

  out.dlogits_neg.resize(N);
  for (std::size_t j = 0; j < N; ++j) {
    out.dlogits_neg[j].resize(T);
    const double scale = -sig * weight[j];  // dS_j enters with +, nll grad carries the -
    for (std::size_t t = 0; t < m; ++t) {
      out.dlogits_neg[j][t] = nll_logit_grad(neg_traces[j], t, scale);
    }
  }
  return out;
}

}  // namespace prefixrec
