#include <doctest.h>

#include <cmath>

#include "prefixrec/losses.hpp"
#include "support/oracles.hpp"

using namespace prefixrec;

namespace {

// Builds a consistent trace straight from logits; only the fields the loss
// functions read are populated.
ForwardTrace trace_from_logits(std::vector<std::vector<double>> logits,
                               std::vector<std::uint32_t> codes) {
  ForwardTrace tr;
  tr.codes = std::move(codes);
  tr.logits = std::move(logits);
  for (const auto& row : tr.logits) tr.log_probs.push_back(log_softmax(row));
  return tr;
}

ForwardTrace random_trace(std::vector<std::size_t> vocabs, Rng& rng) {
  std::vector<std::vector<double>> logits;
  std::vector<std::uint32_t> codes;
  for (std::size_t v : vocabs) {
    std::vector<double> row(v);
    for (double& x : row) x = uniform_in(rng, -2.0, 2.0);
    codes.push_back(static_cast<std::uint32_t>(uniform_index(rng, v)));
    logits.push_back(std::move(row));
  }
  return trace_from_logits(std::move(logits), std::move(codes));
}

// Long-double evaluation of the mean prefix NLL, straight from the formula.
double reference_prefix_nll(const ForwardTrace& tr, std::size_t m) {
  long double acc = 0.0L;
  for (std::size_t t = 0; t < m; ++t) {
    long double lse = 0.0L;
    for (double z : tr.logits[t]) lse += expl(static_cast<long double>(z));
    acc += static_cast<long double>(tr.logits[t][tr.codes[t]]) - logl(lse);
  }
  return static_cast<double>(-acc / static_cast<long double>(m));
}

// Finite differences of a loss value with respect to the raw logits.
template <typename LossFn>
double max_logit_grad_error(ForwardTrace tr, const LogitGrads& dlogits, LossFn&& fn,
                            double eps = 1e-6) {
  double worst = 0.0;
  for (std::size_t t = 0; t < tr.logits.size(); ++t) {
    for (std::size_t v = 0; v < tr.logits[t].size(); ++v) {
      const double saved = tr.logits[t][v];
      tr.logits[t][v] = saved + eps;
      tr.log_probs[t] = log_softmax(tr.logits[t]);
      const double up = fn(tr);
      tr.logits[t][v] = saved - eps;
      tr.log_probs[t] = log_softmax(tr.logits[t]);
      const double down = fn(tr);
      tr.logits[t][v] = saved;
      tr.log_probs[t] = log_softmax(tr.logits[t]);
      const double fd = (up - down) / (2.0 * eps);
      const double an = dlogits[t].empty() ? 0.0 : dlogits[t][v];
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("uniform logits give ln(vocab)") {
  const auto tr = trace_from_logits(
      {std::vector<double>(4, 0.3), std::vector<double>(4, 0.3), std::vector<double>(4, 0.3),
       std::vector<double>(4, 0.3)},
      {0, 1, 2, 3});
  CHECK(ce_loss(tr).value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("a dominant target logit drives CE to zero") {
  std::vector<std::vector<double>> logits(2, std::vector<double>(3, 0.0));
  logits[0][1] = 30.0;
  logits[1][2] = 30.0;
  const auto tr = trace_from_logits(std::move(logits), {1, 2});
  CHECK(ce_loss(tr).value <= 1e-9);
}

TEST_CASE("CE matches the long-double reference on random traces") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto tr = random_trace({3, 3}, rng);
    CHECK(ce_loss(tr).value == doctest::Approx(reference_prefix_nll(tr, 2)).epsilon(1e-12));
  }
}

TEST_CASE("pointwise at m = T reduces to CE exactly") {
  Rng rng(6);
  const auto tr = random_trace({4, 4, 4, 4}, rng);
  CHECK(pointwise_prefix_loss(tr, 4).value == ce_loss(tr).value);
}

TEST_CASE("pointwise at m = 1 is the first token NLL") {
  Rng rng(7);
  const auto tr = random_trace({5, 5}, rng);
  CHECK(pointwise_prefix_loss(tr, 1).value ==
        doctest::Approx(-tr.log_probs[0][tr.codes[0]]).epsilon(1e-15));
}

TEST_CASE("pointwise m=2 of T=4: reference value and zero tail gradients") {
  Rng rng(8);
  const auto tr = random_trace({3, 4, 3, 4}, rng);
  const auto bundle = pointwise_prefix_loss(tr, 2);
  CHECK(bundle.value == doctest::Approx(reference_prefix_nll(tr, 2)).epsilon(1e-12));
  CHECK(bundle.dlogits[2].empty());
  CHECK(bundle.dlogits[3].empty());
  CHECK_THROWS_AS(pointwise_prefix_loss(tr, 0), std::logic_error);
  CHECK_THROWS_AS(pointwise_prefix_loss(tr, 5), std::logic_error);
}

TEST_CASE("pairwise tie gives ln 2") {
  Rng rng(9);
  const auto pos = random_trace({3, 3}, rng);
  // A negative with identical cumulative score: reuse the positive trace.
  const std::vector<ForwardTrace> negs = {pos};
  const auto bundle = pairwise_prefix_loss(pos, negs, 2);
  CHECK(bundle.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("saturated preference vanishes") {
  std::vector<std::vector<double>> plogits(1, std::vector<double>(2, 0.0));
  plogits[0][0] = 45.0;  // pos log-prob ~ 0
  const auto pos = trace_from_logits(std::move(plogits), {0});
  std::vector<std::vector<double>> nlogits(1, std::vector<double>(2, 0.0));
  nlogits[0][1] = 45.0;  // neg picks the tiny-probability token
  const auto neg = trace_from_logits(std::move(nlogits), {0});
  const auto bundle = pairwise_prefix_loss(pos, {neg}, 1);
  CHECK(bundle.value <= 1e-12);
}

TEST_CASE("pairwise value matches an independent logsumexp oracle") {
  Rng rng(10);
  const auto pos = random_trace({3, 4, 2}, rng);
  std::vector<ForwardTrace> negs;
  for (int j = 0; j < 3; ++j) negs.push_back(random_trace({3, 4, 2}, rng));
  for (std::size_t m = 1; m <= 3; ++m) {
    const auto bundle = pairwise_prefix_loss(pos, negs, m);
    const auto ps = prefix_scores(pos);
    std::vector<double> diffs;
    for (const auto& n : negs) diffs.push_back(prefix_scores(n).S[m - 1] - ps.S[m - 1]);
    const double phi = testing::reference_log_sum_exp(diffs);
    CHECK(bundle.value == doctest::Approx(std::log1p(std::exp(phi))).epsilon(1e-10));
  }
}

TEST_CASE("the denominator form from the learning-algorithm pseudocode agrees") {
  // pos_exp / (pos_exp + sum neg_exp) equals the log-domain form
  // algebraically; check numerical agreement to 1e-10 on moderate scores.
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const double pos = uniform_in(rng, -6.0, 0.0);
    std::vector<double> negs(1 + uniform_index(rng, 4));
    for (double& x : negs) x = uniform_in(rng, -6.0, 0.0);

    const double lib = pairwise_value_from_scores(pos, negs);
    long double pos_exp = expl(pos);
    long double neg_sum = 0.0L;
    for (double x : negs) neg_sum += expl(x);
    const double direct = static_cast<double>(-logl(pos_exp / (pos_exp + neg_sum)));
    CHECK(lib == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("loss gradients match finite differences on the logits") {
  Rng rng(12);
  const auto tr = random_trace({3, 4, 3}, rng);

  const auto ce = ce_loss(tr);
  CHECK(max_logit_grad_error(tr, ce.dlogits, [](const ForwardTrace& t) {
          return ce_loss(t).value;
        }) <= 1e-6);

  const auto pw = pointwise_prefix_loss(tr, 2);
  CHECK(max_logit_grad_error(tr, pw.dlogits, [](const ForwardTrace& t) {
          return pointwise_prefix_loss(t, 2).value;
        }) <= 1e-6);

  std::vector<ForwardTrace> negs = {random_trace({3, 4, 3}, rng),
                                    random_trace({3, 4, 3}, rng)};
  const auto pair = pairwise_prefix_loss(tr, negs, 2);
  CHECK(max_logit_grad_error(tr, pair.dlogits, [&negs](const ForwardTrace& t) {
          return pairwise_prefix_loss(t, negs, 2).value;
        }) <= 1e-6);
  for (std::size_t j = 0; j < negs.size(); ++j) {
    CHECK(max_logit_grad_error(negs[j], pair.dlogits_neg[j], [&, j](const ForwardTrace& n) {
            auto copy = negs;
            copy[j] = n;
            return pairwise_prefix_loss(tr, copy, 2).value;
          }) <= 1e-6);
  }
}

TEST_CASE("lower-bound link: exp(-(-phi)+) <= 1 + exp(phi)") {
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    const double phi = uniform_in(rng, -20.0, 20.0);
    CHECK(std::exp(-std::max(0.0, -phi)) <= std::exp(softplus(phi)) + 1e-12);
  }
}

TEST_CASE("an outranked positive keeps the loss above ln 2") {
  Rng rng(14);
  for (int rep = 0; rep < 100; ++rep) {
    const double pos = uniform_in(rng, -5.0, -1.0);
    std::vector<double> negs(1 + uniform_index(rng, 5));
    bool outranked = false;
    for (double& x : negs) {
      x = uniform_in(rng, -5.0, 0.0);
      if (x > pos) outranked = true;
    }
    if (outranked) {
      CHECK(pairwise_value_from_scores(pos, negs) >= std::log(2.0) - 1e-12);
    }
  }
}

TEST_CASE("raising the positive score strictly lowers the pairwise loss") {
  const std::vector<double> negs = {-1.0, -2.5, -0.7};
  double prev = pairwise_value_from_scores(-3.0, negs);
  for (double pos = -2.5; pos <= 0.0; pos += 0.5) {
    const double cur = pairwise_value_from_scores(pos, negs);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("prefix scores: basics and reordered-summation oracle") {
  Rng rng(15);
  const auto tr1 = random_trace({4}, rng);
  const auto ps1 = prefix_scores(tr1);
  CHECK(ps1.S[0] == ps1.s[0]);

  const auto uniform =
      trace_from_logits({std::vector<double>(4, 0.0), std::vector<double>(4, 0.0),
                         std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)},
                        {0, 1, 2, 3});
  const auto psu = prefix_scores(uniform);
  for (std::size_t m = 1; m <= 4; ++m) {
    CHECK(psu.S[m - 1] ==
          doctest::Approx(-static_cast<double>(m) * std::log(4.0)).epsilon(1e-12));
  }

  const auto tr = random_trace({5, 3, 4, 2}, rng);
  const auto ps = prefix_scores(tr);
  for (std::size_t m = 1; m <= 4; ++m) {
    double re = 0.0;
    for (std::size_t t = m; t-- > 0;) re += tr.log_probs[t][tr.codes[t]];
    CHECK(std::abs(ps.S[m - 1] - re) <= 1e-12);
  }
  // s <= 0 and S non-increasing.
  for (double s : ps.s) CHECK(s <= 0.0);
  for (std::size_t m = 1; m < 4; ++m) CHECK(ps.S[m] <= ps.S[m - 1]);
}

TEST_CASE("pairwise contract violations") {
  Rng rng(16);
  const auto tr = random_trace({3, 3}, rng);
  CHECK_THROWS_AS(pairwise_prefix_loss(tr, {}, 1), std::logic_error);
  const auto wrong = random_trace({3, 3, 3}, rng);
  CHECK_THROWS_AS(pairwise_prefix_loss(tr, {wrong}, 1), std::logic_error);
}

}  // TEST_SUITE
