#include "prefixrec/adaptive_weights.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace prefixrec {

PrefixWeights uniform_weights(std::size_t T, double eta) {
  if (T < 1) throw ConfigError("uniform_weights: T must be >= 1");
  PrefixWeights pw;
  pw.w.assign(T, 1.0 / static_cast<double>(T));
  pw.eta = eta;
  return pw;
}

PrefixWeights update_weights(const PrefixWeights& weights, std::span<const double> losses) {
  const std::size_t T = weights.w.size();
  if (losses.size() != T) throw std::logic_error("update_weights: loss vector length mismatch");
  for (double l : losses) {
    if (!std::isfinite(l)) throw TrainingError("update_weights: non-finite prefix loss");
  }
  for (double w : weights.w) {
    if (!(w > 0.0)) throw std::logic_error("update_weights: weights must be interior");
  }

  std::vector<double> logw(T);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < T; ++m) {
    logw[m] = std::log(weights.w[m]) + weights.eta * losses[m];
    mx = std::max(mx, logw[m]);
  }
  double z = 0.0;
  for (std::size_t m = 0; m < T; ++m) z += std::exp(logw[m] - mx);

  PrefixWeights out;
  out.eta = weights.eta;
  out.tau = weights.tau + 1;
  out.w.resize(T);
  for (std::size_t m = 0; m < T; ++m) out.w[m] = std::exp(logw[m] - mx) / z;
  return out;
}

double hard_max_loss(std::span<const double> losses) {
  if (losses.empty()) throw std::logic_error("hard_max_loss: empty loss vector");
  return *std::max_element(losses.begin(), losses.end());
}

double weight_objective(std::span<const double> w, std::span<const double> w_before,
                        std::span<const double> losses, double eta) {
  double lin = 0.0, kl = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    lin += w[m] * losses[m];
    if (w[m] > 0.0) kl += w[m] * std::log(w[m] / w_before[m]);
  }
  return lin - kl / eta;
}

std::vector<double> project_to_simplex(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    running += sorted[i];
    const double cand = (running - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - cand > 0.0) {
      theta = cand;
      k = i + 1;
    }
  }
  (void)k;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::max(0.0, x[i] - theta);
  return out;
}

std::vector<double> maximize_weight_objective(std::span<const double> w_before,
                                              std::span<const double> losses, double eta,
                                              std::size_t iters) {
  const std::size_t T = w_before.size();
  std::vector<double> w(w_before.begin(), w_before.end());
  constexpr double kFloor = 1e-15;  // KL gradient is singular at the boundary

  auto interior = [&](std::vector<double> v) {
    double sum = 0.0;
    for (double& x : v) {
      x = std::max(x, kFloor);
      sum += x;
    }
    for (double& x : v) x /= sum;
    return v;
  };

  double f = weight_objective(w, w_before, losses, eta);
  double step = eta;  // the optimum sits O(eta * range) away from w_before
  std::vector<double> grad(T), trial(T);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t m = 0; m < T; ++m) {
      grad[m] = losses[m] - (std::log(w[m] / w_before[m]) + 1.0) / eta;
    }
    bool improved = false;
    double local = step;
    for (int bt = 0; bt < 40; ++bt) {
      for (std::size_t m = 0; m < T; ++m) trial[m] = w[m] + local * grad[m];
      trial = interior(project_to_simplex(trial));
      const double ft = weight_objective(trial, w_before, losses, eta);
      if (ft > f) {
        w = trial;
        f = ft;
        improved = true;
        break;
      }
      local *= 0.5;
    }
    if (!improved) break;
    step = std::min(local * 2.0, 1.0);
  }
  return w;
}

KktReport verify_kkt_optimality(const PrefixWeights& weights_before,
                                std::span<const double> losses, double eta,
                                const PrefixWeights& weights_after, std::size_t trials,
                                Rng& rng) {
  const std::size_t T = weights_before.w.size();
  KktReport report;
  report.trials = trials;

  double sum = 0.0;
  for (double w : weights_after.w) {
    sum += w;
    if (!(w > 0.0)) {
      report.ok = false;
      report.detail = "updated weights left the simplex interior";
      return report;
    }
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    report.ok = false;
    report.detail = "updated weights sum to " + std::to_string(sum);
    return report;
  }

  const double f_after = weight_objective(weights_after.w, weights_before.w, losses, eta);

  auto check_probe = [&](std::span<const double> probe, double tolerance, const char* kind) {
    const double f_probe = weight_objective(probe, weights_before.w, losses, eta);
    const double gap = f_after - f_probe;
    report.worst_gap = std::min(report.worst_gap, gap);
    if (gap < -tolerance) {
      report.ok = false;
      report.witness.assign(probe.begin(), probe.end());
      std::ostringstream msg;
      msg << kind << " probe beat the closed form by " << -gap;
      report.detail = msg.str();
      return false;
    }
    return true;
  };

  std::vector<double> probe(T);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    double z = 0.0;
    for (std::size_t m = 0; m < T; ++m) {
      probe[m] = -std::log(std::max(uniform_unit(rng), 1e-300));
      z += probe[m];
    }
    for (std::size_t m = 0; m < T; ++m) probe[m] /= z;
    if (!check_probe(probe, 1e-9, "random")) return report;
  }

  const auto ascent = maximize_weight_objective(weights_before.w, losses, eta);
  check_probe(ascent, 1e-6, "projected-ascent");
  return report;
}

}  // namespace prefixrec
