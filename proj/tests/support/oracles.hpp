// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "prefixrec/model.hpp"
#include "prefixrec/tokenizer.hpp"

namespace prefixrec::testing {

// Brute-force residual quantizer reference: per item, per level, scans every
// centroid exhaustively and subtracts the best one.
inline std::vector<std::uint32_t> reference_residual_codes(const EmbeddingMatrix& emb,
                                                           const Codebooks& cb,
                                                           std::size_t item) {
  std::vector<double> r(emb.row(item).begin(), emb.row(item).end());
  std::vector<std::uint32_t> codes;
  for (std::size_t level = 0; level < cb.levels; ++level) {
    const Matrix& c = cb.centroids[level];
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c.rows; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < c.cols; ++j) {
        const double diff = r[j] - c.at(k, j);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    codes.push_back(static_cast<std::uint32_t>(best));
    for (std::size_t j = 0; j < c.cols; ++j) r[j] -= c.at(best, j);
  }
  return codes;
}

// Sum over items of the residual L2 norm after quantizing `levels` levels.
inline double total_residual_norm(const EmbeddingMatrix& emb, const Codebooks& cb,
                                  std::size_t levels) {
  double total = 0.0;
  for (std::size_t i = 0; i < emb.rows; ++i) {
    std::vector<double> r(emb.row(i).begin(), emb.row(i).end());
    for (std::size_t level = 0; level < levels; ++level) {
      const Matrix& c = cb.centroids[level];
      const std::size_t a = nearest_centroid(r, c);
      for (std::size_t j = 0; j < c.cols; ++j) r[j] -= c.at(a, j);
    }
    double norm2 = 0.0;
    for (double x : r) norm2 += x * x;
    total += std::sqrt(norm2);
  }
  return total;
}

// Central finite differences of an arbitrary scalar of the parameters,
// matched against an analytic gradient tensor-by-tensor.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_tensor;
};

inline GradCheckResult finite_difference_check(
    ModelParams& params, const Gradients& analytic,
    const std::function<double(const ModelParams&)>& scalar_fn, double eps = 1e-4,
    double atol = 1e-7) {
  GradCheckResult result;
  std::vector<Tensor*> pt;
  params.for_each_tensor([&](Tensor& t) { pt.push_back(&t); });
  std::vector<const Tensor*> gt;
  analytic.for_each_tensor([&](const Tensor& t) { gt.push_back(&t); });

  for (std::size_t ti = 0; ti < pt.size(); ++ti) {
    for (std::size_t j = 0; j < pt[ti]->data.size(); ++j) {
      const double saved = pt[ti]->data[j];
      pt[ti]->data[j] = saved + eps;
      const double up = scalar_fn(params);
      pt[ti]->data[j] = saved - eps;
      const double down = scalar_fn(params);
      pt[ti]->data[j] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = gt[ti]->data[j];
      const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      if (std::abs(an - fd) > atol && rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_tensor = pt[ti]->name;
      }
    }
  }
  return result;
}

// Long-double logsumexp with ascending-order accumulation; independent of
// the max-subtracted double implementation in the library.
inline double reference_log_sum_exp(std::span<const double> xs) {
  std::vector<long double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  long double acc = 0.0L;
  for (long double x : sorted) acc += expl(x);
  return static_cast<double>(logl(acc));
}

}  // namespace prefixrec::testing
