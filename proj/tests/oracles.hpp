#ifndef TRIAGE_TESTS_ORACLES_HPP
#define TRIAGE_TESTS_ORACLES_HPP

// Independent reference computations for tests. Nothing here calls into the
// library code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

namespace oracle {

// Per-class F1 from 2PR/(P+R) with explicit counting loops; 0/0 -> 0.
inline double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, const std::vector<int>& space) {
  double sum = 0.0;
  for (int c : space) {
    double tp = 0, pred_pos = 0, true_pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == c) pred_pos += 1;
      if (truth[i] == c) true_pos += 1;
      if (pred[i] == c && truth[i] == c) tp += 1;
    }
    const double p = pred_pos > 0 ? tp / pred_pos : 0.0;
    const double r = true_pos > 0 ? tp / true_pos : 0.0;
    sum += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return sum / static_cast<double>(space.size());
}

inline double binary_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
  return macro_f1(truth, pred, {1});
}

// Exhaustive (positive, negative) pair enumeration, ties worth 1/2.
inline double roc_auc(const std::vector<int>& truth, const std::vector<double>& scores) {
  double credit = 0, pairs = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (truth[j] != 0) continue;
      pairs += 1;
      if (scores[i] > scores[j]) credit += 1;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / pairs;
}

// Recomputes precision and recall from scratch at every distinct threshold.
inline double average_precision(const std::vector<int>& truth, const std::vector<double>& scores) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  double total_pos = 0;
  for (int t : truth) total_pos += t;
  double ap = 0, prev_recall = 0;
  for (double th : thresholds) {
    double tp = 0, flagged = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (scores[i] >= th) {
        flagged += 1;
        tp += truth[i];
      }
    }
    const double recall = tp / total_pos;
    const double precision = tp / flagged;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// Dense multinomial logistic objective: rows of X are samples, params are
// W (K x D, row-major) followed by b (K).
struct DenseProblem {
  std::vector<std::vector<double>> X;
  std::vector<int> y;  // 0..K-1
  int K = 0;
  double C = 1.0;

  std::size_t D() const { return X.front().size(); }

  double objective(const std::vector<double>& t) const {
    double J = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
      std::vector<double> z(K);
      for (int k = 0; k < K; ++k) {
        z[k] = t[K * D() + k];
        for (std::size_t j = 0; j < D(); ++j) z[k] += t[k * D() + j] * X[i][j];
      }
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0;
      for (double v : z) s += std::exp(v - m);
      J += m + std::log(s) - z[y[i]];
    }
    for (std::size_t j = 0; j < K * D(); ++j) J += t[j] * t[j] / (2 * C);
    return J;
  }
};

inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> t, double h) {
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double keep = t[i];
    t[i] = keep + h;
    const double up = f(t);
    t[i] = keep - h;
    const double down = f(t);
    t[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Plain gradient descent on finite-difference gradients with a fixed small
// step, run until the gradient is tiny. Slow; fine for a dozen parameters.
inline double minimize_by_gradient_descent(const DenseProblem& p, int max_steps = 200000) {
  std::vector<double> t(p.K * p.D() + p.K, 0.0);
  auto f = [&](const std::vector<double>& v) { return p.objective(v); };
  for (int s = 0; s < max_steps; ++s) {
    const auto g = central_difference(f, t, 1e-6);
    double gmax = 0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < 1e-9) break;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] -= 0.1 * g[i];
  }
  return p.objective(t);
}

}  // namespace oracle

#endif  // TRIAGE_TESTS_ORACLES_HPP
