#ifndef TRIAGE_LINCLF_HPP
#define TRIAGE_LINCLF_HPP

// Multinomial logistic regression with an L2 penalty on the weights.
//
// Objective (bias unregularized):
//   J(W, b) = sum_i w_i * CE(softmax(W x_i + b), y_i) + ||W||_F^2 / (2 C)
// where w_i = 1 unless class weighting is enabled.
//
// Training is full batch and deterministic: limited-memory BFGS directions
// with an Armijo backtracking line search (initial step 1, shrink 0.5), and a
// steepest-descent fallback whenever the quasi-Newton direction fails.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/error.hpp"
#include "triage/textvec.hpp"

namespace triage {

enum class StopReason {
  kGradientTolerance,  // ||grad J||_inf fell below tolerance
  kIterationCap,
  kStalled,  // no step along -grad satisfied Armijo; numerically at the optimum
};

inline const char* to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::kGradientTolerance: return "gradient_tolerance";
    case StopReason::kIterationCap: return "iteration_cap";
    case StopReason::kStalled: return "stalled";
  }
  return "unknown";
}

inline StopReason stop_reason_from_string(std::string_view s) {
  if (s == "gradient_tolerance") return StopReason::kGradientTolerance;
  if (s == "iteration_cap") return StopReason::kIterationCap;
  if (s == "stalled") return StopReason::kStalled;
  throw FormatError("unknown stop reason '" + std::string(s) + "'");
}

enum class ClassWeighting { kNone, kInverseFrequency };

struct TrainOptions {
  double reg_C = 1.0;
  std::uint64_t seed = 42;
  int max_iterations = 1000;
  double gradient_tolerance = 1e-6;
  // Start from small uniform noise in [-noise_scale, noise_scale] instead of zero.
  bool noise_init = false;
  double noise_scale = 0.01;
  ClassWeighting class_weighting = ClassWeighting::kNone;
  int history = 10;
};

struct TrainMeta {
  int iterations = 0;
  double objective = 0.0;
  double gradient_norm_inf = 0.0;
  StopReason stop = StopReason::kGradientTolerance;
  // Objective after each accepted step, starting with the initial point.
  std::vector<double> objective_trace;
};

// Flat parameter block: weights row-major K x D, followed by bias (K).
struct Parameters {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  Parameters() = default;
  Parameters(std::size_t k, std::size_t d) : num_classes(k), dim(d), values(k * d + k, 0.0) {}

  double& weight(std::size_t k, std::size_t j) { return values[k * dim + j]; }
  double weight(std::size_t k, std::size_t j) const { return values[k * dim + j]; }
  double& bias(std::size_t k) { return values[num_classes * dim + k]; }
  double bias(std::size_t k) const { return values[num_classes * dim + k]; }
  std::span<const double> weights() const { return {values.data(), num_classes * dim}; }
  std::span<const double> biases() const { return {values.data() + num_classes * dim, num_classes}; }
};

// Training problem with labels already mapped to 0..K-1.
struct Problem {
  std::span<const SparseVector> X;
  std::span<const std::size_t> y;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  double reg_C = 1.0;
  std::span<const double> sample_weights;  // empty means all ones
};

namespace detail {

inline void logits(const Parameters& p, const SparseVector& x, std::span<double> out) {
  for (std::size_t k = 0; k < p.num_classes; ++k) {
    double z = p.bias(k);
    const double* row = p.values.data() + k * p.dim;
    for (const auto& e : x.entries) z += row[e.index] * e.weight;
    out[k] = z;
  }
}

// In-place softmax; returns log-sum-exp of the input.
inline double softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return m + std::log(sum);
}

inline void validate_problem(const Problem& prob) {
  if (prob.X.size() != prob.y.size()) throw InvalidArgument("feature and label counts differ");
  if (!(prob.reg_C > 0.0) || !std::isfinite(prob.reg_C)) throw InvalidArgument("reg_C must be positive and finite");
  if (!prob.sample_weights.empty() && prob.sample_weights.size() != prob.X.size()) {
    throw InvalidArgument("sample weight count differs from sample count");
  }
  for (std::size_t i = 0; i < prob.X.size(); ++i) {
    if (prob.X[i].dim != prob.dim) {
      throw InvalidArgument("sample " + std::to_string(i) + " has dimension " + std::to_string(prob.X[i].dim) +
                            ", expected " + std::to_string(prob.dim));
    }
    if (prob.y[i] >= prob.num_classes) throw InvalidArgument("label index out of range");
  }
}

}  // namespace detail

// J at `params`; if `grad` is non-null it receives the exact gradient.
inline double objective_and_gradient(const Parameters& params, const Problem& prob, Parameters* grad) {
  const std::size_t K = prob.num_classes;
  if (grad) *grad = Parameters(K, prob.dim);
  std::vector<double> z(K);
  double loss = 0.0;
  for (std::size_t i = 0; i < prob.X.size(); ++i) {
    const auto& x = prob.X[i];
    const double w = prob.sample_weights.empty() ? 1.0 : prob.sample_weights[i];
    detail::logits(params, x, z);
    const double zy = z[prob.y[i]];
    const double lse = detail::softmax_inplace(z);
    loss += w * (lse - zy);
    if (!grad) continue;
    for (std::size_t k = 0; k < K; ++k) {
      const double r = w * (z[k] - (k == prob.y[i] ? 1.0 : 0.0));
      double* row = grad->values.data() + k * prob.dim;
      for (const auto& e : x.entries) row[e.index] += r * e.weight;
      grad->bias(k) += r;
    }
  }
  double sq = 0.0;
  for (double v : params.weights()) sq += v * v;
  const double inv_c = 1.0 / prob.reg_C;
  if (grad) {
    for (std::size_t j = 0; j < K * prob.dim; ++j) grad->values[j] += params.values[j] * inv_c;
  }
  return loss + 0.5 * inv_c * sq;
}

inline double objective(const Parameters& params, const Problem& prob) {
  return objective_and_gradient(params, prob, nullptr);
}

inline Parameters gradient(const Parameters& params, const Problem& prob) {
  detail::validate_problem(prob);
  Parameters g;
  objective_and_gradient(params, prob, &g);
  return g;
}

inline double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

class LinearClassifier {
 public:
  LinearClassifier() = default;

  // Assembles a model from stored parameters. Classes must be strictly
  // increasing; weights are row-major K x dim.
  LinearClassifier(std::vector<int> classes, std::size_t dim, std::vector<double> weights, std::vector<double> bias,
                   double reg_C, TrainMeta meta = {})
      : classes_(std::move(classes)), params_(classes_.size(), dim), reg_C_(reg_C), meta_(std::move(meta)) {
    if (classes_.size() < 2) throw InvalidArgument("a classifier needs at least two classes");
    if (!std::is_sorted(classes_.begin(), classes_.end()) ||
        std::adjacent_find(classes_.begin(), classes_.end()) != classes_.end()) {
      throw InvalidArgument("classes must be strictly increasing");
    }
    if (weights.size() != classes_.size() * dim || bias.size() != classes_.size()) {
      throw InvalidArgument("parameter shape does not match classes x dim");
    }
    std::copy(weights.begin(), weights.end(), params_.values.begin());
    std::copy(bias.begin(), bias.end(), params_.values.begin() + static_cast<std::ptrdiff_t>(weights.size()));
    for (double v : params_.values) {
      if (!std::isfinite(v)) throw InvalidArgument("non-finite model parameter");
    }
  }

  static LinearClassifier fit(std::span<const SparseVector> X, std::span<const int> y, const TrainOptions& opts = {});

  const std::vector<int>& classes() const noexcept { return classes_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::size_t dim() const noexcept { return params_.dim; }
  double reg_C() const noexcept { return reg_C_; }
  const TrainMeta& meta() const noexcept { return meta_; }
  const Parameters& parameters() const noexcept { return params_; }
  std::span<const double> weights() const noexcept { return params_.weights(); }
  std::span<const double> bias() const noexcept { return params_.biases(); }

  std::vector<double> decision_function(const SparseVector& x) const {
    check_input(x);
    std::vector<double> z(num_classes());
    detail::logits(params_, x, z);
    return z;
  }

  std::vector<double> predict_proba(const SparseVector& x) const {
    auto z = decision_function(x);
    detail::softmax_inplace(z);
    return z;
  }

  int predict(const SparseVector& x) const { return classes_[argmax(predict_proba(x))]; }

  // First index of the maximum, so ties resolve toward the smaller class id.
  static std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (v[k] > v[best]) best = k;
    }
    return best;
  }

  std::size_t class_index(int id) const {
    auto it = std::lower_bound(classes_.begin(), classes_.end(), id);
    if (it == classes_.end() || *it != id) throw InvalidArgument("unknown class id " + std::to_string(id));
    return static_cast<std::size_t>(it - classes_.begin());
  }

 private:
  void check_input(const SparseVector& x) const {
    if (x.dim != params_.dim) {
      throw InvalidArgument("input dimension " + std::to_string(x.dim) + " does not match model dimension " +
                            std::to_string(params_.dim));
    }
    if (!x.entries.empty() && x.entries.back().index >= params_.dim) {
      throw InvalidArgument("sparse index out of range");
    }
  }

  std::vector<int> classes_;
  Parameters params_;
  double reg_C_ = 1.0;
  TrainMeta meta_;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Uniform double in [-1, 1) from the top 53 bits of a 64-bit draw.
inline double symmetric_unit(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace detail

struct MinimizeResult {
  Parameters params;
  TrainMeta meta;
};

inline MinimizeResult minimize_objective(const Problem& prob, Parameters start, const TrainOptions& opts) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 60;

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;

  Parameters x = std::move(start);
  Parameters g;
  double f = objective_and_gradient(x, prob, &g);
  if (!std::isfinite(f)) throw TrainingError("non-finite objective at the starting point");

  TrainMeta meta;
  meta.objective_trace.push_back(f);
  const std::size_t n = x.values.size();
  std::vector<double> d(n), alpha_buf;
  Parameters trial(prob.num_classes, prob.dim);
  Parameters trial_grad;

  auto finish = [&](StopReason reason) {
    meta.objective = f;
    meta.gradient_norm_inf = norm_inf(g.values);
    meta.stop = reason;
    return MinimizeResult{std::move(x), std::move(meta)};
  };

  for (int iter = 0;; ++iter) {
    if (norm_inf(g.values) < opts.gradient_tolerance) return finish(StopReason::kGradientTolerance);
    if (iter >= opts.max_iterations) return finish(StopReason::kIterationCap);

    bool steepest = memory.empty();
    for (;;) {
      // Two-loop recursion over the stored curvature pairs.
      for (std::size_t i = 0; i < n; ++i) d[i] = -g.values[i];
      if (!steepest) {
        alpha_buf.assign(memory.size(), 0.0);
        for (std::size_t m = memory.size(); m-- > 0;) {
          alpha_buf[m] = memory[m].rho * detail::dot(memory[m].s, d);
          for (std::size_t i = 0; i < n; ++i) d[i] -= alpha_buf[m] * memory[m].y[i];
        }
        const auto& last = memory.back();
        const double gamma = detail::dot(last.s, last.y) / detail::dot(last.y, last.y);
        for (double& v : d) v *= gamma;
        for (std::size_t m = 0; m < memory.size(); ++m) {
          const double beta = memory[m].rho * detail::dot(memory[m].y, d);
          for (std::size_t i = 0; i < n; ++i) d[i] += (alpha_buf[m] - beta) * memory[m].s[i];
        }
      }
      double slope = detail::dot(g.values, d);
      if (slope >= 0.0) {
        if (steepest) return finish(StopReason::kStalled);
        memory.clear();
        steepest = true;
        continue;
      }

      double step = 1.0;
      bool accepted = false;
      double f_trial = 0.0;
      for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) trial.values[i] = x.values[i] + step * d[i];
        f_trial = objective_and_gradient(trial, prob, &trial_grad);
        if (std::isfinite(f_trial) && f_trial <= f + kArmijo * step * slope) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        if (steepest) return finish(StopReason::kStalled);
        memory.clear();
        steepest = true;
        continue;
      }

      Pair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
      for (std::size_t i = 0; i < n; ++i) {
        pair.s[i] = trial.values[i] - x.values[i];
        pair.y[i] = trial_grad.values[i] - g.values[i];
      }
      const double sy = detail::dot(pair.s, pair.y);
      if (sy > 1e-12 * std::sqrt(detail::dot(pair.y, pair.y) * detail::dot(pair.s, pair.s))) {
        pair.rho = 1.0 / sy;
        memory.push_back(std::move(pair));
        if (memory.size() > static_cast<std::size_t>(std::max(opts.history, 1))) memory.pop_front();
      }
      assert(f_trial <= f);
      std::swap(x.values, trial.values);
      g = std::move(trial_grad);
      f = f_trial;
      meta.iterations = iter + 1;
      meta.objective_trace.push_back(f);
      break;
    }
  }
}

inline LinearClassifier LinearClassifier::fit(std::span<const SparseVector> X, std::span<const int> y,
                                              const TrainOptions& opts) {
  if (X.size() != y.size()) throw InvalidArgument("feature and label counts differ");
  if (X.size() < 2) throw TrainingError("need at least two training samples");

  std::vector<int> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw TrainingError("degenerate training set: all labels identical");

  std::vector<std::size_t> y_index(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y_index[i] = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin());
  }

  const std::size_t dim = X.front().dim;
  std::vector<double> sample_weights;
  if (opts.class_weighting == ClassWeighting::kInverseFrequency) {
    std::vector<std::size_t> counts(classes.size(), 0);
    for (auto k : y_index) ++counts[k];
    sample_weights.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      sample_weights[i] = static_cast<double>(y.size()) / (static_cast<double>(classes.size()) * counts[y_index[i]]);
    }
  }

  Problem prob{X, y_index, classes.size(), dim, opts.reg_C, sample_weights};
  detail::validate_problem(prob);

  Parameters start(classes.size(), dim);
  if (opts.noise_init) {
    std::mt19937_64 gen(opts.seed);
    for (double& v : start.values) v = opts.noise_scale * detail::symmetric_unit(gen);
  }

  auto result = minimize_objective(prob, std::move(start), opts);
  return LinearClassifier(std::move(classes), dim,
                          std::vector<double>(result.params.weights().begin(), result.params.weights().end()),
                          std::vector<double>(result.params.biases().begin(), result.params.biases().end()),
                          opts.reg_C, std::move(result.meta));
}

}  // namespace triage

#endif  // TRIAGE_LINCLF_HPP
