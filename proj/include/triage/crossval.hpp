#ifndef TRIAGE_CROSSVAL_HPP
#define TRIAGE_CROSSVAL_HPP

// Shuffled k-fold cross-validation.
//
// Fold plans are portable across implementations: indices 0..n-1 are
// shuffled with a Fisher-Yates pass (i = n-1 down to 1, j uniform in [0, i])
// driven by std::mt19937_64 seeded with the plan seed. j is drawn by
// rejection: draw r until r < 2^64 - (2^64 mod (i+1)), then j = r mod (i+1).
// The shuffled order is cut into k contiguous blocks; the first n mod k
// blocks hold ceil(n/k) indices, the rest floor(n/k).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/linclf.hpp"
#include "triage/metrics.hpp"
#include "triage/textvec.hpp"

namespace triage {

// Uniform integer in [0, bound) by rejection sampling on 64-bit draws.
inline std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t excess = (std::numeric_limits<std::uint64_t>::max() - bound + 1) % bound;  // 2^64 mod bound
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - excess;               // accept r <= limit
  std::uint64_t r;
  do {
    r = gen();
  } while (r > limit);
  return r % bound;
}

inline void seeded_shuffle(std::span<std::size_t> items, std::mt19937_64& gen) {
  for (std::size_t i = items.size(); i-- > 1;) {
    const auto j = static_cast<std::size_t>(uniform_below(gen, i + 1));
    std::swap(items[i], items[j]);
  }
}

struct FoldPlan {
  std::uint64_t seed = 42;
  std::size_t k = 5;
  bool stratified = false;
  std::vector<std::size_t> assignments;  // fold index per sample

  std::size_t size() const noexcept { return assignments.size(); }

  std::vector<std::size_t> validation_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> train_indices(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
  }

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

inline FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("fold count must be at least 2");
  if (n < k) throw InvalidArgument("cannot split " + std::to_string(n) + " samples into " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 gen(seed);
  seeded_shuffle(order, gen);

  FoldPlan plan;
  plan.seed = seed;
  plan.k = k;
  plan.assignments.assign(n, 0);
  const std::size_t base = n / k, extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) plan.assignments[order[pos++]] = f;
  }
  return plan;
}

// Label-balanced variant: each label's indices are shuffled (labels in
// ascending order, one shared generator) and the concatenation is dealt to
// folds round-robin. Fold sizes still differ by at most one.
inline FoldPlan make_stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (k < 2) throw InvalidArgument("fold count must be at least 2");
  if (n < k) throw InvalidArgument("cannot split " + std::to_string(n) + " samples into " + std::to_string(k) + " folds");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  std::mt19937_64 gen(seed);
  FoldPlan plan;
  plan.seed = seed;
  plan.k = k;
  plan.stratified = true;
  plan.assignments.assign(n, 0);
  std::size_t pos = 0;
  for (auto& [label, idx] : groups) {
    seeded_shuffle(idx, gen);
    for (auto i : idx) plan.assignments[i] = pos++ % k;
  }
  return plan;
}

enum class PipelineKind { kLogisticRegression, kMajority };

inline const char* to_string(PipelineKind k) noexcept {
  return k == PipelineKind::kMajority ? "majority" : "tfidf_logreg";
}

struct PipelineConfig {
  PipelineKind kind = PipelineKind::kLogisticRegression;
  EvalMode mode = EvalMode::kMulticlass;
  std::size_t max_features = 10000;
  TrainOptions train;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::size_t vocabulary_size = 0;
  int iterations = 0;
  std::string stop_reason;
  EvalReport report;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over folds
  double min = 0.0;
  double max = 0.0;
};

struct CvResult {
  PipelineConfig config;
  FoldPlan plan;
  std::vector<FoldResult> folds;
  std::map<std::string, MetricSummary> aggregate;
};

inline MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

// Called once per fold with the training indices and the vectorizer fitted
// on them (majority pipelines fit no vectorizer; they pass an empty model).
using FoldObserver = std::function<void(std::size_t fold, std::span<const std::size_t> train, const TfIdfModel&)>;

namespace detail {

inline int target_of(SuspiciousLevel level, EvalMode mode) {
  return mode == EvalMode::kBinary ? to_int(binarize(level)) : to_int(level);
}

inline FoldResult run_fold(const Dataset& data, std::span<const int> targets, const PipelineConfig& config,
                           const FoldPlan& plan, std::size_t fold, const FoldObserver& observer) {
  const auto train = plan.train_indices(fold);
  const auto valid = plan.validation_indices(fold);
  const auto& space = config.mode == EvalMode::kBinary ? binary_space() : level_space();

  std::vector<int> y_train, y_valid;
  for (auto i : train) y_train.push_back(targets[i]);
  for (auto i : valid) y_valid.push_back(targets[i]);

  FoldResult result;
  result.fold = fold;
  result.train_size = train.size();
  result.validation_size = valid.size();

  std::vector<int> predicted;
  std::vector<double> scores;
  if (config.kind == PipelineKind::kMajority) {
    const int majority = most_frequent<int>(y_train);
    const double prior = static_cast<double>(std::count(y_train.begin(), y_train.end(), 1)) /
                         static_cast<double>(y_train.size());
    predicted.assign(valid.size(), majority);
    scores.assign(valid.size(), prior);
    result.stop_reason = "none";
    if (observer) observer(fold, train, TfIdfModel{});
  } else {
    std::vector<std::string> train_texts;
    train_texts.reserve(train.size());
    for (auto i : train) train_texts.push_back(data[i].text);
    const auto vectorizer = fit_tfidf(train_texts, config.max_features);
    if (observer) observer(fold, train, vectorizer);
    const auto X_train = vectorizer.transform_all(train_texts);
    const auto model = LinearClassifier::fit(X_train, y_train, config.train);
    result.vocabulary_size = vectorizer.dim();
    result.iterations = model.meta().iterations;
    result.stop_reason = to_string(model.meta().stop);
    for (auto i : valid) {
      const auto x = vectorizer.transform(data[i].text);
      const auto proba = model.predict_proba(x);
      predicted.push_back(model.classes()[LinearClassifier::argmax(proba)]);
      if (config.mode == EvalMode::kBinary) scores.push_back(proba[model.class_index(1)]);
    }
  }
  result.report = evaluate(y_valid, predicted, space, config.mode,
                           config.mode == EvalMode::kBinary ? std::span<const double>(scores) : std::span<const double>{});
  return result;
}

}  // namespace detail

// Runs every fold (optionally on `threads` workers) and aggregates in fold
// order. The vectorizer of each fold is fitted on that fold's training texts only.
inline CvResult run_cv(const Dataset& data, const PipelineConfig& config, const FoldPlan& plan,
                       const FoldObserver& observer = {}, unsigned threads = 1) {
  if (plan.size() != data.size()) throw InvalidArgument("fold plan size does not match dataset size");
  std::vector<int> targets;
  targets.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].label) throw InvalidArgument("post '" + data[i].id + "' is unlabeled; cross-validation needs labels");
    targets.push_back(detail::target_of(*data[i].label, config.mode));
  }
  const auto sizes = plan.fold_sizes();
  if (std::any_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s == 0; })) {
    throw InvalidArgument("fold plan contains an empty fold");
  }

  CvResult cv;
  cv.config = config;
  cv.plan = plan;
  cv.folds.resize(plan.k);
  std::vector<std::exception_ptr> errors(plan.k);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < plan.k; f = next++) {
      try {
        cv.folds[f] = detail::run_fold(data, targets, config, plan, f, observer);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(plan.k)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto collect = [&](auto&& get) {
    std::vector<double> v;
    for (const auto& f : cv.folds) v.push_back(get(f));
    return summarize(v);
  };
  cv.aggregate["macro_f1"] = collect([](const FoldResult& f) { return f.report.macro_f1; });
  if (config.mode == EvalMode::kBinary) {
    cv.aggregate["f1"] = collect([](const FoldResult& f) { return f.report.binary->f1; });
    cv.aggregate["roc_auc"] = collect([](const FoldResult& f) { return f.report.binary->roc_auc; });
    cv.aggregate["auc_pr"] = collect([](const FoldResult& f) { return f.report.binary->auc_pr; });
  }
  return cv;
}

}  // namespace triage

#endif  // TRIAGE_CROSSVAL_HPP
