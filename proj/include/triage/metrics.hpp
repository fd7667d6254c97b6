#ifndef TRIAGE_METRICS_HPP
#define TRIAGE_METRICS_HPP

// Classification scores: confusion matrix, per-class precision/recall/F1,
// macro F1 over a fixed label space, binary F1, ROC-AUC (Mann-Whitney, ties
// count 1/2) and average precision.
//
// Any precision, recall or F1 of the form 0/0 is 0 and flagged. Macro F1 is
// averaged over the supplied label space, so absent classes pull it down.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/error.hpp"

namespace triage {

// Rows are truth, columns are predictions, both in label_space order.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<int> label_space)
      : labels_(std::move(label_space)), counts_(labels_.size() * labels_.size(), 0) {
    if (labels_.empty()) throw InvalidArgument("label space must not be empty");
    auto sorted = labels_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw InvalidArgument("label space contains duplicates");
    }
  }

  const std::vector<int>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::size_t index_of(int label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw InvalidArgument("label " + std::to_string(label) + " is not in the label space");
    return static_cast<std::size_t>(it - labels_.begin());
  }

  void add(int truth, int predicted) { ++counts_[index_of(truth) * size() + index_of(predicted)]; }

  std::uint64_t at(std::size_t truth_index, std::size_t predicted_index) const {
    return counts_[truth_index * size() + predicted_index];
  }

  std::uint64_t total() const noexcept { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

  std::vector<std::vector<std::uint64_t>> rows() const {
    std::vector<std::vector<std::uint64_t>> out(size());
    for (std::size_t r = 0; r < size(); ++r) {
      out[r].assign(counts_.begin() + static_cast<std::ptrdiff_t>(r * size()),
                    counts_.begin() + static_cast<std::ptrdiff_t>((r + 1) * size()));
    }
    return out;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<int> labels_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                        std::span<const int> label_space) {
  if (y_true.size() != y_pred.size()) {
    throw InvalidArgument("length mismatch: " + std::to_string(y_true.size()) + " truths vs " +
                          std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionMatrix cm(std::vector<int>(label_space.begin(), label_space.end()));
  for (std::size_t i = 0; i < y_true.size(); ++i) cm.add(y_true[i], y_pred[i]);
  return cm;
}

struct ClassScores {
  int label = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  bool zero_division = false;

  friend bool operator==(const ClassScores&, const ClassScores&) = default;
};

inline ClassScores class_scores(const ConfusionMatrix& cm, std::size_t k) {
  std::uint64_t tp = cm.at(k, k), fp = 0, fn = 0;
  for (std::size_t j = 0; j < cm.size(); ++j) {
    if (j == k) continue;
    fp += cm.at(j, k);
    fn += cm.at(k, j);
  }
  ClassScores s;
  s.label = cm.labels()[k];
  s.support = tp + fn;
  if (tp + fp > 0) {
    s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    s.zero_division = true;
  }
  if (tp + fn > 0) {
    s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    s.zero_division = true;
  }
  // 2PR/(P+R) written over counts; identical whenever P+R > 0.
  if (tp > 0) {
    s.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  } else {
    s.f1 = 0.0;
    s.zero_division = true;
  }
  return s;
}

inline std::vector<ClassScores> per_class_scores(const ConfusionMatrix& cm) {
  std::vector<ClassScores> out;
  out.reserve(cm.size());
  for (std::size_t k = 0; k < cm.size(); ++k) out.push_back(class_scores(cm, k));
  return out;
}

inline double macro_f1(const ConfusionMatrix& cm) {
  double sum = 0.0;
  for (std::size_t k = 0; k < cm.size(); ++k) sum += class_scores(cm, k).f1;
  return sum / static_cast<double>(cm.size());
}

inline double macro_f1(std::span<const int> y_true, std::span<const int> y_pred, std::span<const int> label_space) {
  if (y_true.empty()) throw InvalidArgument("macro F1 needs at least one sample");
  return macro_f1(confusion_matrix(y_true, y_pred, label_space));
}

inline std::vector<int> to_ints(std::span<const SuspiciousLevel> levels) {
  std::vector<int> out(levels.size());
  std::transform(levels.begin(), levels.end(), out.begin(), [](SuspiciousLevel l) { return to_int(l); });
  return out;
}

inline std::vector<int> to_ints(std::span<const BinaryLabel> labels) {
  std::vector<int> out(labels.size());
  std::transform(labels.begin(), labels.end(), out.begin(), [](BinaryLabel l) { return to_int(l); });
  return out;
}

inline const std::vector<int>& level_space() {
  static const std::vector<int> space = {1, 2, 3};
  return space;
}

inline const std::vector<int>& binary_space() {
  static const std::vector<int> space = {0, 1};
  return space;
}

struct BinaryF1 {
  double f1 = 0.0;
  bool zero_support = false;  // no true and no predicted positives
};

inline BinaryF1 binary_f1(std::span<const BinaryLabel> y_true, std::span<const BinaryLabel> y_pred) {
  const auto cm = confusion_matrix(to_ints(y_true), to_ints(y_pred), binary_space());
  const auto s = class_scores(cm, 1);
  return {s.f1, cm.at(1, 1) + cm.at(1, 0) + cm.at(0, 1) == 0};
}

namespace detail {

struct ScoredLabel {
  double score;
  bool positive;
};

// Sorted by descending score; equal scores are consumed as one block by callers.
inline std::vector<ScoredLabel> sort_by_score_desc(std::span<const BinaryLabel> y_true, std::span<const double> scores) {
  if (y_true.size() != scores.size()) throw InvalidArgument("label and score counts differ");
  std::vector<ScoredLabel> v(y_true.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(scores[i])) throw InvalidArgument("NaN score");
    v[i] = {scores[i], y_true[i] == BinaryLabel::kSuspicious};
  }
  std::sort(v.begin(), v.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  return v;
}

}  // namespace detail

inline double roc_auc(std::span<const BinaryLabel> y_true, std::span<const double> scores) {
  const auto v = detail::sort_by_score_desc(y_true, scores);
  const auto pos = static_cast<std::uint64_t>(std::count_if(v.begin(), v.end(), [](auto& s) { return s.positive; }));
  const std::uint64_t neg = v.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("AUC undefined: truth contains a single class");

  // Walk blocks from the lowest score upwards: each positive beats every
  // negative strictly below it and ties with negatives in its own block.
  // Credits are counted in halves so the sum stays an exact integer.
  std::uint64_t half_credits = 0;
  std::uint64_t neg_below = 0;
  std::size_t end = v.size();
  while (end > 0) {
    std::size_t begin = end - 1;
    while (begin > 0 && v[begin - 1].score == v[end - 1].score) --begin;
    std::uint64_t p = 0, n = 0;
    for (std::size_t i = begin; i < end; ++i) (v[i].positive ? p : n) += 1;
    half_credits += 2 * p * neg_below + p * n;
    neg_below += n;
    end = begin;
  }
  return static_cast<double>(half_credits) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// Average precision: sum over descending score thresholds of (R_k - R_{k-1}) * P_k.
inline double auc_pr(std::span<const BinaryLabel> y_true, std::span<const double> scores) {
  const auto v = detail::sort_by_score_desc(y_true, scores);
  const auto pos = static_cast<std::uint64_t>(std::count_if(v.begin(), v.end(), [](auto& s) { return s.positive; }));
  if (pos == 0) throw InvalidArgument("average precision undefined: no positive samples");

  double ap = 0.0;
  std::uint64_t tp = 0, seen = 0, tp_prev = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) {
      tp += v[j].positive ? 1 : 0;
      ++j;
    }
    seen += j - i;
    if (tp > tp_prev) {
      const double precision = static_cast<double>(tp) / static_cast<double>(seen);
      ap += (static_cast<double>(tp - tp_prev) / static_cast<double>(pos)) * precision;
      tp_prev = tp;
    }
    i = j;
  }
  return ap;
}

enum class EvalMode { kMulticlass, kBinary };

inline const char* to_string(EvalMode m) noexcept { return m == EvalMode::kBinary ? "binary" : "multiclass"; }

struct BinaryMetrics {
  double f1 = 0.0;
  double roc_auc = 0.0;
  double auc_pr = 0.0;
  bool zero_support = false;
};

struct EvalReport {
  EvalMode mode = EvalMode::kMulticlass;
  ConfusionMatrix confusion;
  std::vector<ClassScores> per_class;
  double macro_f1 = 0.0;
  std::optional<BinaryMetrics> binary;
};

// Binary mode expects labels in {0, 1} (1 = suspicious), a {0, 1} label space
// and one score per sample (higher = more suspicious).
inline EvalReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, std::span<const int> label_space,
                           EvalMode mode, std::span<const double> scores = {}) {
  if (y_true.empty()) throw InvalidArgument("cannot evaluate zero samples");
  EvalReport report;
  report.mode = mode;
  report.confusion = confusion_matrix(y_true, y_pred, label_space);
  report.per_class = per_class_scores(report.confusion);
  double sum = 0.0;
  for (const auto& s : report.per_class) sum += s.f1;
  report.macro_f1 = sum / static_cast<double>(report.per_class.size());

  if (mode == EvalMode::kBinary) {
    if (!std::ranges::equal(label_space, binary_space())) throw InvalidArgument("binary mode needs label space {0, 1}");
    if (scores.size() != y_true.size()) throw InvalidArgument("binary mode needs one score per sample");
    std::vector<BinaryLabel> t(y_true.size()), p(y_pred.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<BinaryLabel>(y_true[i]);
      p[i] = static_cast<BinaryLabel>(y_pred[i]);
    }
    BinaryMetrics b;
    const auto f1 = binary_f1(t, p);
    b.f1 = f1.f1;
    b.zero_support = f1.zero_support;
    b.roc_auc = roc_auc(t, scores);
    b.auc_pr = auc_pr(t, scores);
    report.binary = b;
  }
  return report;
}

}  // namespace triage

#endif  // TRIAGE_METRICS_HPP
