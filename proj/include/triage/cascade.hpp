#ifndef TRIAGE_CASCADE_HPP
#define TRIAGE_CASCADE_HPP

// Two-stage inference. A binary TF-IDF + logistic filter scores every post
// with P(suspicious); posts scoring below the threshold are emitted as level 1
// right away, the rest are sent to a second-stage 3-class classifier.
//
// Stage-2 wire protocol (JSON, one object per request/response):
//   request:  {"id": string, "text": string}
//   response: {"id": string, "level": 1|2|3,
//              "probabilities": {"1": p, "2": p, "3": p}}   (optional)

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "triage/bundle.hpp"
#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/metrics.hpp"

namespace triage {

struct Stage2Request {
  std::string id;
  std::string text;
};

struct Stage2Response {
  std::string id;
  SuspiciousLevel level = SuspiciousLevel::kNotSuspicious;
  std::optional<std::array<double, 3>> probabilities;

  friend bool operator==(const Stage2Response&, const Stage2Response&) = default;
};

// Either a response or the reason there is none.
struct Stage2Result {
  std::optional<Stage2Response> response;
  std::string error;

  bool ok() const noexcept { return response.has_value(); }
};

inline constexpr double kProbabilitySumTolerance = 1e-6;

inline nlohmann::json request_to_json(const Stage2Request& r) { return {{"id", r.id}, {"text", r.text}}; }

inline Stage2Request request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("request must be a JSON object");
  auto id = j.find("id");
  auto text = j.find("text");
  if (id == j.end() || !id->is_string()) throw FormatError("request needs a string 'id'");
  if (text == j.end() || !text->is_string()) throw FormatError("request needs a string 'text'");
  return {id->get<std::string>(), text->get<std::string>()};
}

inline nlohmann::json response_to_json(const Stage2Response& r) {
  nlohmann::json j = {{"id", r.id}, {"level", to_int(r.level)}};
  if (r.probabilities) {
    const auto& p = *r.probabilities;
    j["probabilities"] = {{"1", p[0]}, {"2", p[1]}, {"3", p[2]}};
  }
  return j;
}

// Validates shape, level domain, probability sum and the id echo.
inline Stage2Response response_from_json(const nlohmann::json& j, std::string_view expected_id) {
  if (!j.is_object()) throw FormatError("response must be a JSON object");
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw FormatError("response needs a string 'id'");
  if (id->get_ref<const std::string&>() != expected_id) {
    throw FormatError("response id '" + id->get<std::string>() + "' does not echo request id '" +
                      std::string(expected_id) + "'");
  }
  auto level = j.find("level");
  if (level == j.end() || !level->is_number_integer()) throw FormatError("response needs an integer 'level'");
  auto parsed = level_from_int(level->get<long long>());
  if (!parsed) throw FormatError("response level " + level->dump() + " outside {1,2,3}");

  Stage2Response r{id->get<std::string>(), *parsed, std::nullopt};
  if (auto probs = j.find("probabilities"); probs != j.end() && !probs->is_null()) {
    if (!probs->is_object()) throw FormatError("'probabilities' must be an object");
    std::array<double, 3> p{};
    double sum = 0.0;
    for (int k = 1; k <= 3; ++k) {
      auto it = probs->find(std::to_string(k));
      if (it == probs->end() || !it->is_number()) throw FormatError("'probabilities' lacks key \"" + std::to_string(k) + "\"");
      p[k - 1] = it->get<double>();
      if (!(p[k - 1] >= 0.0 && p[k - 1] <= 1.0)) throw FormatError("probability outside [0, 1]");
      sum += p[k - 1];
    }
    if (std::abs(sum - 1.0) > kProbabilitySumTolerance) throw FormatError("probabilities do not sum to 1");
    r.probabilities = p;
  }
  return r;
}

// Second-stage classifier. Results come back in request order; an
// implementation may keep up to `max_in_flight` requests outstanding.
class Stage2Classifier {
 public:
  virtual ~Stage2Classifier() = default;
  virtual std::vector<Stage2Result> classify(std::span<const Stage2Request> requests, std::size_t max_in_flight) = 0;
  virtual std::string describe() const = 0;
};

// Response produced by a multiclass bundle; shared by the builtin stage 2,
// the serve endpoint and the subprocess worker.
inline Stage2Response classify_with_bundle(const ModelBundle& model, const Stage2Request& request) {
  const auto proba = model.predict_proba(request.text);
  const auto& classes = model.classifier.classes();
  Stage2Response r;
  r.id = request.id;
  r.level = level_or_throw(classes[LinearClassifier::argmax(proba)]);
  std::array<double, 3> p{};
  for (std::size_t k = 0; k < classes.size(); ++k) p[static_cast<std::size_t>(classes[k] - 1)] = proba[k];
  r.probabilities = p;
  return r;
}

inline void require_multiclass_stage2(const ModelBundle& model) {
  if (model.mode != EvalMode::kMulticlass) throw InvalidArgument("a stage-2 model must be a multiclass bundle");
  for (int c : model.classifier.classes()) {
    if (!level_from_int(c)) throw InvalidArgument("stage-2 model has class " + std::to_string(c) + " outside {1,2,3}");
  }
}

// In-process stage 2 backed by a multiclass bundle. Requests are spread over
// up to max_in_flight threads; each result lands in its request's slot.
class BuiltinStage2 final : public Stage2Classifier {
 public:
  explicit BuiltinStage2(std::shared_ptr<const ModelBundle> model) : model_(std::move(model)) {
    require_multiclass_stage2(*model_);
  }

  std::vector<Stage2Result> classify(std::span<const Stage2Request> requests, std::size_t max_in_flight) override {
    std::vector<Stage2Result> results(requests.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        try {
          results[i].response = classify_with_bundle(*model_, requests[i]);
        } catch (const std::exception& e) {
          results[i].error = e.what();
        }
      }
    };
    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(max_in_flight, 1), requests.size());
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    }
    return results;
  }

  std::string describe() const override { return "builtin"; }

 private:
  std::shared_ptr<const ModelBundle> model_;
};

// Remembers successful responses by post id so repeated runs over the same
// posts (threshold sweeps) query the wrapped classifier once per post.
class CachingStage2 final : public Stage2Classifier {
 public:
  explicit CachingStage2(Stage2Classifier& inner) : inner_(inner) {}

  std::vector<Stage2Result> classify(std::span<const Stage2Request> requests, std::size_t max_in_flight) override {
    std::vector<Stage2Result> results(requests.size());
    std::vector<Stage2Request> missing;
    std::vector<std::size_t> missing_at;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      if (auto it = cache_.find(requests[i].id); it != cache_.end()) {
        results[i] = it->second;
      } else {
        missing.push_back(requests[i]);
        missing_at.push_back(i);
      }
    }
    if (!missing.empty()) {
      auto fresh = inner_.classify(missing, max_in_flight);
      for (std::size_t m = 0; m < fresh.size(); ++m) {
        cache_[missing[m].id] = fresh[m];
        results[missing_at[m]] = std::move(fresh[m]);
      }
    }
    return results;
  }

  std::string describe() const override { return inner_.describe(); }

 private:
  Stage2Classifier& inner_;
  std::unordered_map<std::string, Stage2Result> cache_;
};

struct Stage2Endpoint {
  enum class Kind { kBuiltin, kSubprocess, kHttp };
  Kind kind = Kind::kBuiltin;
  std::string target;  // command line or base URL

  // "builtin", "cmd:<command line>", "http://host:port[/prefix]" or "http:<url>".
  static Stage2Endpoint parse(std::string_view spec) {
    if (spec == "builtin") return {Kind::kBuiltin, ""};
    if (spec.starts_with("cmd:")) {
      if (spec.size() == 4) throw InvalidArgument("empty stage-2 command");
      return {Kind::kSubprocess, std::string(spec.substr(4))};
    }
    if (spec.starts_with("http://")) return {Kind::kHttp, std::string(spec)};
    if (spec.starts_with("http:")) {
      auto rest = spec.substr(5);
      if (rest.empty()) throw InvalidArgument("empty stage-2 URL");
      return {Kind::kHttp, rest.starts_with("http://") ? std::string(rest) : "http://" + std::string(rest)};
    }
    throw InvalidArgument("stage-2 endpoint must be builtin, cmd:<command> or http:<url>, got '" + std::string(spec) + "'");
  }

  std::string to_string() const {
    switch (kind) {
      case Kind::kBuiltin: return "builtin";
      case Kind::kSubprocess: return "cmd:" + target;
      case Kind::kHttp: return target;
    }
    return "";
  }
};

enum class FailurePolicy { kFail, kDowngrade };

inline const char* to_string(FailurePolicy p) noexcept { return p == FailurePolicy::kFail ? "fail" : "downgrade"; }

inline FailurePolicy failure_policy_from_string(std::string_view s) {
  if (s == "fail") return FailurePolicy::kFail;
  if (s == "downgrade") return FailurePolicy::kDowngrade;
  throw InvalidArgument("failure policy must be 'fail' or 'downgrade', got '" + std::string(s) + "'");
}

// Thresholds above 1 defer nothing; the upper bound only rejects typos.
inline constexpr double kMaxThreshold = 2.0;

struct CascadeConfig {
  double threshold = 0.5;
  Stage2Endpoint stage2;
  FailurePolicy failure_policy = FailurePolicy::kDowngrade;
  std::size_t max_in_flight = 4;
  double stage1_cost = 1.0;
  double stage2_cost = 1000.0;
  double timeout_seconds = 10.0;

  void validate() const {
    if (!(threshold >= 0.0 && threshold <= kMaxThreshold)) {
      throw InvalidArgument("threshold must lie in [0, " + std::to_string(kMaxThreshold) + "]");
    }
    if (max_in_flight < 1) throw InvalidArgument("max_in_flight must be at least 1");
    if (!(stage1_cost >= 0.0) || !(stage2_cost >= 0.0)) throw InvalidArgument("stage costs must be non-negative");
    if (stage2_cost < stage1_cost) throw InvalidArgument("stage-2 cost must be at least the stage-1 cost");
    if (!(timeout_seconds > 0.0)) throw InvalidArgument("timeout must be positive");
  }
};

enum class Stage { kStage1, kStage2 };

inline const char* to_string(Stage s) noexcept { return s == Stage::kStage1 ? "stage1" : "stage2"; }

struct CascadeOutcome {
  std::string id;
  SuspiciousLevel level = SuspiciousLevel::kNotSuspicious;
  Stage stage = Stage::kStage1;
  double stage1_score = 0.0;
  std::optional<std::array<double, 3>> stage2_probs;
  bool error = false;
  std::string error_message;

  friend bool operator==(const CascadeOutcome&, const CascadeOutcome&) = default;
};

struct CascadeReport {
  double threshold = 0.0;
  std::vector<CascadeOutcome> outcomes;
  std::size_t stage1_count = 0;
  std::size_t stage2_count = 0;
  std::size_t error_count = 0;
  double deferral_rate = 0.0;
  double total_cost = 0.0;
  std::optional<EvalReport> evaluation;
  std::optional<double> all_stage2_macro_f1;
  std::optional<double> degradation;  // all-stage-2 macro F1 minus cascade macro F1
};

// Filter scores P(suspicious) for every post.
inline std::vector<double> filter_scores(std::span<const Post> posts, const ModelBundle& filter) {
  if (filter.mode != EvalMode::kBinary || filter.classifier.num_classes() != 2) {
    throw InvalidArgument("the stage-1 filter must be a binary bundle");
  }
  std::vector<double> scores;
  scores.reserve(posts.size());
  for (const auto& p : posts) scores.push_back(filter.suspicious_score(filter.predict_proba(p.text)));
  return scores;
}

namespace detail {

inline CascadeOutcome outcome_from_stage2(const Post& post, double score, const Stage2Result& result,
                                          FailurePolicy policy) {
  CascadeOutcome o;
  o.id = post.id;
  o.stage = Stage::kStage2;
  o.stage1_score = score;
  if (result.ok()) {
    o.level = result.response->level;
    o.stage2_probs = result.response->probabilities;
    return o;
  }
  if (policy == FailurePolicy::kFail) {
    throw Stage2Error("stage 2 failed for post '" + post.id + "': " + result.error);
  }
  o.level = SuspiciousLevel::kDoubtful;
  o.error = true;
  o.error_message = result.error;
  return o;
}

inline void check_gate(const CascadeOutcome& o, double threshold) {
  const bool sound = o.stage == Stage::kStage1
                         ? (o.level == SuspiciousLevel::kNotSuspicious && o.stage1_score < threshold)
                         : o.stage1_score >= threshold;
  if (!sound) throw std::logic_error("cascade gate invariant violated for post '" + o.id + "'");
}

inline bool all_labeled(std::span<const Post> posts) {
  return std::all_of(posts.begin(), posts.end(), [](const Post& p) { return p.label.has_value(); });
}

inline double macro_f1_of(std::span<const Post> posts, std::span<const SuspiciousLevel> predicted) {
  std::vector<int> t, p;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    t.push_back(to_int(*posts[i].label));
    p.push_back(to_int(predicted[i]));
  }
  return macro_f1(t, p, level_space());
}

}  // namespace detail

struct CascadeRunOptions {
  // When labels are present, also classify the non-deferred posts with stage
  // 2 to measure the metric change against an all-stage-2 run.
  bool measure_degradation = true;
};

inline CascadeReport cascade_classify(std::span<const Post> posts, std::span<const double> scores,
                                      Stage2Classifier& stage2, const CascadeConfig& config,
                                      const CascadeRunOptions& options = {}) {
  config.validate();
  if (scores.size() != posts.size()) throw InvalidArgument("one filter score per post is required");

  CascadeReport report;
  report.threshold = config.threshold;
  report.outcomes.resize(posts.size());

  std::vector<Stage2Request> deferred;
  std::vector<std::size_t> deferred_at;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (scores[i] < config.threshold) {
      auto& o = report.outcomes[i];
      o.id = posts[i].id;
      o.level = SuspiciousLevel::kNotSuspicious;
      o.stage = Stage::kStage1;
      o.stage1_score = scores[i];
    } else {
      deferred.push_back({posts[i].id, posts[i].text});
      deferred_at.push_back(i);
    }
  }

  const auto results = stage2.classify(deferred, config.max_in_flight);
  if (results.size() != deferred.size()) throw Stage2Error("stage 2 returned the wrong number of results");
  for (std::size_t d = 0; d < deferred.size(); ++d) {
    const auto i = deferred_at[d];
    report.outcomes[i] = detail::outcome_from_stage2(posts[i], scores[i], results[d], config.failure_policy);
  }

  for (const auto& o : report.outcomes) {
    detail::check_gate(o, config.threshold);
    (o.stage == Stage::kStage1 ? report.stage1_count : report.stage2_count) += 1;
    report.error_count += o.error ? 1 : 0;
  }
  report.deferral_rate =
      posts.empty() ? 0.0 : static_cast<double>(report.stage2_count) / static_cast<double>(posts.size());
  report.total_cost = static_cast<double>(report.stage1_count) * config.stage1_cost +
                      static_cast<double>(report.stage2_count) * config.stage2_cost;

  if (!posts.empty() && detail::all_labeled(posts)) {
    std::vector<int> t, p;
    std::vector<SuspiciousLevel> cascade_levels;
    for (std::size_t i = 0; i < posts.size(); ++i) {
      t.push_back(to_int(*posts[i].label));
      p.push_back(to_int(report.outcomes[i].level));
      cascade_levels.push_back(report.outcomes[i].level);
    }
    report.evaluation = evaluate(t, p, level_space(), EvalMode::kMulticlass);

    if (options.measure_degradation) {
      // Deferred posts already carry their stage-2 answer; only the rest need one.
      std::vector<SuspiciousLevel> all_stage2 = cascade_levels;
      std::vector<Stage2Request> rest;
      std::vector<std::size_t> rest_at;
      for (std::size_t i = 0; i < posts.size(); ++i) {
        if (report.outcomes[i].stage == Stage::kStage1) {
          rest.push_back({posts[i].id, posts[i].text});
          rest_at.push_back(i);
        }
      }
      const auto extra = stage2.classify(rest, config.max_in_flight);
      for (std::size_t r = 0; r < rest.size(); ++r) {
        all_stage2[rest_at[r]] =
            detail::outcome_from_stage2(posts[rest_at[r]], scores[rest_at[r]], extra[r], config.failure_policy).level;
      }
      report.all_stage2_macro_f1 = detail::macro_f1_of(posts, all_stage2);
      report.degradation = *report.all_stage2_macro_f1 - report.evaluation->macro_f1;
    }
  }
  return report;
}

inline CascadeReport cascade_classify(std::span<const Post> posts, const ModelBundle& filter, Stage2Classifier& stage2,
                                      const CascadeConfig& config, const CascadeRunOptions& options = {}) {
  const auto scores = filter_scores(posts, filter);
  return cascade_classify(posts, scores, stage2, config, options);
}

struct SweepRow {
  double threshold = 0.0;
  double deferral_rate = 0.0;
  double total_cost = 0.0;
  double macro_f1 = 0.0;
  double degradation = 0.0;
  std::size_t errors = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double all_stage2_macro_f1 = 0.0;
};

// One cascade run per threshold over labeled posts. Stage-2 answers are
// cached by post id across the runs.
inline SweepReport threshold_sweep(std::span<const Post> posts, const ModelBundle& filter, Stage2Classifier& stage2,
                                   const CascadeConfig& config, std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("threshold grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw InvalidArgument("threshold grid must be sorted ascending");
  if (posts.empty()) throw InvalidArgument("threshold sweep needs at least one post");
  if (!detail::all_labeled(posts)) throw InvalidArgument("threshold sweep needs labeled posts");

  const auto scores = filter_scores(posts, filter);
  CachingStage2 cached(stage2);
  SweepReport sweep;
  bool have_baseline = false;
  for (double tau : grid) {
    auto cfg = config;
    cfg.threshold = tau;
    const auto run = cascade_classify(posts, scores, cached, cfg, {.measure_degradation = !have_baseline});
    if (!have_baseline) {
      sweep.all_stage2_macro_f1 = *run.all_stage2_macro_f1;
      have_baseline = true;
    }
    SweepRow row;
    row.threshold = tau;
    row.deferral_rate = run.deferral_rate;
    row.total_cost = run.total_cost;
    row.macro_f1 = run.evaluation->macro_f1;
    row.degradation = sweep.all_stage2_macro_f1 - row.macro_f1;
    row.errors = run.error_count;
    sweep.rows.push_back(row);
  }
  return sweep;
}

}  // namespace triage

#endif  // TRIAGE_CASCADE_HPP
