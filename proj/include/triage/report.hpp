#ifndef TRIAGE_REPORT_HPP
#define TRIAGE_REPORT_HPP

// JSON forms of evaluation, cross-validation and cascade reports. Every
// document carries format_version; doubles are dumped in shortest
// round-trip form.

#include <json.hpp>

#include "triage/cascade.hpp"
#include "triage/crossval.hpp"
#include "triage/metrics.hpp"

namespace triage {

inline constexpr int kReportFormatVersion = 1;

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& s : r.per_class) {
    per_class.push_back({{"label", s.label},
                         {"precision", s.precision},
                         {"recall", s.recall},
                         {"f1", s.f1},
                         {"support", s.support},
                         {"zero_division", s.zero_division}});
  }
  nlohmann::json j = {
      {"mode", to_string(r.mode)},
      {"label_space", r.confusion.labels()},
      {"confusion", r.confusion.rows()},
      {"samples", r.confusion.total()},
      {"per_class", std::move(per_class)},
      {"macro_f1", r.macro_f1},
  };
  if (r.binary) {
    j["binary"] = {{"f1", r.binary->f1},
                   {"roc_auc", r.binary->roc_auc},
                   {"auc_pr", r.binary->auc_pr},
                   {"zero_support", r.binary->zero_support}};
  }
  return j;
}

inline nlohmann::json eval_report_document(const EvalReport& r) {
  auto j = to_json(r);
  j["format_version"] = kReportFormatVersion;
  return j;
}

inline nlohmann::json to_json(const MetricSummary& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}};
}

inline nlohmann::json to_json(const CvResult& cv) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : cv.folds) {
    folds.push_back({{"fold", f.fold},
                     {"train_size", f.train_size},
                     {"validation_size", f.validation_size},
                     {"vocabulary_size", f.vocabulary_size},
                     {"iterations", f.iterations},
                     {"stop", f.stop_reason},
                     {"report", to_json(f.report)}});
  }
  nlohmann::json aggregate = nlohmann::json::object();
  for (const auto& [name, s] : cv.aggregate) aggregate[name] = to_json(s);
  return {
      {"format_version", kReportFormatVersion},
      {"pipeline",
       {{"kind", to_string(cv.config.kind)},
        {"mode", to_string(cv.config.mode)},
        {"max_features", cv.config.max_features},
        {"reg_C", cv.config.train.reg_C},
        {"max_iterations", cv.config.train.max_iterations},
        {"gradient_tolerance", cv.config.train.gradient_tolerance},
        {"class_weighting", cv.config.train.class_weighting == ClassWeighting::kInverseFrequency ? "inverse_frequency" : "none"}}},
      {"plan",
       {{"seed", cv.plan.seed},
        {"k", cv.plan.k},
        {"stratified", cv.plan.stratified},
        {"prng", "mt19937_64+fisher_yates+rejection"},
        {"assignments", cv.plan.assignments}}},
      {"folds", std::move(folds)},
      {"aggregate", std::move(aggregate)},
  };
}

inline nlohmann::json to_json(const CascadeOutcome& o) {
  nlohmann::json j = {{"id", o.id}, {"level", to_int(o.level)}, {"stage", to_string(o.stage)}, {"stage1_score", o.stage1_score}};
  if (o.stage2_probs) {
    const auto& p = *o.stage2_probs;
    j["stage2_probabilities"] = {{"1", p[0]}, {"2", p[1]}, {"3", p[2]}};
  }
  if (o.error) j["error"] = o.error_message;
  return j;
}

inline nlohmann::json cascade_config_json(const CascadeConfig& c) {
  return {{"threshold", c.threshold},
          {"stage2", c.stage2.to_string()},
          {"failure_policy", to_string(c.failure_policy)},
          {"max_in_flight", c.max_in_flight},
          {"stage_costs", {c.stage1_cost, c.stage2_cost}},
          {"timeout_seconds", c.timeout_seconds}};
}

inline nlohmann::json to_json(const CascadeReport& r, const CascadeConfig& config) {
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : r.outcomes) outcomes.push_back(to_json(o));
  nlohmann::json j = {
      {"format_version", kReportFormatVersion},
      {"config", cascade_config_json(config)},
      {"threshold", r.threshold},
      {"posts", r.outcomes.size()},
      {"stage1_count", r.stage1_count},
      {"stage2_count", r.stage2_count},
      {"error_count", r.error_count},
      {"deferral_rate", r.deferral_rate},
      {"total_cost", r.total_cost},
      {"outcomes", std::move(outcomes)},
  };
  if (r.evaluation) j["evaluation"] = to_json(*r.evaluation);
  if (r.all_stage2_macro_f1) j["all_stage2_macro_f1"] = *r.all_stage2_macro_f1;
  if (r.degradation) j["degradation"] = *r.degradation;
  return j;
}

inline nlohmann::json to_json(const SweepReport& s, const CascadeConfig& config) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : s.rows) {
    rows.push_back({{"threshold", row.threshold},
                    {"deferral_rate", row.deferral_rate},
                    {"total_cost", row.total_cost},
                    {"macro_f1", row.macro_f1},
                    {"degradation", row.degradation},
                    {"errors", row.errors}});
  }
  return {{"format_version", kReportFormatVersion},
          {"config", cascade_config_json(config)},
          {"all_stage2_macro_f1", s.all_stage2_macro_f1},
          {"sweep", std::move(rows)}};
}

}  // namespace triage

#endif  // TRIAGE_REPORT_HPP
