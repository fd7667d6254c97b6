// triage: train, evaluate and serve TF-IDF + logistic regression post
// classifiers, and run them as the cheap filter of a two-stage cascade.
//
// Every flag can also be set through the environment as TRIAGE_<FLAG>, with
// dashes turned into underscores (--max-features -> TRIAGE_MAX_FEATURES).
// A flag on the command line wins over the environment.

#include <signal.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "triage/bench.hpp"
#include "triage/bundle.hpp"
#include "triage/cascade.hpp"
#include "triage/corpus.hpp"
#include "triage/crossval.hpp"
#include "triage/metrics.hpp"
#include "triage/report.hpp"
#include "triage/serve.hpp"
#include "triage/transport.hpp"

namespace {

using nlohmann::json;
using namespace triage;

constexpr const char* kErrorPrefix = "triage: error: ";

// Writes to `path`, or standard output for "-" / empty.
void emit(const std::string& path, const std::string& contents) {
  if (path.empty() || path == "-") {
    std::cout << contents;
    std::cout.flush();
  } else {
    detail::write_file(path, contents);
  }
}

std::string env_name(std::string flag) {
  std::string out = "TRIAGE_";
  for (char c : flag) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

void bind_env(CLI::App& app) {
  for (CLI::Option* opt : app.get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names.front() == "help") continue;
    opt->envname(env_name(names.front()));
  }
}

TrainOptions train_options(double c, std::uint64_t seed, int max_iterations, const std::string& weighting) {
  TrainOptions opts;
  opts.reg_C = c;
  opts.seed = seed;
  opts.max_iterations = max_iterations;
  opts.class_weighting = weighting == "inverse_frequency" ? ClassWeighting::kInverseFrequency : ClassWeighting::kNone;
  return opts;
}

json probabilities_json(const ModelBundle& model, std::span<const double> proba) {
  json p = json::object();
  for (std::size_t k = 0; k < proba.size(); ++k) p[std::to_string(model.classifier.classes()[k])] = proba[k];
  return p;
}

json prediction_line(const ModelBundle& model, const Post& post) {
  const auto proba = model.predict_proba(post.text);
  const int cls = model.classifier.classes()[LinearClassifier::argmax(proba)];
  json j = {{"id", post.id}};
  j[model.mode == EvalMode::kBinary ? "binary" : "level"] = cls;
  j["probabilities"] = probabilities_json(model, proba);
  return j;
}

struct Prediction {
  int label = 0;
  double suspicious_score = 0.0;
};

// Predictions for `data` in the requested evaluation mode. A multiclass
// prediction evaluated in binary mode is collapsed: level >= 2 is suspicious
// and the score is P(2) + P(3).
Prediction read_prediction(const json& line, EvalMode mode, bool collapse) {
  const auto& probs = line.at("probabilities");
  if (line.contains("binary")) {
    if (mode != EvalMode::kBinary) throw InvalidArgument("binary predictions cannot be evaluated in multiclass mode");
    return {line.at("binary").get<int>(), probs.at("1").get<double>()};
  }
  const int level = line.at("level").get<int>();
  if (mode == EvalMode::kMulticlass) return {level, 0.0};
  if (!collapse) throw InvalidArgument("multiclass predictions in binary mode need --collapse");
  return {level >= 2 ? 1 : 0, probs.at("2").get<double>() + probs.at("3").get<double>()};
}

int cmd_train(const std::string& data_path, const std::string& out, std::size_t max_features, double c,
              std::uint64_t seed, bool binary, int max_iterations, const std::string& weighting) {
  const auto data = load_dataset(data_path);
  const auto mode = binary ? EvalMode::kBinary : EvalMode::kMulticlass;
  const auto bundle = train_bundle(data, mode, max_features, train_options(c, seed, max_iterations, weighting));
  save_bundle(bundle, out);
  const auto& meta = bundle.classifier.meta();
  std::cout << "trained " << to_string(mode) << " model on " << data.size() << " posts\n"
            << "  vocabulary: " << bundle.vectorizer.dim() << " terms (max_features " << max_features << ")\n"
            << "  classes: " << json(bundle.classifier.classes()).dump() << "\n"
            << "  reg_C: " << c << "  seed: " << seed << "\n"
            << "  iterations: " << meta.iterations << "  stop: " << to_string(meta.stop) << "\n"
            << "  final objective: " << json(meta.objective).dump()
            << "  gradient inf-norm: " << json(meta.gradient_norm_inf).dump() << "\n"
            << "  written: " << out << "\n";
  return 0;
}

int cmd_cv(const std::string& data_path, std::size_t folds, std::uint64_t seed, const std::string& report_path,
           bool binary, bool stratified, const std::string& pipeline, std::size_t max_features, double c,
           int max_iterations, const std::string& weighting, unsigned threads) {
  const auto data = load_dataset(data_path);
  PipelineConfig config;
  config.kind = pipeline == "majority" ? PipelineKind::kMajority : PipelineKind::kLogisticRegression;
  config.mode = binary ? EvalMode::kBinary : EvalMode::kMulticlass;
  config.max_features = max_features;
  config.train = train_options(c, seed, max_iterations, weighting);
  FoldPlan plan;
  if (stratified) {
    std::vector<int> y;
    for (auto l : data.labels()) y.push_back(binary ? to_int(binarize(l)) : to_int(l));
    plan = make_stratified_folds(y, folds, seed);
  } else {
    plan = make_folds(data.size(), folds, seed);
  }
  const auto cv = run_cv(data, config, plan, {}, threads);
  emit(report_path, to_json(cv).dump(2) + "\n");

  auto& log = report_path.empty() || report_path == "-" ? std::cerr : std::cout;
  log << folds << "-fold CV (" << to_string(config.kind) << ", " << to_string(config.mode) << ", seed " << seed
      << ", " << (stratified ? "stratified" : "shuffled") << ") on " << data.size() << " posts\n";
  for (const auto& [name, s] : cv.aggregate) {
    log << "  " << name << ": mean " << s.mean << "  std " << s.stddev << "  min " << s.min << "  max " << s.max
        << "\n";
  }
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input, const std::string& output) {
  const auto model = load_bundle(model_path);
  const auto data = load_dataset(input);
  std::string out;
  for (const auto& post : data) out += prediction_line(model, post).dump() + "\n";
  emit(output, out);
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& input, const std::string& predictions_path,
                 const std::string& report_path, bool binary, bool collapse) {
  const auto data = load_dataset(input);
  const auto mode = binary ? EvalMode::kBinary : EvalMode::kMulticlass;

  std::vector<json> lines;
  if (!predictions_path.empty()) {
    std::map<std::string, json> by_id;
    std::istringstream in(detail::read_file(predictions_path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::is_blank(line)) continue;
      try {
        auto j = json::parse(line);
        auto id = j.at("id").get<std::string>();
        by_id[std::move(id)] = std::move(j);
      } catch (const json::exception& e) {
        throw IngestError(line_no, std::string("bad prediction line: ") + e.what());
      }
    }
    for (const auto& post : data) {
      auto it = by_id.find(post.id);
      if (it == by_id.end()) throw InvalidArgument("no prediction for post '" + post.id + "'");
      lines.push_back(it->second);
    }
  } else {
    if (model_path.empty()) throw InvalidArgument("evaluate needs --model or --predictions");
    const auto model = load_bundle(model_path);
    if (model.mode == EvalMode::kBinary && mode == EvalMode::kMulticlass) {
      throw InvalidArgument("mode mismatch: a binary model cannot be evaluated in multiclass mode");
    }
    if (model.mode == EvalMode::kMulticlass && mode == EvalMode::kBinary && !collapse) {
      throw InvalidArgument("mode mismatch: binary evaluation of a multiclass model needs --collapse");
    }
    for (const auto& post : data) lines.push_back(prediction_line(model, post));
  }

  std::vector<int> truth, predicted;
  std::vector<double> scores;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data[i].label) throw InvalidArgument("post '" + data[i].id + "' is unlabeled; evaluation needs labels");
    truth.push_back(binary ? to_int(binarize(*data[i].label)) : to_int(*data[i].label));
    const auto p = read_prediction(lines[i], mode, collapse);
    predicted.push_back(p.label);
    scores.push_back(p.suspicious_score);
  }
  const auto report = evaluate(truth, predicted, binary ? binary_space() : level_space(), mode,
                               binary ? std::span<const double>(scores) : std::span<const double>{});
  emit(report_path, eval_report_document(report).dump(2) + "\n");
  auto& log = report_path.empty() || report_path == "-" ? std::cerr : std::cout;
  log << "macro F1: " << report.macro_f1 << "\n";
  if (report.binary) {
    log << "F1: " << report.binary->f1 << "  ROC-AUC: " << report.binary->roc_auc
        << "  AUC-PR: " << report.binary->auc_pr << "\n";
  }
  return 0;
}

struct CascadeFlags {
  std::string stage1_model;
  std::string stage2 = "builtin";
  std::string stage2_model;
  double threshold = 0.5;
  std::string failure_policy = "downgrade";
  std::size_t max_in_flight = 4;
  double stage1_cost = 1.0;
  double stage2_cost = 1000.0;
  double timeout = 10.0;

  void add_to(CLI::App* app, bool required) {
    auto* m = app->add_option("--stage1-model", stage1_model, "binary filter bundle");
    if (required) m->required();
    app->add_option("--stage2", stage2, "builtin | cmd:<command> | http:<url>");
    app->add_option("--stage2-model", stage2_model, "multiclass bundle for --stage2 builtin");
    app->add_option("--threshold", threshold, "defer posts with P(suspicious) >= threshold");
    app->add_option("--failure-policy", failure_policy, "fail | downgrade")->check(CLI::IsMember({"fail", "downgrade"}));
    app->add_option("--max-in-flight", max_in_flight, "concurrent stage-2 requests")->check(CLI::PositiveNumber);
    app->add_option("--stage1-cost", stage1_cost, "cost per stage-1 classification");
    app->add_option("--stage2-cost", stage2_cost, "cost per stage-2 classification");
    app->add_option("--timeout", timeout, "stage-2 timeout in seconds");
  }

  CascadeConfig config() const {
    CascadeConfig c;
    c.threshold = threshold;
    c.stage2 = Stage2Endpoint::parse(stage2);
    c.failure_policy = failure_policy_from_string(failure_policy);
    c.max_in_flight = max_in_flight;
    c.stage1_cost = stage1_cost;
    c.stage2_cost = stage2_cost;
    c.timeout_seconds = timeout;
    c.validate();
    return c;
  }

  std::unique_ptr<Stage2Classifier> make_stage2_client(const CascadeConfig& c) const {
    std::shared_ptr<const ModelBundle> builtin;
    if (c.stage2.kind == Stage2Endpoint::Kind::kBuiltin) {
      if (stage2_model.empty()) throw InvalidArgument("--stage2 builtin needs --stage2-model");
      builtin = std::make_shared<const ModelBundle>(load_bundle(stage2_model));
    }
    return make_stage2(c.stage2, c.timeout_seconds, std::move(builtin));
  }
};

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument("bad threshold '" + item + "' in --sweep");
    }
  }
  return grid;
}

int cmd_cascade(const CascadeFlags& flags, const std::string& input, const std::string& report_path,
                const std::string& sweep) {
  const auto config = flags.config();
  const auto filter = load_bundle(flags.stage1_model);
  const auto data = load_dataset(input);
  auto stage2 = flags.make_stage2_client(config);
  auto& log = report_path.empty() || report_path == "-" ? std::cerr : std::cout;

  if (!sweep.empty()) {
    const auto grid = parse_grid(sweep);
    const auto result = threshold_sweep(data.posts(), filter, *stage2, config, grid);
    emit(report_path, to_json(result, config).dump(2) + "\n");
    log << "threshold  deferral  total_cost  macro_f1  degradation\n";
    for (const auto& row : result.rows) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%9.4f  %8.4f  %10.1f  %8.4f  %+11.4f\n", row.threshold, row.deferral_rate,
                    row.total_cost, row.macro_f1, row.degradation);
      log << buf;
    }
    return 0;
  }

  const auto report = cascade_classify(data.posts(), filter, *stage2, config);
  emit(report_path, to_json(report, config).dump(2) + "\n");
  log << "cascade over " << data.size() << " posts at threshold " << config.threshold << " (stage 2: "
      << stage2->describe() << ")\n"
      << "  deferral rate: " << report.deferral_rate << "  total cost: " << report.total_cost
      << "  stage-2 errors: " << report.error_count << "\n";
  if (report.evaluation) log << "  macro F1: " << report.evaluation->macro_f1 << "\n";
  if (report.degradation) log << "  degradation vs all stage 2: " << *report.degradation << "\n";
  return 0;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const std::string& model_path, const CascadeFlags& flags, const std::string& addr,
              std::size_t max_body) {
  std::unique_ptr<ClassifyService> service;
  if (!model_path.empty()) {
    service = std::make_unique<ClassifyService>(std::make_shared<const ModelBundle>(load_bundle(model_path)));
  } else if (!flags.stage1_model.empty()) {
    const auto config = flags.config();
    service = std::make_unique<ClassifyService>(std::make_shared<const ModelBundle>(load_bundle(flags.stage1_model)),
                                                flags.make_stage2_client(config), config);
  } else {
    throw InvalidArgument("serve needs --model or --stage1-model with cascade flags");
  }

  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--addr must be host:port");
  const std::string host = addr.substr(0, colon);
  const int port = std::stoi(addr.substr(colon + 1));

  httplib::Server server;
  install_routes(server, *service, max_body);
  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + addr);
  g_server = &server;
  ::signal(SIGINT, stop_server);
  ::signal(SIGTERM, stop_server);
  std::cout << "listening on http://" << host << ":" << bound << " model " << service->model_digest() << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

int cmd_bench(const std::string& model_path, const std::string& input, unsigned threads, double duration,
              const std::string& report_path) {
  const auto model = load_bundle(model_path);
  const auto data = load_dataset(input);
  const auto texts = data.texts();
  std::size_t bytes = 0;
  for (const auto& t : texts) bytes += t.size();

  std::cout << "bench: " << texts.size() << " documents (mean " << bytes / std::max<std::size_t>(texts.size(), 1)
            << " bytes), " << duration << " s per level\n"
            << "threads  documents  docs/s      p50_ms   p99_ms   scaling\n";
  json levels = json::array();
  double base = 0.0;
  for (unsigned t = 1; t <= threads; ++t) {
    const auto level = bench_throughput(model, texts, t, std::chrono::duration<double>(duration));
    if (t == 1) base = level.docs_per_second;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%7u  %9llu  %10.1f  %7.4f  %7.4f  %6.2fx\n", level.threads,
                  static_cast<unsigned long long>(level.documents), level.docs_per_second, level.p50_ms, level.p99_ms,
                  base > 0.0 ? level.docs_per_second / base : 0.0);
    std::cout << buf;
    levels.push_back({{"threads", level.threads},
                      {"documents", level.documents},
                      {"seconds", level.seconds},
                      {"docs_per_second", level.docs_per_second},
                      {"p50_ms", level.p50_ms},
                      {"p99_ms", level.p99_ms}});
  }
  if (!report_path.empty()) {
    emit(report_path, json{{"format_version", kReportFormatVersion},
                           {"corpus_documents", texts.size()},
                           {"hardware_threads", std::thread::hardware_concurrency()},
                           {"levels", levels}}
                          .dump(2) +
                          "\n");
  }
  return 0;
}

// Stage-2 subprocess worker: JSON Lines requests on stdin, one response line
// per request on stdout, exit on end of input.
int cmd_stage2_worker(const std::string& model_path) {
  const auto model = load_bundle(model_path);
  require_multiclass_stage2(model);
  std::string line;
  while (std::getline(std::cin, line)) {
    if (detail::is_blank(line)) continue;
    json reply;
    try {
      reply = response_to_json(classify_with_bundle(model, request_from_json(json::parse(line))));
    } catch (const std::exception& e) {
      reply = {{"error", e.what()}};
    }
    std::cout << reply.dump() << '\n' << std::flush;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Suspicious-post triage: TF-IDF + logistic regression classifiers and cascade inference"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "triage 1.0.0");

  // train
  std::string data_path, out_path;
  std::size_t max_features = 10000;
  double reg_c = 1.0;
  std::uint64_t seed = 42;
  bool binary = false;
  int max_iterations = 1000;
  std::string weighting = "none";
  auto* train = app.add_subcommand("train", "fit a vectorizer + classifier and write a model bundle");
  train->add_option("--data", data_path, "labeled dataset (.jsonl or .csv)")->required();
  train->add_option("--out", out_path, "model bundle path")->required();
  train->add_option("--max-features", max_features, "vocabulary cap")->check(CLI::PositiveNumber);
  train->add_option("--c", reg_c, "inverse L2 regularization strength")->check(CLI::PositiveNumber);
  train->add_option("--seed", seed, "random seed (recorded in the bundle)");
  train->add_flag("--binary", binary, "collapse levels to suspicious (2,3) vs not (1)");
  train->add_option("--max-iterations", max_iterations, "optimizer iteration cap")->check(CLI::PositiveNumber);
  train->add_option("--class-weighting", weighting, "none | inverse_frequency")
      ->check(CLI::IsMember({"none", "inverse_frequency"}));

  // cv
  std::size_t folds = 5;
  std::string report_path, pipeline = "logreg";
  bool stratified = false;
  unsigned threads = 1;
  auto* cv = app.add_subcommand("cv", "shuffled k-fold cross-validation");
  cv->add_option("--data", data_path, "labeled dataset")->required();
  cv->add_option("--folds", folds, "fold count")->check(CLI::Range(2, 1000000));
  cv->add_option("--seed", seed, "shuffle seed");
  cv->add_option("--report", report_path, "CV report path (default stdout)");
  cv->add_flag("--binary", binary, "binary task");
  cv->add_flag("--stratified", stratified, "label-balanced folds");
  cv->add_option("--pipeline", pipeline, "logreg | majority")->check(CLI::IsMember({"logreg", "majority"}));
  cv->add_option("--max-features", max_features, "vocabulary cap")->check(CLI::PositiveNumber);
  cv->add_option("--c", reg_c, "inverse L2 regularization strength")->check(CLI::PositiveNumber);
  cv->add_option("--max-iterations", max_iterations, "optimizer iteration cap")->check(CLI::PositiveNumber);
  cv->add_option("--class-weighting", weighting, "none | inverse_frequency")
      ->check(CLI::IsMember({"none", "inverse_frequency"}));
  cv->add_option("--threads", threads, "folds run concurrently")->check(CLI::PositiveNumber);

  // predict
  std::string model_path, input_path, output_path;
  auto* predict = app.add_subcommand("predict", "write JSON Lines predictions");
  predict->add_option("--model", model_path, "model bundle")->required();
  predict->add_option("--input", input_path, "dataset to classify")->required();
  predict->add_option("--output", output_path, "predictions path (default stdout)");

  // evaluate
  std::string predictions_path;
  bool collapse = false;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a model or a predictions file against labels");
  evaluate_cmd->add_option("--model", model_path, "model bundle");
  evaluate_cmd->add_option("--predictions", predictions_path, "predictions JSONL from `predict`");
  evaluate_cmd->add_option("--input", input_path, "labeled dataset")->required();
  evaluate_cmd->add_option("--report", report_path, "report path (default stdout)");
  evaluate_cmd->add_flag("--binary", binary, "binary metrics (F1, ROC-AUC, AUC-PR)");
  evaluate_cmd->add_flag("--collapse", collapse, "allow binary evaluation of multiclass predictions");

  // cascade
  CascadeFlags cascade_flags;
  std::string sweep;
  auto* cascade_cmd = app.add_subcommand("cascade", "two-stage classification with a binary filter");
  cascade_flags.add_to(cascade_cmd, true);
  cascade_cmd->add_option("--input", input_path, "dataset to classify")->required();
  cascade_cmd->add_option("--report", report_path, "report path (default stdout)");
  cascade_cmd->add_option("--sweep", sweep, "comma-separated ascending thresholds");

  // serve
  std::string addr = "127.0.0.1:8080";
  std::size_t max_body = kDefaultMaxBodyBytes;
  CascadeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "HTTP service: POST /v1/classify, GET /v1/health");
  serve->add_option("--model", model_path, "multiclass bundle to serve");
  serve_flags.add_to(serve, false);
  serve->add_option("--addr", addr, "host:port (port 0 picks a free port)");
  serve->add_option("--max-body", max_body, "request body limit in bytes")->check(CLI::PositiveNumber);

  // bench
  double duration = 2.0;
  unsigned bench_threads = 4;
  auto* bench = app.add_subcommand("bench", "stage-1 classification throughput");
  bench->add_option("--model", model_path, "model bundle")->required();
  bench->add_option("--input", input_path, "corpus")->required();
  bench->add_option("--threads", bench_threads, "measure 1..N threads")->check(CLI::PositiveNumber);
  bench->add_option("--duration", duration, "seconds per thread count")->check(CLI::PositiveNumber);
  bench->add_option("--report", report_path, "optional JSON report path");

  auto* worker = app.add_subcommand("stage2-worker", "stage-2 subprocess: JSONL requests on stdin");
  worker->add_option("--model", model_path, "multiclass bundle")->required();

  for (auto* sub : app.get_subcommands({})) bind_env(*sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return cmd_train(data_path, out_path, max_features, reg_c, seed, binary, max_iterations, weighting);
    if (*cv) {
      return cmd_cv(data_path, folds, seed, report_path, binary, stratified, pipeline, max_features, reg_c,
                    max_iterations, weighting, threads);
    }
    if (*predict) return cmd_predict(model_path, input_path, output_path);
    if (*evaluate_cmd) return cmd_evaluate(model_path, input_path, predictions_path, report_path, binary, collapse);
    if (*cascade_cmd) return cmd_cascade(cascade_flags, input_path, report_path, sweep);
    if (*serve) return cmd_serve(model_path, serve_flags, addr, max_body);
    if (*bench) return cmd_bench(model_path, input_path, bench_threads, duration, report_path);
    if (*worker) return cmd_stage2_worker(model_path);
  } catch (const std::exception& e) {
    std::cerr << kErrorPrefix << e.what() << std::endl;
    return 1;
  }
  return 0;
}
