#ifndef TRIAGE_SERVE_HPP
#define TRIAGE_SERVE_HPP

// HTTP classification service. POST /v1/classify speaks the stage-2 wire
// contract, so a running service can be another cascade's stage 2.
// GET /v1/health reports liveness and the digest of the served model.

#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "triage/bundle.hpp"
#include "triage/cascade.hpp"

namespace triage {

inline constexpr std::size_t kDefaultMaxBodyBytes = 1 << 20;

struct HttpReply {
  int status = 200;
  std::string body;
};

inline HttpReply error_reply(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", message}}.dump()};
}

// Answers classify requests either with a multiclass bundle directly or by
// running a one-post cascade. Immutable after construction apart from the
// stage-2 client, which is serialized by a mutex.
class ClassifyService {
 public:
  explicit ClassifyService(std::shared_ptr<const ModelBundle> model)
      : model_(std::move(model)), digest_(bundle_digest(*model_)) {
    require_multiclass_stage2(*model_);
  }

  ClassifyService(std::shared_ptr<const ModelBundle> filter, std::unique_ptr<Stage2Classifier> stage2,
                  CascadeConfig config)
      : filter_(std::move(filter)), stage2_(std::move(stage2)), config_(std::move(config)),
        digest_(bundle_digest(*filter_)) {
    config_.validate();
    if (filter_->mode != EvalMode::kBinary) throw InvalidArgument("the cascade filter must be a binary bundle");
  }

  const std::string& model_digest() const noexcept { return digest_; }

  HttpReply health() const { return {200, nlohmann::json{{"status", "ok"}, {"model_digest", digest_}}.dump()}; }

  HttpReply classify(const std::string& body) {
    Stage2Request request;
    try {
      request = request_from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::exception& e) {
      return error_reply(400, std::string("malformed JSON: ") + e.what());
    } catch (const FormatError& e) {
      return error_reply(400, e.what());
    }
    try {
      return {200, response_to_json(respond(request)).dump()};
    } catch (const std::exception& e) {
      return error_reply(502, e.what());
    }
  }

  Stage2Response respond(const Stage2Request& request) {
    if (model_) return classify_with_bundle(*model_, request);
    Post post;
    post.id = request.id;
    post.text = request.text;
    std::lock_guard lock(stage2_mutex_);
    const auto report = cascade_classify(std::span<const Post>(&post, 1), *filter_, *stage2_, config_,
                                         {.measure_degradation = false});
    const auto& o = report.outcomes.front();
    return {o.id, o.level, o.stage2_probs};
  }

 private:
  std::shared_ptr<const ModelBundle> model_;
  std::shared_ptr<const ModelBundle> filter_;
  std::unique_ptr<Stage2Classifier> stage2_;
  CascadeConfig config_;
  std::string digest_;
  std::mutex stage2_mutex_;
};

inline void install_routes(httplib::Server& server, ClassifyService& service,
                           std::size_t max_body_bytes = kDefaultMaxBodyBytes) {
  server.set_payload_max_length(max_body_bytes);
  server.Get("/v1/health", [&service](const httplib::Request&, httplib::Response& res) {
    const auto reply = service.health();
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  server.Post("/v1/classify", [&service](const httplib::Request& req, httplib::Response& res) {
    const auto reply = service.classify(req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      const auto reply = error_reply(res.status, httplib::status_message(res.status));
      res.set_content(reply.body, "application/json");
    }
  });
}

}  // namespace triage

#endif  // TRIAGE_SERVE_HPP
