#ifndef TRIAGE_BUNDLE_HPP
#define TRIAGE_BUNDLE_HPP

// A trained TF-IDF + logistic regression text model and its on-disk form: a
// single JSON document with a format_version. Doubles are written in shortest
// round-trip form, so save -> load reproduces every parameter bit for bit.

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/error.hpp"
#include "triage/linclf.hpp"
#include "triage/metrics.hpp"
#include "triage/textvec.hpp"

namespace triage {

inline constexpr int kBundleFormatVersion = 1;

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string hex_digest(std::string_view data) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
  return std::string("fnv1a64:") + buf;
}

struct Provenance {
  std::string data_digest;
  std::uint64_t seed = 42;
  std::size_t max_features = 10000;
  double reg_C = 1.0;
  std::size_t training_size = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ModelBundle {
  int format_version = kBundleFormatVersion;
  EvalMode mode = EvalMode::kMulticlass;
  TfIdfModel vectorizer;
  LinearClassifier classifier;
  Provenance provenance;

  std::vector<double> predict_proba(std::string_view text) const {
    return classifier.predict_proba(vectorizer.transform(text));
  }

  // Class id: a suspicion level (multiclass) or 0/1 (binary).
  int predict(std::string_view text) const {
    return classifier.classes()[LinearClassifier::argmax(predict_proba(text))];
  }

  // P(suspicious). Binary bundles read class 1; multiclass bundles sum levels 2 and 3.
  double suspicious_score(std::span<const double> proba) const {
    if (mode == EvalMode::kBinary) return proba[classifier.class_index(1)];
    double s = 0.0;
    for (std::size_t k = 0; k < classifier.classes().size(); ++k) {
      if (classifier.classes()[k] >= 2) s += proba[k];
    }
    return s;
  }
};

// Fits the vectorizer and classifier on every post of `data` (all must be
// labeled). Binary mode collapses levels first: 1 -> 0, {2,3} -> 1.
inline ModelBundle train_bundle(const Dataset& data, EvalMode mode, std::size_t max_features,
                                const TrainOptions& options) {
  const auto levels = data.labels();
  if (levels.empty()) throw InvalidArgument("training set is empty");
  std::vector<int> y;
  y.reserve(levels.size());
  for (auto l : levels) y.push_back(mode == EvalMode::kBinary ? to_int(binarize(l)) : to_int(l));
  const auto texts = data.texts();

  ModelBundle bundle;
  bundle.mode = mode;
  bundle.vectorizer = fit_tfidf(texts, max_features);
  const auto X = bundle.vectorizer.transform_all(texts);
  bundle.classifier = LinearClassifier::fit(X, y, options);
  bundle.provenance.data_digest = hex_digest(to_jsonl(data));
  bundle.provenance.seed = options.seed;
  bundle.provenance.max_features = max_features;
  bundle.provenance.reg_C = options.reg_C;
  bundle.provenance.training_size = data.size();
  return bundle;
}

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  const auto& clf = b.classifier;
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t k = 0; k < clf.num_classes(); ++k) {
    auto row = clf.weights().subspan(k * clf.dim(), clf.dim());
    weights.push_back(std::vector<double>(row.begin(), row.end()));
  }
  const auto& meta = clf.meta();
  return {
      {"format_version", b.format_version},
      {"mode", to_string(b.mode)},
      {"vectorizer",
       {{"max_features", b.vectorizer.max_features()},
        {"corpus_size", b.vectorizer.corpus_size()},
        {"vocabulary", b.vectorizer.vocabulary()},
        {"idf", b.vectorizer.idf()}}},
      {"classifier",
       {{"classes", clf.classes()},
        {"dim", clf.dim()},
        {"weights", std::move(weights)},
        {"bias", std::vector<double>(clf.bias().begin(), clf.bias().end())},
        {"reg_C", clf.reg_C()},
        {"train_meta",
         {{"iterations", meta.iterations},
          {"objective", meta.objective},
          {"gradient_norm_inf", meta.gradient_norm_inf},
          {"stop", to_string(meta.stop)}}}}},
      {"provenance",
       {{"data_digest", b.provenance.data_digest},
        {"seed", b.provenance.seed},
        {"max_features", b.provenance.max_features},
        {"reg_C", b.provenance.reg_C},
        {"training_size", b.provenance.training_size}}},
  };
}

inline EvalMode mode_from_string(std::string_view s) {
  if (s == "multiclass") return EvalMode::kMulticlass;
  if (s == "binary") return EvalMode::kBinary;
  throw FormatError("unknown mode '" + std::string(s) + "'");
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kBundleFormatVersion) {
      throw FormatError("unsupported model bundle format_version " + std::to_string(version) + " (this build reads " +
                        std::to_string(kBundleFormatVersion) + ")");
    }
    ModelBundle b;
    b.format_version = version;
    b.mode = mode_from_string(j.at("mode").get<std::string>());

    const auto& v = j.at("vectorizer");
    b.vectorizer = TfIdfModel(v.at("vocabulary").get<std::vector<std::string>>(), v.at("idf").get<std::vector<double>>(),
                              v.at("max_features").get<std::size_t>(), v.at("corpus_size").get<std::size_t>());

    const auto& c = j.at("classifier");
    const auto classes = c.at("classes").get<std::vector<int>>();
    const auto dim = c.at("dim").get<std::size_t>();
    if (dim != b.vectorizer.dim()) throw FormatError("classifier dimension does not match vocabulary size");
    std::vector<double> weights;
    for (const auto& row : c.at("weights")) {
      auto r = row.get<std::vector<double>>();
      if (r.size() != dim) throw FormatError("weight row has wrong length");
      weights.insert(weights.end(), r.begin(), r.end());
    }
    TrainMeta meta;
    const auto& m = c.at("train_meta");
    meta.iterations = m.at("iterations").get<int>();
    meta.objective = m.at("objective").get<double>();
    meta.gradient_norm_inf = m.at("gradient_norm_inf").get<double>();
    meta.stop = stop_reason_from_string(m.at("stop").get<std::string>());
    b.classifier = LinearClassifier(classes, dim, std::move(weights), c.at("bias").get<std::vector<double>>(),
                                    c.at("reg_C").get<double>(), std::move(meta));
    if (b.mode == EvalMode::kBinary && classes != binary_space()) throw FormatError("binary bundle must have classes [0, 1]");

    const auto& p = j.at("provenance");
    b.provenance.data_digest = p.at("data_digest").get<std::string>();
    b.provenance.seed = p.at("seed").get<std::uint64_t>();
    b.provenance.max_features = p.at("max_features").get<std::size_t>();
    b.provenance.reg_C = p.at("reg_C").get<double>();
    b.provenance.training_size = p.at("training_size").get<std::size_t>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model bundle: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed model bundle: ") + e.what());
  }
}

inline std::string serialize_bundle(const ModelBundle& b) { return bundle_to_json(b).dump() + "\n"; }

inline ModelBundle parse_bundle(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("model bundle is not valid JSON: ") + e.what());
  }
  return bundle_from_json(j);
}

inline void save_bundle(const ModelBundle& b, const std::string& path) { detail::write_file(path, serialize_bundle(b)); }

inline ModelBundle load_bundle(const std::string& path) { return parse_bundle(detail::read_file(path)); }

inline std::string bundle_digest(const ModelBundle& b) { return hex_digest(serialize_bundle(b)); }

}  // namespace triage

#endif  // TRIAGE_BUNDLE_HPP
