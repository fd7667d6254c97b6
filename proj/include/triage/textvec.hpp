#ifndef TRIAGE_TEXTVEC_HPP
#define TRIAGE_TEXTVEC_HPP

// Tokenization and TF-IDF vectorization.
//
// Tokens are maximal runs of Unicode letters/digits (after simple case
// folding) of at least two code points. Document vectors use raw term
// counts times the smoothed idf ln((1+N)/(1+df)) + 1, then L2 normalization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "triage/error.hpp"

namespace triage {

inline constexpr std::size_t kMinTokenCodePoints = 2;

inline bool is_token_char(UChar32 c) noexcept { return u_isalpha(c) || u_isdigit(c); }

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t current_len = 0;
  auto flush = [&] {
    if (current_len >= kMinTokenCodePoints) tokens.push_back(current);
    current.clear();
    current_len = 0;
  };

  const auto* bytes = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(bytes, i, length, c);
    if (c < 0) {  // ill-formed UTF-8 acts as a separator
      flush();
      continue;
    }
    c = u_foldCase(c, U_FOLD_CASE_DEFAULT);
    if (!is_token_char(c)) {
      flush();
      continue;
    }
    char buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    U8_APPEND_UNSAFE(buf, n, c);
    current.append(buf, static_cast<std::size_t>(n));
    ++current_len;
  }
  flush();
  return tokens;
}

struct SparseEntry {
  std::uint32_t index;
  double weight;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

// Entries sorted by strictly increasing index, no explicit zeros.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<SparseEntry> entries;

  bool is_zero() const noexcept { return entries.empty(); }

  double norm() const noexcept {
    double sq = 0.0;
    for (const auto& e : entries) sq += e.weight * e.weight;
    return std::sqrt(sq);
  }

  std::vector<double> to_dense() const {
    std::vector<double> out(dim, 0.0);
    for (const auto& e : entries) out[e.index] = e.weight;
    return out;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

class TfIdfModel {
 public:
  TfIdfModel() = default;

  // Builds a model from already-selected parts (used by deserialization).
  // `vocabulary` must be unique; `idf` must have matching length.
  TfIdfModel(std::vector<std::string> vocabulary, std::vector<double> idf, std::size_t max_features,
             std::size_t corpus_size)
      : vocabulary_(std::move(vocabulary)),
        idf_(std::move(idf)),
        max_features_(max_features),
        corpus_size_(corpus_size) {
    if (vocabulary_.size() != idf_.size()) throw InvalidArgument("vocabulary and idf length differ");
    if (vocabulary_.size() > max_features_) throw InvalidArgument("vocabulary larger than max_features");
    index_.reserve(vocabulary_.size());
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
      if (!(idf_[i] >= 1.0) || !std::isfinite(idf_[i])) throw InvalidArgument("idf values must be finite and >= 1");
      if (!index_.emplace(vocabulary_[i], static_cast<std::uint32_t>(i)).second) {
        throw InvalidArgument("duplicate vocabulary term '" + vocabulary_[i] + "'");
      }
    }
  }

  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  std::size_t max_features() const noexcept { return max_features_; }
  std::size_t corpus_size() const noexcept { return corpus_size_; }
  std::size_t dim() const noexcept { return vocabulary_.size(); }

  std::optional<std::uint32_t> index_of(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  SparseVector transform_tokens(std::span<const std::string> tokens) const {
    std::unordered_map<std::uint32_t, std::uint32_t> counts;
    for (const auto& t : tokens) {
      if (auto it = index_.find(t); it != index_.end()) ++counts[it->second];
    }
    SparseVector out;
    out.dim = dim();
    out.entries.reserve(counts.size());
    for (auto [index, count] : counts) out.entries.push_back({index, static_cast<double>(count) * idf_[index]});
    std::sort(out.entries.begin(), out.entries.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
    const double n = out.norm();
    if (n > 0.0) {
      for (auto& e : out.entries) e.weight /= n;
    }
    return out;
  }

  SparseVector transform(std::string_view text) const { return transform_tokens(tokenize(text)); }

  std::vector<SparseVector> transform_all(std::span<const std::string> texts) const {
    std::vector<SparseVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(transform(t));
    return out;
  }

  friend bool operator==(const TfIdfModel& a, const TfIdfModel& b) {
    return a.vocabulary_ == b.vocabulary_ && a.idf_ == b.idf_ && a.max_features_ == b.max_features_ &&
           a.corpus_size_ == b.corpus_size_;
  }

 private:
  std::vector<std::string> vocabulary_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t max_features_ = 0;
  std::size_t corpus_size_ = 0;
};

inline double smoothed_idf(std::size_t corpus_size, std::size_t document_frequency) {
  return std::log((1.0 + static_cast<double>(corpus_size)) / (1.0 + static_cast<double>(document_frequency))) + 1.0;
}

// Fits on pre-tokenized documents. Keeps the `max_features` terms with the
// highest document frequency (ties: lexicographically smaller first); the
// kept terms are stored in lexicographic order.
inline TfIdfModel fit_tfidf_tokens(std::span<const std::vector<std::string>> documents, std::size_t max_features) {
  if (documents.empty()) throw InvalidArgument("cannot fit TF-IDF on an empty corpus");
  if (max_features == 0) throw InvalidArgument("max_features must be positive");

  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    std::unordered_set<std::string_view> seen(doc.begin(), doc.end());
    for (auto term : seen) ++df[std::string(term)];
  }

  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_features) ranked.resize(max_features);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<std::string> vocabulary;
  std::vector<double> idf;
  vocabulary.reserve(ranked.size());
  idf.reserve(ranked.size());
  for (auto& [term, freq] : ranked) {
    vocabulary.push_back(std::move(term));
    idf.push_back(smoothed_idf(documents.size(), freq));
  }
  return TfIdfModel(std::move(vocabulary), std::move(idf), max_features, documents.size());
}

inline TfIdfModel fit_tfidf(std::span<const std::string> corpus, std::size_t max_features) {
  std::vector<std::vector<std::string>> documents;
  documents.reserve(corpus.size());
  for (const auto& text : corpus) documents.push_back(tokenize(text));
  return fit_tfidf_tokens(documents, max_features);
}

}  // namespace triage

#endif  // TRIAGE_TEXTVEC_HPP
