#ifndef TRIAGE_CORPUS_HPP
#define TRIAGE_CORPUS_HPP

// Labeled post data model: ingestion from JSON Lines / CSV, canonical JSON
// Lines output, label binarization and the majority-class baseline.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "triage/detail/csv.hpp"
#include "triage/detail/timestamp.hpp"
#include "triage/error.hpp"

namespace triage {

using Timestamp = detail::Timestamp;

// Three-point suspicion scale. Ordering follows the enumerator values.
enum class SuspiciousLevel : std::uint8_t {
  kNotSuspicious = 1,
  kDoubtful = 2,
  kSuspicious = 3,
};

inline constexpr std::array<SuspiciousLevel, 3> kAllLevels = {
    SuspiciousLevel::kNotSuspicious, SuspiciousLevel::kDoubtful, SuspiciousLevel::kSuspicious};

constexpr int to_int(SuspiciousLevel level) noexcept { return static_cast<int>(level); }

// Rejects anything outside {1, 2, 3}.
inline std::optional<SuspiciousLevel> level_from_int(long long value) noexcept {
  if (value < 1 || value > 3) return std::nullopt;
  return static_cast<SuspiciousLevel>(value);
}

inline SuspiciousLevel level_or_throw(long long value) {
  auto level = level_from_int(value);
  if (!level) throw InvalidArgument("invalid suspicious level " + std::to_string(value));
  return *level;
}

enum class BinaryLabel : std::uint8_t {
  kNotSuspicious = 0,
  kSuspicious = 1,
};

constexpr int to_int(BinaryLabel label) noexcept { return static_cast<int>(label); }

constexpr BinaryLabel binarize(SuspiciousLevel level) noexcept {
  return level == SuspiciousLevel::kNotSuspicious ? BinaryLabel::kNotSuspicious
                                                  : BinaryLabel::kSuspicious;
}

inline std::vector<BinaryLabel> binarize(std::span<const SuspiciousLevel> levels) {
  std::vector<BinaryLabel> out;
  out.reserve(levels.size());
  std::transform(levels.begin(), levels.end(), std::back_inserter(out),
                 [](SuspiciousLevel l) { return binarize(l); });
  return out;
}

struct Post {
  std::string id;
  std::string channel;
  Timestamp timestamp{};
  std::string text;
  std::optional<SuspiciousLevel> label;

  friend bool operator==(const Post&, const Post&) = default;
};

enum class DatasetFormat { kJsonl, kCsv };

inline std::optional<DatasetFormat> format_from_path(std::string_view path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.substr(path.size() - suffix.size()) == suffix;
  };
  if (ends_with(".jsonl") || ends_with(".json") || ends_with(".ndjson")) return DatasetFormat::kJsonl;
  if (ends_with(".csv")) return DatasetFormat::kCsv;
  return std::nullopt;
}

// Posts in file order. Immutable once built; the label space is always {1,2,3}.
class Dataset {
 public:
  Dataset() = default;

  // Validates id non-emptiness and uniqueness. Row numbers in errors are
  // positions in `posts`, 1-based.
  explicit Dataset(std::vector<Post> posts) : posts_(std::move(posts)) {
    std::unordered_set<std::string_view> seen;
    for (std::size_t i = 0; i < posts_.size(); ++i) {
      if (posts_[i].id.empty()) throw IngestError(i + 1, "empty id");
      if (!seen.insert(posts_[i].id).second) throw IngestError(i + 1, "duplicate id '" + posts_[i].id + "'");
    }
  }

  const std::vector<Post>& posts() const noexcept { return posts_; }
  std::size_t size() const noexcept { return posts_.size(); }
  bool empty() const noexcept { return posts_.empty(); }
  const Post& operator[](std::size_t i) const { return posts_[i]; }
  auto begin() const noexcept { return posts_.begin(); }
  auto end() const noexcept { return posts_.end(); }

  bool fully_labeled() const noexcept {
    return std::all_of(posts_.begin(), posts_.end(), [](const Post& p) { return p.label.has_value(); });
  }

  // Labels in dataset order; throws if any post is unlabeled.
  std::vector<SuspiciousLevel> labels() const {
    std::vector<SuspiciousLevel> out;
    out.reserve(posts_.size());
    for (std::size_t i = 0; i < posts_.size(); ++i) {
      if (!posts_[i].label) throw InvalidArgument("post '" + posts_[i].id + "' (row " + std::to_string(i + 1) + ") is unlabeled");
      out.push_back(*posts_[i].label);
    }
    return out;
  }

  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    out.reserve(posts_.size());
    for (const auto& p : posts_) out.push_back(p.text);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<Post> posts_;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("error writing '" + path + "'");
}

inline bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r") == std::string_view::npos;
}

class DuplicateTracker {
 public:
  void add(const std::string& id, std::size_t line) {
    if (id.empty()) throw IngestError(line, "empty id");
    auto [it, inserted] = first_line_.emplace(id, line);
    if (!inserted) {
      throw IngestError(line, "duplicate id '" + id + "' (first seen on line " + std::to_string(it->second) + ")");
    }
  }

 private:
  std::map<std::string, std::size_t> first_line_;
};

inline Timestamp parse_date_or_throw(std::string_view s, std::size_t line) {
  auto ts = parse_rfc3339(s);
  if (!ts) throw IngestError(line, "bad timestamp '" + std::string(s) + "'");
  return *ts;
}

inline std::optional<SuspiciousLevel> parse_label_text(std::string_view s, std::size_t line) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw IngestError(line, "label '" + std::string(s) + "' is not an integer");
  }
  auto level = level_from_int(value);
  if (!level) throw IngestError(line, "label " + std::to_string(value) + " outside {1,2,3}");
  return level;
}

inline Dataset parse_jsonl(std::string_view data) {
  std::vector<Post> posts;
  DuplicateTracker ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string_view::npos) eol = data.size();
    std::string_view line = data.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (is_blank(line)) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw IngestError(line_no, "expected a JSON object");

    auto required_string = [&](const char* key) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end()) throw IngestError(line_no, std::string("missing field '") + key + "'");
      if (!it->is_string()) throw IngestError(line_no, std::string("field '") + key + "' must be a string");
      return it->get<std::string>();
    };

    Post post;
    post.id = required_string("id");
    post.channel = required_string("channel");
    post.timestamp = parse_date_or_throw(required_string("date"), line_no);
    post.text = required_string("text");
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      if (it->is_number_integer()) {
        const auto value = it->get<long long>();
        post.label = level_from_int(value);
        if (!post.label) throw IngestError(line_no, "label " + std::to_string(value) + " outside {1,2,3}");
      } else if (it->is_string()) {
        post.label = parse_label_text(it->get_ref<const std::string&>(), line_no);
      } else {
        throw IngestError(line_no, "label must be an integer 1, 2 or 3, got " + it->dump());
      }
    }
    ids.add(post.id, line_no);
    posts.push_back(std::move(post));
  }
  return Dataset(std::move(posts));
}

inline Dataset parse_csv(std::string_view data) {
  if (data.size() >= 3 && data.substr(0, 3) == "\xEF\xBB\xBF") data.remove_prefix(3);
  CsvReader reader(data);
  std::optional<CsvRecord> header;
  try {
    header = reader.next();
  } catch (const CsvSyntaxError& e) {
    throw IngestError(e.line, e.message);
  }
  if (!header) throw IngestError(1, "missing CSV header");

  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header->fields.size(); ++i) column.emplace(header->fields[i], i);
  for (const char* name : {"id", "channel", "date", "text"}) {
    if (!column.contains(name)) throw IngestError(1, std::string("CSV header lacks column '") + name + "'");
  }
  const std::optional<std::size_t> label_col =
      column.contains("label") ? std::optional<std::size_t>(column.at("label")) : std::nullopt;

  std::vector<Post> posts;
  DuplicateTracker ids;
  for (;;) {
    std::optional<CsvRecord> rec;
    try {
      rec = reader.next();
    } catch (const CsvSyntaxError& e) {
      throw IngestError(e.line, e.message);
    }
    if (!rec) break;
    if (rec->fields.size() == 1 && rec->fields[0].empty()) continue;
    if (rec->fields.size() != header->fields.size()) {
      throw IngestError(rec->line, "expected " + std::to_string(header->fields.size()) + " fields, got " +
                                       std::to_string(rec->fields.size()));
    }
    Post post;
    post.id = rec->fields[column.at("id")];
    post.channel = rec->fields[column.at("channel")];
    post.timestamp = parse_date_or_throw(rec->fields[column.at("date")], rec->line);
    post.text = rec->fields[column.at("text")];
    if (label_col) post.label = parse_label_text(rec->fields[*label_col], rec->line);
    ids.add(post.id, rec->line);
    posts.push_back(std::move(post));
  }
  return Dataset(std::move(posts));
}

inline nlohmann::json post_to_json(const Post& post) {
  nlohmann::json obj = {
      {"id", post.id},
      {"channel", post.channel},
      {"date", format_rfc3339(post.timestamp)},
      {"text", post.text},
  };
  if (post.label) obj["label"] = to_int(*post.label);
  return obj;
}

}  // namespace detail

inline Dataset parse_dataset(std::string_view data, DatasetFormat format) {
  return format == DatasetFormat::kJsonl ? detail::parse_jsonl(data) : detail::parse_csv(data);
}

inline Dataset load_dataset(const std::string& path, DatasetFormat format) {
  return parse_dataset(detail::read_file(path), format);
}

// Picks the format from the file extension; unknown extensions are read as JSON Lines.
inline Dataset load_dataset(const std::string& path) {
  return load_dataset(path, format_from_path(path).value_or(DatasetFormat::kJsonl));
}

// Canonical JSON Lines: one object per post, keys id/channel/date/text[/label].
inline std::string to_jsonl(const Dataset& dataset) {
  std::string out;
  for (const auto& post : dataset) {
    out += detail::post_to_json(post).dump();
    out += '\n';
  }
  return out;
}

inline std::string to_csv(const Dataset& dataset) {
  using detail::csv_escape;
  std::string out = "id,channel,date,text,label\r\n";
  for (const auto& post : dataset) {
    out += csv_escape(post.id) + ',' + csv_escape(post.channel) + ',' +
           detail::format_rfc3339(post.timestamp) + ',' + csv_escape(post.text) + ',';
    if (post.label) out += std::to_string(to_int(*post.label));
    out += "\r\n";
  }
  return out;
}

inline void write_dataset(const Dataset& dataset, const std::string& path, DatasetFormat format) {
  detail::write_file(path, format == DatasetFormat::kJsonl ? to_jsonl(dataset) : to_csv(dataset));
}

// Format from the extension, as in load_dataset.
inline void write_dataset(const Dataset& dataset, const std::string& path) {
  write_dataset(dataset, path, format_from_path(path).value_or(DatasetFormat::kJsonl));
}

// Most frequent label among `labels`; ties go to the smaller label.
template <class Label>
Label most_frequent(std::span<const Label> labels) {
  if (labels.empty()) throw InvalidArgument("majority baseline needs at least one training label");
  std::map<Label, std::size_t> counts;
  for (const Label& l : labels) ++counts[l];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

// Constant predictor returning the training majority for every input.
template <class Label>
class MajorityPredictor {
 public:
  explicit MajorityPredictor(Label label) : label_(label) {}

  Label label() const noexcept { return label_; }

  template <class Input>
  Label predict(const Input&) const noexcept {
    return label_;
  }

 private:
  Label label_;
};

inline MajorityPredictor<SuspiciousLevel> majority_baseline(std::span<const SuspiciousLevel> train_labels) {
  return MajorityPredictor<SuspiciousLevel>(most_frequent(train_labels));
}

}  // namespace triage

#endif  // TRIAGE_CORPUS_HPP
