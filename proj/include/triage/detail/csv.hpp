#ifndef TRIAGE_DETAIL_CSV_HPP
#define TRIAGE_DETAIL_CSV_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace triage::detail {

struct CsvSyntaxError {
  std::size_t line;
  std::string message;
};

struct CsvRecord {
  std::size_t line = 0;  // physical line the record starts on, 1-based
  std::vector<std::string> fields;
};

// RFC 4180 reader over an in-memory buffer. Quoted fields may span lines and
// escape quotes by doubling them. Accepts both CRLF and LF line endings.
class CsvReader {
 public:
  explicit CsvReader(std::string_view data) : data_(data) {}

  // Returns std::nullopt at end of input. Throws CsvSyntaxError on an
  // unterminated quote or junk after a closing quote.
  std::optional<CsvRecord> next() {
    if (pos_ >= data_.size()) return std::nullopt;
    CsvRecord rec;
    rec.line = line_;
    std::string field;
    bool quoted = false;
    bool after_quote = false;
    for (;;) {
      if (pos_ >= data_.size()) {
        if (quoted) throw CsvSyntaxError{rec.line, "unterminated quoted field"};
        rec.fields.push_back(std::move(field));
        return rec;
      }
      const char c = data_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < data_.size() && data_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            quoted = false;
            after_quote = true;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == ',') {
        rec.fields.push_back(std::move(field));
        field.clear();
        after_quote = false;
      } else if (c == '\n' || c == '\r') {
        if (c == '\r' && pos_ < data_.size() && data_[pos_] == '\n') ++pos_;
        ++line_;
        rec.fields.push_back(std::move(field));
        return rec;
      } else if (c == '"' && field.empty() && !after_quote) {
        quoted = true;
      } else if (after_quote) {
        throw CsvSyntaxError{rec.line, "unexpected character after closing quote"};
      } else {
        field.push_back(c);
      }
    }
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

inline std::string csv_escape(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace triage::detail

#endif  // TRIAGE_DETAIL_CSV_HPP
