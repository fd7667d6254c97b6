#ifndef TRIAGE_ERROR_HPP
#define TRIAGE_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace triage {

// Base for every error the library raises. The CLI prints what() after a
// fixed "triage: error:" prefix.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A malformed dataset row. line() is 1-based and refers to the physical
// line the offending record starts on.
class IngestError : public Error {
 public:
  IngestError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class Stage2Error : public Error {
 public:
  using Error::Error;
};

}  // namespace triage

#endif  // TRIAGE_ERROR_HPP
