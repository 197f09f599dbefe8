#pragma once

#include <stdexcept>
#include <string>

namespace ipguard {

enum class ErrorKind { usage, input, format, numeric, query };

/// Base of every error raised by the library. The kind selects the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::usage:
        return 2;
      case ErrorKind::numeric:
        return 4;
      default:
        return 3;
    }
  }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& m) : Error(ErrorKind::usage, m) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& m) : Error(ErrorKind::input, m) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error(ErrorKind::format, m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error(ErrorKind::numeric, m) {}
};

class QueryError : public Error {
 public:
  QueryError(std::size_t point_index, const std::string& m)
      : Error(ErrorKind::query, "query failed at point " + std::to_string(point_index) + ": " + m),
        point_index_(point_index) {}

  std::size_t point_index() const noexcept { return point_index_; }

 private:
  std::size_t point_index_;
};

/// Re-raises `e` with a stage prefix, keeping its kind.
[[noreturn]] inline void rethrow_tagged(const std::string& stage, const Error& e) {
  throw Error(e.kind(), stage + ": " + e.what());
}

}  // namespace ipguard
