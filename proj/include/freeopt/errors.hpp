#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace freeopt {

enum class ErrorCode {
  domain = 1,
  config = 2,
  numerical = 3,
  unsupported_model = 4,
  data = 5,
  io = 6,
  model_violation = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::domain, what) {}
};

// Carries the dotted path of the offending field, e.g. "problem.returns.volatility_sigma".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::string detail)
      : Error(ErrorCode::config, field.empty() ? detail : field + ": " + detail),
        field_(std::move(field)),
        detail_(std::move(detail)) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }

  ConfigError nested_under(const std::string& parent) const {
    return ConfigError(field_.empty() ? parent : parent + "." + field_, detail_);
  }

 private:
  std::string field_;
  std::string detail_;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double last_iterate, double residual)
      : Error(ErrorCode::numerical, what + " (last iterate " + std::to_string(last_iterate) +
                                        ", residual " + std::to_string(residual) + ")"),
        last_iterate_(last_iterate),
        residual_(residual) {}
  double last_iterate() const noexcept { return last_iterate_; }
  double residual() const noexcept { return residual_; }

 private:
  double last_iterate_;
  double residual_;
};

class UnsupportedModelError : public Error {
 public:
  explicit UnsupportedModelError(const std::string& what) : Error(ErrorCode::unsupported_model, what) {}
};

class ModelViolationError : public Error {
 public:
  explicit ModelViolationError(const std::string& what) : Error(ErrorCode::model_violation, what) {}
};

class DataError : public Error {
 public:
  DataError(std::string file, std::size_t line, const std::string& what)
      : Error(ErrorCode::data, file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

}  // namespace freeopt
