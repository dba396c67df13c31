#pragma once

#include <stdexcept>
#include <string>

namespace advcorr {

/// Failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
  config,     ///< invalid configuration or precondition on user input
  data,       ///< unreadable or malformed files, dataset problems
  numerical,  ///< solver divergence or non-finite results
  shape,      ///< dimension mismatch between arguments
  domain,     ///< argument outside the function's domain (empty set, bad label)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::numerical, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::shape, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::shape:
    case ErrorKind::domain:
      return 2;
    case ErrorKind::data:
      return 3;
    case ErrorKind::numerical:
      return 4;
  }
  return 1;
}

}  // namespace advcorr
