#ifndef DFL_ERRORS_HPP
#define DFL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dfl {

// Base class for all library errors. Subclasses map onto CLI exit codes:
// ConfigError/FormatError -> 2, DivergenceError -> 3, MetricUndefinedError
// and InsufficientSamplesError -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

class InsufficientSamplesError : public Error {
 public:
  explicit InsufficientSamplesError(const std::string& msg) : Error(msg) {}
};

class EncodingError : public Error {
 public:
  explicit EncodingError(const std::string& msg) : Error(msg) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class MetricUndefinedError : public Error {
 public:
  explicit MetricUndefinedError(const std::string& msg) : Error(msg) {}
};

}  // namespace dfl

#endif  // DFL_ERRORS_HPP
