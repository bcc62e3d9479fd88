#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace causalflow {

// Invalid input to a library call: bad dimensions, out-of-range vertices,
// malformed serialized objects.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or semantically invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Optimization blew up (non-finite loss or gradient).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric evaluation left its domain. `where` identifies the tape node or
// data row responsible.
class EvaluationError : public std::domain_error {
 public:
  EvaluationError(const std::string& what, std::size_t where)
      : std::domain_error(what + " (at " + std::to_string(where) + ")"),
        where_(where) {}

  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

}  // namespace causalflow
