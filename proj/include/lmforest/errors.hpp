#pragma once

#include <stdexcept>
#include <string>

namespace lmforest {

// Base for all library errors. `code` is a stable machine-readable tag,
// `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Invalid inputs, schema or configuration (CLI exit status 2).
class DataError : public Error {
 public:
  using Error::Error;
};

// Failures during model fitting or evaluation (CLI exit status 3).
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace lmforest
