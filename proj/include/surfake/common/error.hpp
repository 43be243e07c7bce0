#pragma once

#include <stdexcept>
#include <string>

namespace surfake {

// Base for every error raised by the library. The CLI maps the concrete type
// onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An upstream artifact (file, stage output) does not exist (exit code 3).
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// Input data that violates a documented invariant.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// A pluggable backend (face detector, normal estimator) failed. Distinct from
// "nothing found".
class BackendError : public Error {
 public:
  BackendError(std::string backend_id, const std::string& what)
      : Error("[" + backend_id + "] " + what), backend_id_(std::move(backend_id)) {}

  const std::string& backend_id() const noexcept { return backend_id_; }

 private:
  std::string backend_id_;
};

}  // namespace surfake
