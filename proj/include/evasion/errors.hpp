#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace evasion {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: malformed corpus lines, duplicate ids, empty collections.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A detector could not produce a score after all retries.
class DetectorUnavailable : public Error {
 public:
  DetectorUnavailable(std::string detector_id, const std::string& what)
      : Error("detector '" + detector_id + "' unavailable: " + what),
        detector_id_(std::move(detector_id)) {}

  const std::string& detector_id() const noexcept { return detector_id_; }

 private:
  std::string detector_id_;
};

/// Remote detector answered with a body we cannot interpret.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A raw detector value fell outside [0,1].
class NormalizationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during optimization (non-finite gradients).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace evasion
