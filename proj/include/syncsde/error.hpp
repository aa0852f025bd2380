// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace syncsde {

// Root of every error the engine raises. `kind()` gives a stable short tag
// used in CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
  ConfigError(const std::string& key, const std::string& what)
      : Error("config", key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class ScheduleError : public Error {
 public:
  explicit ScheduleError(const std::string& what) : Error("schedule", what) {}
};

class SingularityError : public Error {
 public:
  explicit SingularityError(const std::string& what) : Error("singularity", what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class PlanError : public Error {
 public:
  explicit PlanError(const std::string& what) : Error("plan", what) {}
};

class ScoreModelError : public Error {
 public:
  using Error::Error;
  explicit ScoreModelError(const std::string& what) : Error("score-model", what) {}
};

// Connection-level failure. The request may be retried on a fresh connection.
class TransportError : public ScoreModelError {
 public:
  explicit TransportError(const std::string& what) : ScoreModelError("transport", what) {}
};

// The provider answered, but the answer breaks the protocol contract.
class ProviderContractError : public ScoreModelError {
 public:
  explicit ProviderContractError(const std::string& what)
      : ScoreModelError("provider-contract", what) {}
};

class HandshakeError : public ScoreModelError {
 public:
  explicit HandshakeError(const std::string& what) : ScoreModelError("handshake", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace syncsde
