// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_ERRORS_HPP_
#define ADAEVAL_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"

namespace adaeval {

// Every error raised by the library carries a machine-readable kind plus a
// free-form details object. The CLI prints these as single-line JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message,
        nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message),
        kind_(std::move(kind)),
        details_(std::move(details)) {}

  const std::string& kind() const { return kind_; }
  const nlohmann::json& details() const { return details_; }

  nlohmann::json to_json() const {
    return {{"error", kind_}, {"message", what()}, {"details", details_}};
  }

 private:
  std::string kind_;
  nlohmann::json details_;
};

// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& message, nlohmann::json details = {})
      : Error("dimension_error", message, std::move(details)) {}
};

// Index or slice outside of bounds.
class RangeError : public Error {
 public:
  RangeError(const std::string& message, nlohmann::json details = {})
      : Error("range_error", message, std::move(details)) {}
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  ContractError(const std::string& message, nlohmann::json details = {})
      : Error("contract_error", message, std::move(details)) {}
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, nlohmann::json details = {})
      : Error("config_error", message, std::move(details)) {}
};

// Malformed, inconsistent or non-finite data on disk or in memory.
class DataError : public Error {
 public:
  DataError(const std::string& message, nlohmann::json details = {})
      : Error("data_error", message, std::move(details)) {}
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, nlohmann::json details = {})
      : Error("training_error", message, std::move(details)) {}
};

}  // namespace adaeval

#endif  // ADAEVAL_ERRORS_HPP_
