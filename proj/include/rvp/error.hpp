#pragma once

#include <stdexcept>
#include <string>

namespace rvp {

// Error kinds surfaced by the engine. The CLI maps the category of a kind to
// its exit code, the service maps it to an HTTP status.
enum class ErrorKind {
  // ingestion / data
  MissingColumn,
  MalformedValue,
  EmptyPopulation,
  MissingPrediction,
  UnreadableData,
  // masks
  UnknownField,
  InvalidBandwidth,
  EmptyMask,
  // utility / policy
  DomainError,
  InvalidUtility,
  InvalidConstraint,
  ZeroBaseline,
  // levers
  CapacityOverflow,
  VariantMismatch,
  UnlabeledInMask,
  CostOutOfRange,
  InvalidLever,
  // comparisons
  NonInvertibleCost,
  NonMonotoneBenchmark,
  InvalidGrid,
  // synth / oracles
  InvalidSpec,
  TooLargeToEnumerate,
  // configuration
  ConfigError,
};

enum class ErrorCategory { Config, Data, Analysis };

inline const char* to_string(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedValue: return "MalformedValue";
    case ErrorKind::EmptyPopulation: return "EmptyPopulation";
    case ErrorKind::MissingPrediction: return "MissingPrediction";
    case ErrorKind::UnreadableData: return "UnreadableData";
    case ErrorKind::UnknownField: return "UnknownField";
    case ErrorKind::InvalidBandwidth: return "InvalidBandwidth";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::InvalidUtility: return "InvalidUtility";
    case ErrorKind::InvalidConstraint: return "InvalidConstraint";
    case ErrorKind::ZeroBaseline: return "ZeroBaseline";
    case ErrorKind::CapacityOverflow: return "CapacityOverflow";
    case ErrorKind::VariantMismatch: return "VariantMismatch";
    case ErrorKind::UnlabeledInMask: return "UnlabeledInMask";
    case ErrorKind::CostOutOfRange: return "CostOutOfRange";
    case ErrorKind::InvalidLever: return "InvalidLever";
    case ErrorKind::NonInvertibleCost: return "NonInvertibleCost";
    case ErrorKind::NonMonotoneBenchmark: return "NonMonotoneBenchmark";
    case ErrorKind::InvalidGrid: return "InvalidGrid";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::TooLargeToEnumerate: return "TooLargeToEnumerate";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

inline ErrorCategory category(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::MissingColumn:
    case ErrorKind::MalformedValue:
    case ErrorKind::EmptyPopulation:
    case ErrorKind::MissingPrediction:
    case ErrorKind::UnreadableData:
      return ErrorCategory::Data;
    case ErrorKind::UnknownField:
    case ErrorKind::InvalidBandwidth:
    case ErrorKind::InvalidUtility:
    case ErrorKind::InvalidConstraint:
    case ErrorKind::InvalidLever:
    case ErrorKind::InvalidGrid:
    case ErrorKind::InvalidSpec:
    case ErrorKind::ConfigError:
      return ErrorCategory::Config;
    default:
      return ErrorCategory::Analysis;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Ingestion error carrying the 1-based data row (header excluded).
class RowError : public Error {
 public:
  RowError(ErrorKind kind, std::size_t row, const std::string& message)
      : Error(kind, "row " + std::to_string(row) + ": " + message), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Configuration error with the offending field path, e.g. "utility.rho".
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(ErrorKind::ConfigError, path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, ErrorKind kind, const std::string& message) {
  if (!cond) fail(kind, message);
}

}  // namespace rvp
