#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedmix {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable tag used by the CLI.
  virtual const char* code() const noexcept { return "error"; }
};

/// Invalid configuration or malformed input file. The CLI maps it to exit 1.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "config_error"; }
};

/// Arguments with inconsistent shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "dimension_mismatch"; }
};

/// A QR factorization met a numerically rank-deficient input.
class RankDeficientError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "rank_deficient"; }
};

/// Rank deficiency inside the federated orthogonal iteration at a given round.
class DegenerateRoundError : public RankDeficientError {
 public:
  DegenerateRoundError(std::size_t round, const std::string& what)
      : RankDeficientError(what), round_(round) {}
  std::size_t round() const noexcept { return round_; }
  const char* code() const noexcept override { return "degenerate_round"; }

 private:
  std::size_t round_;
};

/// Not enough clients or local data to run the requested schedule.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "insufficient_data"; }
};

/// Anchor clustering produced a component count different from k.
class ClusteringError : public Error {
 public:
  ClusteringError(std::size_t components, const std::string& what)
      : Error(what), components_(components) {}
  std::size_t components() const noexcept { return components_; }
  const char* code() const noexcept override { return "clustering_failed"; }

 private:
  std::size_t components_;
};

/// Request outside the supported problem size (e.g. brute-force over k!).
class UnsupportedSizeError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "unsupported_size"; }
};

}  // namespace fedmix
