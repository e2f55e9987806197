#pragma once

#include <stdexcept>
#include <string>

namespace cfres {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input values (violated invariants or preconditions).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Configuration errors carry the dotted key path that caused them.
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path + ": " + what), key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

/// The estimated strong-user channel matrix at an AP is rank deficient.
class RankDeficientError : public Error {
 public:
  RankDeficientError(std::size_t ap, const std::string& what)
      : Error("AP " + std::to_string(ap) + ": " + what), ap_(ap) {}

  std::size_t ap() const noexcept { return ap_; }

 private:
  std::size_t ap_;
};

/// A convex subproblem has no strictly feasible point.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// The interior-point solver stopped without meeting its tolerances.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfres
