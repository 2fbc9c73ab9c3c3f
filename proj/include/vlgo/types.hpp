#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace vlgo {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// Errors. Invalid arguments use std::invalid_argument directly.

/// Raised when an iterative procedure produces a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t iterate)
      : std::runtime_error(what + " (iterate " + std::to_string(iterate) + ")"),
        iterate_(iterate) {}

  [[nodiscard]] std::size_t iterate() const noexcept { return iterate_; }

 private:
  std::size_t iterate_;
};

/// Distance-improvement ratio requested for a pair with zero separation.
class UndefinedRatioError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A cached forward pass no longer matches the network it came from.
class InvalidStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad run configuration; `path()` names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}

  [[nodiscard]] const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class IoError : public std::runtime_error {
 public:
  IoError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}

  [[nodiscard]] const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace vlgo
