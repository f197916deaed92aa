#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace mcne {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using NodeId = std::int32_t;
using ItemId = std::int32_t;
using Rng = std::mt19937_64;

/// Base of every error raised by the library. `kind()` is a short
/// machine-readable tag ("parse", "data", "config", "numeric", "io").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error("parse", source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

/// Folds the parts through splitmix64 so that nearby inputs give unrelated seeds.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

using WarningHandler = std::function<void(std::string_view)>;

/// Installs a new sink for warnings and returns the previous one.
/// The default sink writes "warning: ..." lines to stderr.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace mcne
