#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pmv {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration problems. The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed document; `key_path()` names the offending `section.key`.
class ParseError : public ConfigError {
 public:
  ParseError(std::string key_path, const std::string& what)
      : ConfigError(key_path.empty() ? what : key_path + ": " + what),
        key_path_(std::move(key_path)) {}
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

/// A well-formed value that breaks an invariant; `invariant()` names it.
class ValidationError : public ConfigError {
 public:
  ValidationError(std::string invariant, const std::string& what)
      : ConfigError(invariant + ": " + what), invariant_(std::move(invariant)) {}
  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

/// Binary cube decoding failure at a byte offset.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Circle fit on collinear or too few samples.
class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

/// Estimate/truth mismatches and CSV schema problems. Exit code 4.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed for one direction. Exit code 3.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace pmv
