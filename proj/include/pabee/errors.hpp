#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pabee {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  explicit ValidationError(const std::string& what) : ValidationError("", what) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class TrainingError : public Error {
 public:
  TrainingError(std::size_t epoch, std::string detail)
      : Error("epoch " + std::to_string(epoch) + ": " + detail), epoch_(epoch), detail_(std::move(detail)) {}

  std::size_t epoch() const noexcept { return epoch_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::size_t epoch_;
  std::string detail_;
};

class SearchError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pabee
