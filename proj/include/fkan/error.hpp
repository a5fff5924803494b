#pragma once

#include <stdexcept>
#include <string>

namespace fkan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or dimension chains.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, singular divisions, diverging losses.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid use of the autodiff graph (e.g. a second backward pass).
class GraphError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  enum class Kind { kMissingFile, kBadMagic, kTruncated, kCountMismatch, kBadSize, kBadLabel, kBadShape };

  DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace fkan
