#pragma once

#include <stdexcept>
#include <string>

namespace mast {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible extents, ranks or axes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf detected, or a training run diverged.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable or inconsistent dataset / checkpoint files.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace mast
