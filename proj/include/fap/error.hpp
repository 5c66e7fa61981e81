#pragma once

#include <stdexcept>
#include <string>

namespace fap {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible extents, bad axis, odd spatial size, and similar contract breaks.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by an operation or found during backpropagation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Rejected configuration value or unknown key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable or unwritable file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fap
