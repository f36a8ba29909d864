#pragma once

#include <stdexcept>
#include <string>

namespace geoformal {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (maps to CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace geoformal
