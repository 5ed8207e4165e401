#pragma once

#include <stdexcept>
#include <string>

namespace rgp {

/// Malformed input: bad files, inconsistent dimensions, invalid configuration.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a usable result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rgp
