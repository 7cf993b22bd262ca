#pragma once

#include <stdexcept>
#include <string>

namespace bnr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-facing configuration; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite densities, failed factorizations, quadrature that does not converge.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::string block = {}, long index = -1)
      : Error(what), block_(std::move(block)), index_(index) {}

  const std::string& block() const { return block_; }
  long index() const { return index_; }

 private:
  std::string block_;
  long index_;
};

}  // namespace bnr
