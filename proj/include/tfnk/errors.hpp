#pragma once

#include <stdexcept>
#include <string>

namespace tfnk {

// Raised when a computation produces non-finite values or is numerically
// invalid (NaN/Inf in tensors, gradients, losses). CLI maps this to exit 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// Raised for bad configs, bad files and bad arguments. CLI maps this to exit 2.
class config_error : public std::invalid_argument {
 public:
  explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace tfnk
