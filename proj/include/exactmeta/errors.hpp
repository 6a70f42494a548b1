#pragma once

#include <stdexcept>
#include <string>

namespace exactmeta {

// Malformed input data (CSV parse errors, invalid study records, ...).
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Fitting or root-finding failures that make a result unavailable.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace exactmeta
