#pragma once

#include <stdexcept>

namespace causalshift {

/// Invalid argument supplied by the caller (bad size, index, name, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Internal structural inconsistency, e.g. a cycle where a DAG is required.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace causalshift
