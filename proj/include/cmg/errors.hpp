#pragma once

#include <stdexcept>
#include <string>

namespace cmg {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside the mathematical domain of an operation (all-masked softmax,
// empty corpus, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Index outside a vocabulary or table.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Operation invoked in the wrong lifecycle state.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or inconsistent data read from disk.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

class FingerprintError : public DataError {
 public:
  using DataError::DataError;
};

// NaN or infinity where a finite number is required.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cmg
