#pragma once

#include <stdexcept>
#include <string>

namespace molext {

// Input outside the mathematical domain of an operation (negative width,
// non-positive lifetime, ...).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent arguments (empty grid, mismatched lengths, ...).
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class FitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// No resonance stands out of the wing noise.
class NoPeakError : public FitError {
public:
  using FitError::FitError;
};

// The visibility signature is below the noise floor; fit would be ill-posed.
class LowContrastError : public FitError {
public:
  using FitError::FitError;
};

// Not enough independent data to fix all parameters (e.g. joint fit over
// fewer than four distinct analyzer angles).
class DegenerateError : public FitError {
public:
  using FitError::FitError;
};

} // namespace molext
