#pragma once

#include <stdexcept>
#include <string>

namespace qstopwatch {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree, or an index falls outside the basis.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// An input violates a documented precondition (Hermiticity, support, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A time was requested that is not an integer multiple of the step.
class GridError : public Error {
public:
  using Error::Error;
};

/// Evaluation outside the domain of a closed-form expression.
class DomainError : public Error {
public:
  using Error::Error;
};

/// A projection removed (numerically) all of the state.
class AnnihilatedState : public Error {
public:
  AnnihilatedState(const std::string &what, double probability)
      : Error(what), probability_(probability) {}
  double probability() const noexcept { return probability_; }

private:
  double probability_;
};

/// Too much conditional probability reached the edges of a finite lattice.
class ContaminationError : public Error {
public:
  using Error::Error;
};

} // namespace qstopwatch
