#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace isde {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Two points coincide where a pair force has to be evaluated.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Eigensolver failure or loss of numerical conditioning.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The integrator could not find an admissible step within its substep budget.
class CollisionError : public Error {
 public:
  CollisionError(const std::string& what, std::size_t label_a, std::size_t label_b, double time)
      : Error(what), label_a_(label_a), label_b_(label_b), time_(time) {}

  std::size_t label_a() const noexcept { return label_a_; }
  std::size_t label_b() const noexcept { return label_b_; }
  double time() const noexcept { return time_; }

 private:
  std::size_t label_a_;
  std::size_t label_b_;
  double time_;
};

}  // namespace isde
