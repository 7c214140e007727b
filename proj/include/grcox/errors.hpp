#pragma once

#include <stdexcept>
#include <string>

namespace grcox {

// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Matrix not positive definite (after one jitter attempt) or condition number above 1e12.
class SingularError : public Error {
 public:
  SingularError(const std::string& what, double min_eigenvalue)
      : Error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class NoEventsError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class RankError : public Error {
 public:
  using Error::Error;
};

class DesignError : public Error {
 public:
  using Error::Error;
};

// Raking Newton iteration diverged, hit its iteration cap, or produced g above the cap.
class CalibrationFailure : public Error {
 public:
  CalibrationFailure(const std::string& what, int worst_constraint, double worst_residual)
      : Error(what), worst_constraint_(worst_constraint), worst_residual_(worst_residual) {}
  int worst_constraint() const noexcept { return worst_constraint_; }
  double worst_residual() const noexcept { return worst_residual_; }

 private:
  int worst_constraint_;
  double worst_residual_;
};

// Truth columns requested for a subject that is not in the validation sample.
class MaskError : public Error {
 public:
  using Error::Error;
};

}  // namespace grcox
