#pragma once

#include <stdexcept>
#include <string>

namespace phgrid {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical parameters violate a model invariant (e.g. L_xyz not positive definite).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The algebraic equilibrium equations have no solution for the given inputs.
class NoEquilibriumError : public Error {
 public:
  using Error::Error;
};

/// A network description cannot be turned into a well-posed ODE.
class AssemblyError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to converge.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// An operating point does not satisfy the device or network equations.
class InconsistentOperatingPoint : public Error {
 public:
  InconsistentOperatingPoint(const std::string& what, std::string residual_name)
      : Error(what), residual_name_(std::move(residual_name)) {}

  const std::string& residual_name() const noexcept { return residual_name_; }

 private:
  std::string residual_name_;
};

/// Integration produced a non-finite or runaway state.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double time) : Error(what), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace phgrid
