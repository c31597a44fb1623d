// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fmlab {

/// Argument outside the mathematical domain of an operation (t outside [0,1],
/// tau <= 0, gamma_t = 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An operation's documented precondition does not hold for the given object
/// (for example the PF-ODE Jacobian on a schedule with alpha != 0).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Iterative or quadrature routine failed to reach its tolerance.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double achieved)
      : std::runtime_error(what + " (achieved " + std::to_string(achieved) + ")"),
        achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

/// Step size of the adaptive integrator collapsed below its floor.
class StiffnessError : public std::runtime_error {
 public:
  StiffnessError(const std::string& what, double t)
      : std::runtime_error(what + " at t=" + std::to_string(t)), t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

/// A problem too large for an exact routine (component-pair cap, assignment cap).
class SizeError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Invalid experiment configuration; maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fmlab
