#pragma once

#include <stdexcept>
#include <string>

namespace thg {

// Broken call contract: bad shapes, invalid configuration, misuse of an API.
class ContractError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input outside an operation's mathematical domain (non-finite values,
// arctanh at |x| >= 1, points on or outside the ball shell).
class DomainError : public std::domain_error {
  using std::domain_error::domain_error;
};

// Numerical degeneracy that only occurs in pathological float regimes,
// e.g. a vanishing Mobius denominator.
class NumericalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss; carries the offending step.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

// Filesystem or serialization failure.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace thg
