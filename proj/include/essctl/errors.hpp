#pragma once

#include <stdexcept>
#include <string>

namespace essctl {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad parameters, contract violations and inconsistent inputs. CLI exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Solver failures and diverging simulations. CLI exit code 3.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Unreadable, malformed or inconsistent files. CLI exit code 4.
class IoError : public Error {
public:
  using Error::Error;
};

#define ESSCTL_ERROR(Name, Base)                                                                   \
  class Name : public Base {                                                                       \
  public:                                                                                          \
    using Base::Base;                                                                              \
  }

ESSCTL_ERROR(NoConvergence, NumericalError);
ESSCTL_ERROR(SingularJacobian, NumericalError);
ESSCTL_ERROR(SingularSystem, NumericalError);
ESSCTL_ERROR(NoStabilizingSeed, NumericalError);
ESSCTL_ERROR(NonFiniteState, NumericalError);
ESSCTL_ERROR(RankDeficient, NumericalError);

ESSCTL_ERROR(BudgetExceeded, ConfigError);
ESSCTL_ERROR(DimensionMismatch, ConfigError);
ESSCTL_ERROR(DuplicateId, ConfigError);

ESSCTL_ERROR(ParseError, IoError);
ESSCTL_ERROR(VersionMismatch, IoError);
ESSCTL_ERROR(InvariantViolation, IoError);

#undef ESSCTL_ERROR

} // namespace essctl
