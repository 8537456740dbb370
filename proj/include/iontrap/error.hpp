#pragma once

#include <stdexcept>
#include <string>

namespace iontrap {

/// Broad failure class, used by the command line tool to pick an exit code.
enum class ErrorKind {
    config,     // invalid parameters or configuration
    numerical,  // integration or fitting failed
    io,         // unreadable or unwritable files, malformed data files
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// A precondition on physical parameters does not hold.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// a + q^2/2 <= 0: no confining time-averaged potential.
class UnstableConfinementError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Command-line misuse: missing inputs, empty lists or files.
class UsageError : public DomainError {
public:
    using DomainError::DomainError;
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

class DivisionByZeroError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Two ions came closer than the collision guard distance.
class CollisionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Non-finite or runaway state during integration.
class InstabilityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Data cannot constrain the requested model (flat profile, too few points, ...).
class DegenerateDataError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class InsufficientDataError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A resonance scan whose maximum is not clearly interior to the range.
class NotBracketedError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// No parameter value reproduces the measured quantity.
class OutOfRangeError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// An ensemble mixes trajectories from different configurations.
class ConfigMismatchError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Wrong input kind, e.g. a secular-mode trajectory where RF motion is required.
class InputKindError : public DomainError {
public:
    using DomainError::DomainError;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class ParseError : public IoError {
public:
    using IoError::IoError;
};

}  // namespace iontrap
