#pragma once

#include <stdexcept>
#include <string>

namespace iosw {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed container shapes: dimension mismatches, duplicate labels,
/// missing rows, unknown codes.
class StructuralError : public Error {
  public:
    using Error::Error;
};

/// A table violates the row/column balance identities.
class BalanceError : public Error {
  public:
    using Error::Error;
};

/// A sector with zero (or negative) total output where positive output is
/// required.
class DegenerateSectorError : public Error {
  public:
    using Error::Error;
};

/// The technical-coefficient matrix fails the Hawkins-Simon productivity
/// condition.
class HawkinsSimonError : public Error {
  public:
    using Error::Error;
};

/// Operator inputs that contradict each other (e.g. value added that does not
/// reproduce unit base-year prices).
class InconsistentInputsError : public Error {
  public:
    using Error::Error;
};

/// A reconstructed table left the admissible region (negative final demand or
/// value added).
class InfeasibleStateError : public Error {
  public:
    using Error::Error;
};

/// A dynamic state crossed the admissibility boundary (nonpositive quantity
/// or derived price). Carries the first offending sector index.
class AdmissibilityError : public Error {
  public:
    AdmissibilityError(const std::string& what, int sector)
        : Error(what), sector_(sector) {}
    int sector() const { return sector_; }

  private:
    int sector_;
};

/// Integration could not take a step even at the minimum step size.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

/// An operation was called outside its contract (e.g. shocking a state that
/// is not at equilibrium).
class ContractViolationError : public Error {
  public:
    using Error::Error;
};

/// Input text could not be parsed; carries 1-based line and field positions.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::size_t line, std::size_t field = 0)
        : Error("line " + std::to_string(line) +
                (field ? ", field " + std::to_string(field) : std::string()) +
                ": " + what),
          line_(line), field_(field) {}
    std::size_t line() const { return line_; }
    std::size_t field() const { return field_; }

  private:
    std::size_t line_;
    std::size_t field_;
};

/// A single optimization run had to be abandoned.
class FitAbortedError : public Error {
  public:
    using Error::Error;
};

/// Every restart of an ensemble failed; carries per-run diagnostics in what().
class EnsembleError : public Error {
  public:
    using Error::Error;
};

/// Both adjustment speeds of a sector are zero, so its quantity/price
/// preference has no direction to project.
class UndefinedDirectionError : public Error {
  public:
    using Error::Error;
};

} // namespace iosw
