#pragma once

#include <stdexcept>
#include <string>

namespace qmono {

/// Failure category, mapped onto CLI exit codes (config=1, numeric=2, consistency=3).
enum class ErrorKind { Config = 1, Numeric = 2, Consistency = 3 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

// Bad arguments or configuration values.
struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error(ErrorKind::Config, w) {}
};

// Point outside the domain where a quantity is defined (e.g. inside a disk).
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct TangencyError : Error {
  TangencyError(const std::string& w, double t) : Error(ErrorKind::Numeric, w), time(t) {}
  double time;
};

struct EscapeError : Error {
  explicit EscapeError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct TwistError : Error {
  explicit TwistError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct AliasingError : Error {
  AliasingError(const std::string& w, long required) : Error(ErrorKind::Numeric, w), required_nodes(required) {}
  long required_nodes;
};

struct BracketError : Error {
  explicit BracketError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct BudgetError : Error {
  explicit BudgetError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct ModelError : Error {
  explicit ModelError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct BoundaryAmbiguityError : Error {
  explicit BoundaryAmbiguityError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct ResolutionError : Error {
  explicit ResolutionError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

// A Poincare section satisfying the required properties could not be built.
struct ConstructionError : Error {
  explicit ConstructionError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

// Internal cross-checks that failed (winding sums, section coverage, dimension mismatch).
struct ConsistencyError : Error {
  explicit ConsistencyError(const std::string& w) : Error(ErrorKind::Consistency, w) {}
};

}  // namespace qmono
