#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dhsplan {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (JSON syntax, unreadable file).
class ParseError : public Error {
public:
  using Error::Error;
};

/// One defect found while validating input data.
struct Issue {
  std::string entity;  // e.g. "pipe p1"
  std::string message; // e.g. "m_min < m_max violated"
};

/// Aggregates every defect found in one validation pass.
class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<Issue> issues)
      : Error(join(issues)), issues_(std::move(issues)) {}
  ValidationError(std::string entity, std::string message)
      : ValidationError(std::vector<Issue>{{std::move(entity), std::move(message)}}) {}

  const std::vector<Issue> &issues() const noexcept { return issues_; }

private:
  static std::string join(const std::vector<Issue> &issues) {
    std::string out;
    for (const auto &i : issues) {
      if (!out.empty())
        out += "; ";
      out += i.entity.empty() ? i.message : i.entity + ": " + i.message;
    }
    return out;
  }

  std::vector<Issue> issues_;
};

/// Required fields or unit metadata missing from the network file.
class UnitConventionError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class EmptyRegion : public Error {
public:
  using Error::Error;
};

class UnboundedRegion : public Error {
public:
  using Error::Error;
};

class UnsupportedVariant : public Error {
public:
  using Error::Error;
};

class InfeasibleBoundsError : public Error {
public:
  using Error::Error;
};

class EmptyBox : public Error {
public:
  using Error::Error;
};

class MissingNominalFlow : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

class NotOptimal : public Error {
public:
  using Error::Error;
};

class NoFeasibleIncumbent : public Error {
public:
  using Error::Error;
};

class FixedFlowInfeasible : public Error {
public:
  using Error::Error;
};

class NumericalFailure : public Error {
public:
  using Error::Error;
};

} // namespace dhsplan
