#pragma once

#include <stdexcept>
#include <string>

namespace dronenet {

// Base for every error this library raises. Callers that only need to
// report and exit can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad grid, duplicate tasks, out-of-range params.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: dimension mismatch, stepping a finished episode, empty window.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Corrupt or incompatible serialized data.
class FormatError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (last residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Exhaustive search refused because the node estimate exceeds the budget.
class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, double estimated_nodes)
      : Error(what), estimated_nodes_(estimated_nodes) {}
  double estimated_nodes() const { return estimated_nodes_; }

 private:
  double estimated_nodes_;
};

}  // namespace dronenet
