#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hcm {

// Error categories map one-to-one onto the status codes of the C API.
enum class ErrorCode {
  InvalidArgument = 1,
  DomainMembership,
  InvalidRegion,
  GeometryInvalid,
  MeshGeneration,
  MeshInvalid,
  Parse,
  Io,
  Configuration,
  NonConvergence,
  NotSpd,
  Singular,
  NonConvergentExpansion,
  EmptySelection,
  Internal,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

// Carries the residual history so callers can inspect how CG stalled.
class SolverError : public Error {
public:
  SolverError(ErrorCode code, const std::string& what, std::vector<double> history)
      : Error(code, what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const noexcept { return history_; }

private:
  std::vector<double> history_;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace hcm
