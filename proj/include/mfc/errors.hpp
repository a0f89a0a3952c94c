#pragma once

#include <stdexcept>
#include <string>

namespace mfc {

enum class ErrorCode {
  invalid_argument,
  cfl_violation,
  positivity_loss,
  not_converged,
  split_unavailable,
  sparse_cells,
  absolute_continuity,
  config,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "INVALID_ARGUMENT";
    case ErrorCode::cfl_violation: return "CFL_VIOLATION";
    case ErrorCode::positivity_loss: return "POSITIVITY_LOSS";
    case ErrorCode::not_converged: return "NOT_CONVERGED";
    case ErrorCode::split_unavailable: return "SPLIT_UNAVAILABLE";
    case ErrorCode::sparse_cells: return "SPARSE_CELLS";
    case ErrorCode::absolute_continuity: return "ABSOLUTE_CONTINUITY_VIOLATION";
    case ErrorCode::config: return "CONFIG";
    case ErrorCode::io: return "IO";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when the time step is too coarse for the advective CFL bound.
/// `required_steps` is the smallest step count that satisfies it.
class CflViolation : public Error {
 public:
  CflViolation(const std::string& what, int required_steps)
      : Error(ErrorCode::cfl_violation, what), required_steps_(required_steps) {}

  int required_steps() const noexcept { return required_steps_; }

 private:
  int required_steps_;
};

/// Configuration error; `field` names the offending JSON path (e.g. "grid.cells").
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(ErrorCode::config, field + ": " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorCode::invalid_argument, what);
}

}  // namespace detail
}  // namespace mfc
