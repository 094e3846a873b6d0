#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace quadmpc {

/// Coarse failure classes. The CLI maps each to a distinct exit code and
/// prints the category name so scripts can branch on it.
enum class ErrorCategory {
  InvalidArgument,
  InvalidConfig,
  InsufficientExcitation,
  InvariantViolation,
  NotConverged,
  Infeasible,
  Io,
  Network,
};

inline std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::InvalidArgument: return "invalid_argument";
    case ErrorCategory::InvalidConfig: return "invalid_config";
    case ErrorCategory::InsufficientExcitation: return "insufficient_excitation";
    case ErrorCategory::InvariantViolation: return "invariant_violation";
    case ErrorCategory::NotConverged: return "not_converged";
    case ErrorCategory::Infeasible: return "infeasible";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Network: return "network";
  }
  return "unknown";
}

inline int exit_code(ErrorCategory c) {
  return 2 + static_cast<int>(c);
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& what) {
  throw Error(c, what);
}

inline void require(bool cond, const std::string& what,
                    ErrorCategory c = ErrorCategory::InvalidArgument) {
  if (!cond) fail(c, what);
}

}  // namespace quadmpc
