#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nawt {

enum class ErrorCode {
  Domain,
  Validation,
  Parse,
  NonFinite,
  EmptyClass,
  RankDeficientDesign,
  NonConvergence,
  SingularMatrix,
  ZeroDenominator,
  TooManyFailures,
  Io,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Domain: return "domain_error";
    case ErrorCode::Validation: return "validation_error";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::EmptyClass: return "empty_class";
    case ErrorCode::RankDeficientDesign: return "rank_deficient_design";
    case ErrorCode::NonConvergence: return "non_convergence";
    case ErrorCode::SingularMatrix: return "singular_matrix";
    case ErrorCode::ZeroDenominator: return "zero_denominator";
    case ErrorCode::TooManyFailures: return "too_many_failures";
    case ErrorCode::Io: return "io_error";
  }
  return "unknown";
}

// Process exit code for the command-line front end.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Validation:
    case ErrorCode::Parse:
    case ErrorCode::EmptyClass:
    case ErrorCode::Domain:
    case ErrorCode::NonFinite:
    case ErrorCode::RankDeficientDesign:
      return 2;
    case ErrorCode::NonConvergence:
    case ErrorCode::SingularMatrix:
    case ErrorCode::ZeroDenominator:
    case ErrorCode::TooManyFailures:
      return 3;
    case ErrorCode::Io:
      return 4;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace nawt
