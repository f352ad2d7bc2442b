#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spinglass {

/// Machine-readable error categories; the CLI prints these names verbatim.
enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  IndexOutOfRange,
  InvalidPath,
  NotPsd,
  NotInL,
  Divergent,
  Singular,
  BudgetExceeded,
  ConfigParse,
  ConfigSemantic,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::IndexOutOfRange: return "index_out_of_range";
    case ErrorCode::InvalidPath: return "invalid_path";
    case ErrorCode::NotPsd: return "not_psd";
    case ErrorCode::NotInL: return "not_in_admissible_set";
    case ErrorCode::Divergent: return "divergent";
    case ErrorCode::Singular: return "singular";
    case ErrorCode::BudgetExceeded: return "budget_exceeded";
    case ErrorCode::ConfigParse: return "config_parse";
    case ErrorCode::ConfigSemantic: return "config_semantic";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace spinglass
