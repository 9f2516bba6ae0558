#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hrm {

enum class ErrorCode {
  kInvalidInput,
  kInvalidComponents,
  kDegenerateFit,
  kOutOfBounds,
  kInvalidDataset,
  kZeroSupport,
  kMissingAsset,
  kParseError,
  kIncompatibleModel,
  kCorruptModel,
  kInvalidSpec,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kInvalidComponents: return "InvalidComponents";
    case ErrorCode::kDegenerateFit: return "DegenerateFit";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kInvalidDataset: return "InvalidDataset";
    case ErrorCode::kZeroSupport: return "ZeroSupport";
    case ErrorCode::kMissingAsset: return "MissingAsset";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIncompatibleModel: return "IncompatibleModel";
    case ErrorCode::kCorruptModel: return "CorruptModel";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
  }
  return "Unknown";
}

/// All library failures surface as this exception; `code()` identifies the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace hrm
