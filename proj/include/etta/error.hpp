#ifndef ETTA_ERROR_HPP
#define ETTA_ERROR_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace etta {

enum class ErrorCode {
  ZeroVector,
  DimensionMismatch,
  BadMagic,
  VersionUnsupported,
  TruncatedFile,
  TruncatedRecord,
  DimMismatchWithMetadata,
  BadMetadata,
  DegenerateEnsemble,
  EmptyStream,
  SeparationInfeasible,
  InvalidConfig,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::DimMismatchWithMetadata: return "DimMismatchWithMetadata";
    case ErrorCode::BadMetadata: return "BadMetadata";
    case ErrorCode::DegenerateEnsemble: return "DegenerateEnsemble";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::SeparationInfeasible: return "SeparationInfeasible";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// Single exception type for the library. `offset` is set for file-format
// errors, `class_index` for errors tied to one class of a prompt bank.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  std::optional<std::uint64_t> offset;
  std::optional<std::size_t> class_index;

  // True for errors caused by malformed, mismatched or unreadable input files.
  bool is_input_error() const noexcept {
    switch (code_) {
      case ErrorCode::BadMagic:
      case ErrorCode::VersionUnsupported:
      case ErrorCode::TruncatedFile:
      case ErrorCode::TruncatedRecord:
      case ErrorCode::DimMismatchWithMetadata:
      case ErrorCode::BadMetadata:
      case ErrorCode::ZeroVector:
      case ErrorCode::DimensionMismatch:
      case ErrorCode::EmptyStream:
      case ErrorCode::Io:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

}  // namespace etta

#endif  // ETTA_ERROR_HPP
