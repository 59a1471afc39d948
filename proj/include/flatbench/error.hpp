#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flatbench {

enum class ErrorCode {
  BadParams,
  BadGrid,
  BadConfig,
  EmptyMask,
  RasterTooSmall,
  NoWrinkle,
  NoContact,
  Unstable,
  NoIntersection,
  Degenerate,
  UnknownSession,
  SessionDone,
  InvalidAction,
  Busy,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::BadGrid: return "BadGrid";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::RasterTooSmall: return "RasterTooSmall";
    case ErrorCode::NoWrinkle: return "NoWrinkle";
    case ErrorCode::NoContact: return "NoContact";
    case ErrorCode::Unstable: return "Unstable";
    case ErrorCode::NoIntersection: return "NoIntersection";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::SessionDone: return "SessionDone";
    case ErrorCode::InvalidAction: return "InvalidAction";
    case ErrorCode::Busy: return "Busy";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the HTTP layer in particular) can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace flatbench
