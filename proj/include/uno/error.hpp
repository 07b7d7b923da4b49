#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace uno {

enum class ErrorCode {
  NonFiniteGradient,
  DegenerateGradient,
  LayoutMismatch,
  NonFiniteActivation,
  NonFiniteLoss,
  InsufficientSamples,
  NonPsdCovariance,
  BadMagic,
  CountMismatch,
  TruncatedFile,
  EmptyForgetSet,
  EmptyRetainSet,
  MissingPair,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace uno
