#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lemmse {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  DimensionMismatch,
  NonSymmetric,
  NegativeEigenvalueBeyondTolerance,
  NonPositiveEpsilon,
  SideTooLarge,
  NonPositiveStd,
  UnsupportedCombination,
  DenseLimitExceeded,
  EmptyStratum,
  AllWeightsOffSupport,
  InsufficientRetention,
  SizeLimitExceeded,
  MixedShapes,
  UnreadableFile,
  UnsupportedBitDepth,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so the
/// CLI can report it without parsing messages.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace lemmse
