#include "lemmse/error.hpp"

namespace lemmse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::InvalidArgument: return "invalid_argument";
  case ErrorCode::ShapeMismatch: return "shape_mismatch";
  case ErrorCode::DimensionMismatch: return "dimension_mismatch";
  case ErrorCode::NonSymmetric: return "non_symmetric";
  case ErrorCode::NegativeEigenvalueBeyondTolerance: return "negative_eigenvalue_beyond_tolerance";
  case ErrorCode::NonPositiveEpsilon: return "non_positive_epsilon";
  case ErrorCode::SideTooLarge: return "side_too_large";
  case ErrorCode::NonPositiveStd: return "non_positive_std";
  case ErrorCode::UnsupportedCombination: return "unsupported_combination";
  case ErrorCode::DenseLimitExceeded: return "dense_limit_exceeded";
  case ErrorCode::EmptyStratum: return "empty_stratum";
  case ErrorCode::AllWeightsOffSupport: return "all_weights_off_support";
  case ErrorCode::InsufficientRetention: return "insufficient_retention";
  case ErrorCode::SizeLimitExceeded: return "size_limit_exceeded";
  case ErrorCode::MixedShapes: return "mixed_shapes";
  case ErrorCode::UnreadableFile: return "unreadable_file";
  case ErrorCode::UnsupportedBitDepth: return "unsupported_bit_depth";
  case ErrorCode::InvalidConfig: return "invalid_config";
  }
  return "unknown";
}

} // namespace lemmse
