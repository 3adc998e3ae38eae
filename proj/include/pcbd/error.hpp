#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcbd {

enum class ErrorKind {
  DegenerateCloud,
  KTooLarge,
  ParseError,
  IoError,
  EmptyCloud,
  SizeMismatch,
  SizeLimit,
  ShapeMismatch,
  EmptyInput,
  LabelOutOfRange,
  NotNormalized,
  ConfigMismatch,
  UntrainedModel,
  FractionTooSmall,
  PointAtOrigin,
  OrderTooHigh,
  NothingToPoison,
  EigenFailure,
  ZeroResidual,
  AllPointsRemoved,
  ConfigError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so callers (and the
// CLI's exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pcbd
