#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace homwarp {

enum class ErrorKind {
  DegenerateHomography,
  SingularMatrix,
  PointAtInfinity,
  DegenerateConfiguration,
  DimensionMismatch,
  ShapeMismatch,
  NonFiniteActivation,
  StaleCache,
  NonFiniteUpdate,
  DivergedTraining,
  UnreadableImage,
  ResampleExhausted,
  EmptyCorpus,
  CorruptDataset,
  CorruptCheckpoint,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DegenerateHomography: return "DegenerateHomography";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::PointAtInfinity: return "PointAtInfinity";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::UnreadableImage: return "UnreadableImage";
    case ErrorKind::ResampleExhausted: return "ResampleExhausted";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::CorruptDataset: return "CorruptDataset";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI in particular) can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace homwarp
