#pragma once

#include <stdexcept>
#include <string>

namespace airway {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes,
// so every failure a caller can branch on gets its own code.
enum class ErrorCode {
  UnsupportedFormat,
  CorruptHeader,
  UnsupportedDatatype,
  IoFailure,
  DegenerateRange,
  DimMismatch,
  EmptyMask,
  EmptyTargetSet,
  EmptyCenterline,
  EmptySet,
  DisconnectedSkeleton,
  DegenerateSkeleton,
  UngradedTree,
  UnlabeledTree,
  UnparsedTree,
  BranchNotFound,
  GapTooLarge,
  SpecDoesNotFit,
  InconsistentCounts,
  OutOfRange,
  SingularPoint,
  ShapeMismatch,
  IndivisibleInput,
  BadConfig,
};

const char* error_code_name(ErrorCode code);

class AirwayError : public std::runtime_error {
 public:
  AirwayError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace airway
