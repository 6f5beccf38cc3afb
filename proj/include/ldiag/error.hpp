#pragma once

#include <stdexcept>
#include <string>

namespace ldiag {

enum class Errc {
  // input validation
  kMalformedRow,
  kNonBinaryScore,
  kNonBinaryCell,
  kEmptyLearnerOrExercise,
  kDuplicateRecord,
  kAllZeroExerciseRow,
  kTooFewObservations,
  kInvalidRange,
  kInvalidArgument,
  kIoError,
  kUsageError,
  // model contracts
  kLengthMismatch,
  kDimensionMismatch,
  kDimensionTooLarge,
  kTooManyKnowledgePoints,
  kMissingChannel,
  kShapeMismatch,
  kArityMismatch,
  kEmptyInput,
  kEmptyTrainingSet,
  kNoValidationCells,
  kUnknownLearner,
  kUnknownExercise,
  kSingleClassLabels,
  kBatchTooSmall,
  // runtime
  kChainDiverged,
  kNonScalarLoss,
  kEmptyTape,
  kMissingGrad,
  kLeakage,
};

const char* errc_name(Errc code);

// True for errors caused by bad user input (files, flags, ids) rather than
// a failure while computing.
bool is_validation_error(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ldiag
