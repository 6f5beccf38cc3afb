#include "ldiag/error.hpp"

namespace ldiag {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kMalformedRow: return "MalformedRow";
    case Errc::kNonBinaryScore: return "NonBinaryScore";
    case Errc::kNonBinaryCell: return "NonBinaryCell";
    case Errc::kEmptyLearnerOrExercise: return "EmptyLearnerOrExercise";
    case Errc::kDuplicateRecord: return "DuplicateRecord";
    case Errc::kAllZeroExerciseRow: return "AllZeroExerciseRow";
    case Errc::kTooFewObservations: return "TooFewObservations";
    case Errc::kInvalidRange: return "InvalidRange";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kIoError: return "IoError";
    case Errc::kUsageError: return "UsageError";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kDimensionTooLarge: return "DimensionTooLarge";
    case Errc::kTooManyKnowledgePoints: return "TooManyKnowledgePoints";
    case Errc::kMissingChannel: return "MissingChannel";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kArityMismatch: return "ArityMismatch";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kEmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::kNoValidationCells: return "NoValidationCells";
    case Errc::kUnknownLearner: return "UnknownLearner";
    case Errc::kUnknownExercise: return "UnknownExercise";
    case Errc::kSingleClassLabels: return "SingleClassLabels";
    case Errc::kBatchTooSmall: return "BatchTooSmall";
    case Errc::kChainDiverged: return "ChainDiverged";
    case Errc::kNonScalarLoss: return "NonScalarLoss";
    case Errc::kEmptyTape: return "EmptyTape";
    case Errc::kMissingGrad: return "MissingGrad";
    case Errc::kLeakage: return "Leakage";
  }
  return "Unknown";
}

bool is_validation_error(Errc code) {
  switch (code) {
    case Errc::kMalformedRow:
    case Errc::kNonBinaryScore:
    case Errc::kNonBinaryCell:
    case Errc::kEmptyLearnerOrExercise:
    case Errc::kDuplicateRecord:
    case Errc::kAllZeroExerciseRow:
    case Errc::kTooFewObservations:
    case Errc::kInvalidRange:
    case Errc::kInvalidArgument:
    case Errc::kIoError:
    case Errc::kUsageError:
    case Errc::kUnknownLearner:
    case Errc::kUnknownExercise:
    case Errc::kTooManyKnowledgePoints:
    case Errc::kDimensionTooLarge:
      return true;
    default:
      return false;
  }
}

}  // namespace ldiag
