#include "puppetrack/error.hpp"

namespace puppetrack {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kAntiparallelAxes: return "AntiparallelAxes";
    case ErrorKind::kDegenerateBone: return "DegenerateBone";
    case ErrorKind::kMissingJoint: return "MissingJoint";
    case ErrorKind::kNoCorrespondences: return "NoCorrespondences";
    case ErrorKind::kInvalidProportions: return "InvalidProportions";
    case ErrorKind::kEmptyMesh: return "EmptyMesh";
    case ErrorKind::kBadIntrinsics: return "BadIntrinsics";
    case ErrorKind::kSingularSystem: return "SingularSystem";
    case ErrorKind::kEmptySurface: return "EmptySurface";
    case ErrorKind::kIoFailure: return "IoFailure";
    case ErrorKind::kTooFewFrames: return "TooFewFrames";
    case ErrorKind::kMalformedSequence: return "MalformedSequence";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace puppetrack
