// SPDX-License-Identifier: Apache-2.0
#include "s2s/errors.hpp"

namespace s2s {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::NotScalarLoss: return "NotScalarLoss";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::PositionOutOfRange: return "PositionOutOfRange";
    case ErrorKind::ZeroDirection: return "ZeroDirection";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::MissingPretrainedEncoder: return "MissingPretrainedEncoder";
    case ErrorKind::ColumnDimMismatch: return "ColumnDimMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::TargetOutOfRange: return "TargetOutOfRange";
    case ErrorKind::UnknownSelector: return "UnknownSelector";
    case ErrorKind::EmptySource: return "EmptySource";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::SeriesTooShort: return "SeriesTooShort";
    case ErrorKind::SentenceExceedsBudget: return "SentenceExceedsBudget";
    case ErrorKind::CheckpointIncompatible: return "CheckpointIncompatible";
    case ErrorKind::UnknownToggle: return "UnknownToggle";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::UnknownToggle:
    case ErrorKind::UnknownSelector:
    case ErrorKind::MissingPretrainedEncoder:
    case ErrorKind::ColumnDimMismatch:
      return 2;
    case ErrorKind::CheckpointIncompatible:
      return 3;
    case ErrorKind::IoError:
    case ErrorKind::EmptyCorpus:
    case ErrorKind::EmptyBatch:
    case ErrorKind::EmptySource:
    case ErrorKind::SentenceExceedsBudget:
    case ErrorKind::TargetOutOfRange:
      return 4;
    case ErrorKind::NonFiniteValue:
      return 5;
    default:
      return 1;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace s2s
