// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace s2s {

enum class ErrorKind {
  ShapeMismatch,
  NonFiniteValue,
  NotScalarLoss,
  EmptySequence,
  AllMasked,
  PositionOutOfRange,
  ZeroDirection,
  InvalidProbability,
  ConfigInvalid,
  MissingPretrainedEncoder,
  ColumnDimMismatch,
  EmptyBatch,
  TargetOutOfRange,
  UnknownSelector,
  EmptySource,
  EmptyCorpus,
  SeriesTooShort,
  SentenceExceedsBudget,
  CheckpointIncompatible,
  UnknownToggle,
  IoError,
};

const char* to_string(ErrorKind kind);

// Process exit status for the CLI. Related kinds share a category.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace s2s
