#pragma once

#include <stdexcept>
#include <string>

namespace awb {

enum class ErrorKind {
  ShapeMismatch,
  InvalidHyperparam,
  NonFiniteValue,
  LabelOutOfRange,
  NotScalar,
  DisconnectedGraph,
  IncompatibleLayer,
  IoError,
  BadMagic,
  UnsupportedVersion,
  ChecksumMismatch,
  EmptyClass,
  UnreadableDirectory,
  TooFewSamples,
  InvalidK,
  DecodeError,
  UnsupportedFormat,
  EmptySplit,
  EmptyDataset,
  LengthMismatch,
  SingleClass,
  InvalidTarget,
  EmptySampleSet,
  WrongSplit,
  NoFrames,
  DivergenceDetected,
  InvalidConfig,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidHyperparam: return "InvalidHyperparam";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::IncompatibleLayer: return "IncompatibleLayer";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::UnreadableDirectory: return "UnreadableDirectory";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::DecodeError: return "DecodeError";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::InvalidTarget: return "InvalidTarget";
    case ErrorKind::EmptySampleSet: return "EmptySampleSet";
    case ErrorKind::WrongSplit: return "WrongSplit";
    case ErrorKind::NoFrames: return "NoFrames";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Library-wide exception. `kind()` identifies the failure class so callers
/// (and the CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace awb
