#pragma once

#include <stdexcept>
#include <string>

namespace herdid {

/// Classified failure causes. Tests match on the code, the CLI maps
/// NonFinite to exit 3 and everything else to exit 2.
enum class Err {
  MissingFile,
  WrongBitDepth,
  MissingMetadata,
  UnwritablePath,
  DimensionMismatch,
  EmptyCloud,
  EmptyInput,
  RangeError,
  InvalidManifest,
  DegenerateNegative,
  NoValidAnchors,
  NonFinite,
  ShapeMismatch,
  OutsideFrustum,
  RejectionBudget,
  ParseError,
  BadConfig,
};

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) {
  throw Error(code, what);
}

inline const char* err_name(Err code) {
  switch (code) {
    case Err::MissingFile: return "missing-file";
    case Err::WrongBitDepth: return "wrong-bit-depth";
    case Err::MissingMetadata: return "missing-metadata";
    case Err::UnwritablePath: return "unwritable-path";
    case Err::DimensionMismatch: return "dimension-mismatch";
    case Err::EmptyCloud: return "empty-cloud";
    case Err::EmptyInput: return "empty-input";
    case Err::RangeError: return "range-error";
    case Err::InvalidManifest: return "invalid-manifest";
    case Err::DegenerateNegative: return "degenerate-negative";
    case Err::NoValidAnchors: return "no-valid-anchors";
    case Err::NonFinite: return "non-finite";
    case Err::ShapeMismatch: return "shape-mismatch";
    case Err::OutsideFrustum: return "outside-frustum";
    case Err::RejectionBudget: return "rejection-budget";
    case Err::ParseError: return "parse-error";
    case Err::BadConfig: return "bad-config";
  }
  return "unknown";
}

}  // namespace herdid
