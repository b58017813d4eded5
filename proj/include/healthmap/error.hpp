#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace healthmap {

enum class ErrorCode {
  // hm-core
  kDuplicateId,
  kUnknownParent,
  kUnknownModule,
  kUnknownDetector,
  kZeroSeverity,
  kStructureInvalid,
  // shm-codec
  kBadMagic,
  kBadVersion,
  kHeaderCrcMismatch,
  kBodyCrcMismatch,
  kLengthMismatch,
  kOffsetOutOfBounds,
  kOffsetMisaligned,
  kLinkCycle,
  kCountMismatch,
  kInconsistentLink,
  kBadFieldValue,
  kCountOverflow,
  kNotAppendOnly,
  // hm-compiler
  kXmlSyntax,
  kSchemaViolation,
  kUnresolvedReference,
  kBadEnumValue,
  kIdRangeCollision,
  kMissingSymbol,
  // sched-affinity
  kUnknownSubmodule,
  kNoCoreIds,
  // hierarchy
  kTooManyEntries,
  kCrcMismatch,
  kUnknownNode,
  kMalformedMessage,
  kScenarioInvalid,
  // footprint
  kInvalidCoreCount,
  // text inputs (task sets, report lines, mapping files)
  kParseError,
  kIoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kUnknownParent: return "UnknownParent";
    case ErrorCode::kUnknownModule: return "UnknownModule";
    case ErrorCode::kUnknownDetector: return "UnknownDetector";
    case ErrorCode::kZeroSeverity: return "ZeroSeverity";
    case ErrorCode::kStructureInvalid: return "StructureInvalid";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kBadVersion: return "BadVersion";
    case ErrorCode::kHeaderCrcMismatch: return "HeaderCrcMismatch";
    case ErrorCode::kBodyCrcMismatch: return "BodyCrcMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kOffsetOutOfBounds: return "OffsetOutOfBounds";
    case ErrorCode::kOffsetMisaligned: return "OffsetMisaligned";
    case ErrorCode::kLinkCycle: return "LinkCycle";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kInconsistentLink: return "InconsistentLink";
    case ErrorCode::kBadFieldValue: return "BadFieldValue";
    case ErrorCode::kCountOverflow: return "CountOverflow";
    case ErrorCode::kNotAppendOnly: return "NotAppendOnly";
    case ErrorCode::kXmlSyntax: return "XmlSyntax";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kUnresolvedReference: return "UnresolvedReference";
    case ErrorCode::kBadEnumValue: return "BadEnumValue";
    case ErrorCode::kIdRangeCollision: return "IdRangeCollision";
    case ErrorCode::kMissingSymbol: return "MissingSymbol";
    case ErrorCode::kUnknownSubmodule: return "UnknownSubmodule";
    case ErrorCode::kNoCoreIds: return "NoCoreIds";
    case ErrorCode::kTooManyEntries: return "TooManyEntries";
    case ErrorCode::kCrcMismatch: return "CrcMismatch";
    case ErrorCode::kUnknownNode: return "UnknownNode";
    case ErrorCode::kMalformedMessage: return "MalformedMessage";
    case ErrorCode::kScenarioInvalid: return "ScenarioInvalid";
    case ErrorCode::kInvalidCoreCount: return "InvalidCoreCount";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

/// All domain failures are reported through this exception; `code()` is the
/// machine-checkable part, `what()` carries a human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace healthmap
