#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pfm {

enum class ErrorCode {
  // object model
  DuplicateType,
  CyclicSupertype,
  UnknownType,
  AbstractInstantiation,
  FieldTypeMismatch,
  MissingField,
  UnknownField,
  DanglingRef,
  IllegalMoveTransition,
  // patterns and policies
  PatternSyntax,
  DuplicateTag,
  AllNotAlone,
  UnknownTag,
  PolicySyntax,
  InvalidPolicy,
  UnknownDecider,
  DynamicChainOverflow,
  DeciderFailure,
  // engine
  KindMismatch,
  NoActiveCall,
  UnknownHandle,
  NoApplicableRule,
  // codec
  Base64OnNonPrimitiveArray,
  UnknownTransform,
  CachedMethodArity,
  UnknownClassRef,
  MalformedWire,
  TagOrderViolation,
  // simulator
  DuplicateNode,
  UnknownNode,
  StructuralMismatch,
  DuplicateService,
  UnknownService,
  AccessDenied,
  MethodNotFound,
  MovedObject,
  NetworkDown,
  // scenarios
  ScenarioSyntax,
};

std::string_view to_string(ErrorCode code);

/// Parses the name produced by to_string; returns false for unknown names.
bool parse_error_code(std::string_view name, ErrorCode& out);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

  /// Message without the "<Code>: " prefix that what() carries.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace pfm
