#include "pfm/error.hpp"

#include <array>
#include <utility>

namespace pfm {

namespace {

constexpr std::array kNames = {
    std::pair{ErrorCode::DuplicateType, "DuplicateType"},
    std::pair{ErrorCode::CyclicSupertype, "CyclicSupertype"},
    std::pair{ErrorCode::UnknownType, "UnknownType"},
    std::pair{ErrorCode::AbstractInstantiation, "AbstractInstantiation"},
    std::pair{ErrorCode::FieldTypeMismatch, "FieldTypeMismatch"},
    std::pair{ErrorCode::MissingField, "MissingField"},
    std::pair{ErrorCode::UnknownField, "UnknownField"},
    std::pair{ErrorCode::DanglingRef, "DanglingRef"},
    std::pair{ErrorCode::IllegalMoveTransition, "IllegalMoveTransition"},
    std::pair{ErrorCode::PatternSyntax, "PatternSyntax"},
    std::pair{ErrorCode::DuplicateTag, "DuplicateTag"},
    std::pair{ErrorCode::AllNotAlone, "AllNotAlone"},
    std::pair{ErrorCode::UnknownTag, "UnknownTag"},
    std::pair{ErrorCode::PolicySyntax, "PolicySyntax"},
    std::pair{ErrorCode::InvalidPolicy, "InvalidPolicy"},
    std::pair{ErrorCode::UnknownDecider, "UnknownDecider"},
    std::pair{ErrorCode::DynamicChainOverflow, "DynamicChainOverflow"},
    std::pair{ErrorCode::DeciderFailure, "DeciderFailure"},
    std::pair{ErrorCode::KindMismatch, "KindMismatch"},
    std::pair{ErrorCode::NoActiveCall, "NoActiveCall"},
    std::pair{ErrorCode::UnknownHandle, "UnknownHandle"},
    std::pair{ErrorCode::NoApplicableRule, "NoApplicableRule"},
    std::pair{ErrorCode::Base64OnNonPrimitiveArray, "Base64OnNonPrimitiveArray"},
    std::pair{ErrorCode::UnknownTransform, "UnknownTransform"},
    std::pair{ErrorCode::CachedMethodArity, "CachedMethodArity"},
    std::pair{ErrorCode::UnknownClassRef, "UnknownClassRef"},
    std::pair{ErrorCode::MalformedWire, "MalformedWire"},
    std::pair{ErrorCode::TagOrderViolation, "TagOrderViolation"},
    std::pair{ErrorCode::DuplicateNode, "DuplicateNode"},
    std::pair{ErrorCode::UnknownNode, "UnknownNode"},
    std::pair{ErrorCode::StructuralMismatch, "StructuralMismatch"},
    std::pair{ErrorCode::DuplicateService, "DuplicateService"},
    std::pair{ErrorCode::UnknownService, "UnknownService"},
    std::pair{ErrorCode::AccessDenied, "AccessDenied"},
    std::pair{ErrorCode::MethodNotFound, "MethodNotFound"},
    std::pair{ErrorCode::MovedObject, "MovedObject"},
    std::pair{ErrorCode::NetworkDown, "NetworkDown"},
    std::pair{ErrorCode::ScenarioSyntax, "ScenarioSyntax"},
};

}  // namespace

std::string_view to_string(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

bool parse_error_code(std::string_view name, ErrorCode& out) {
  for (const auto& [c, n] : kNames) {
    if (name == n) {
      out = c;
      return true;
    }
  }
  return false;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace pfm
