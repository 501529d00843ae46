#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pfm {

/// Context dimensions, most significant first. The order is the fixed
/// precedence order used when rules conflict.
enum class Dimension : std::uint8_t {
  Thread,
  AgentType,
  AgentInstance,
  Parameter,
  Method,
  Service,
  Field,
  ObjectType,
  RootType,
  Package,
};

inline constexpr std::size_t kDimensionCount = 10;

inline constexpr std::array<Dimension, kDimensionCount> kAllDimensions = {
    Dimension::Thread, Dimension::AgentType, Dimension::AgentInstance, Dimension::Parameter, Dimension::Method,
    Dimension::Service, Dimension::Field, Dimension::ObjectType, Dimension::RootType, Dimension::Package,
};

constexpr std::size_t index_of(Dimension d) { return static_cast<std::size_t>(d); }

/// Canonical tag, e.g. "object_type".
std::string_view tag_of(Dimension d);

/// Accepts canonical tags and spaced aliases ("object type", "root object type").
std::optional<Dimension> dimension_from_tag(std::string_view tag);

/// Context value used for dimensions that do not apply (e.g. field at a root).
inline constexpr std::string_view kNone = "#none";

/// Parameter name under which results are transmitted.
inline constexpr std::string_view kReturnParameter = "#return";

using ContextValues = std::array<std::string, kDimensionCount>;

/// All ten dimensions set to kNone.
ContextValues empty_context();

struct PatternElement {
  enum class Kind : std::uint8_t { AlwaysMatch, Default, Literal, Negation };

  Kind kind = Kind::Default;
  std::string text;  // Literal / Negation

  static PatternElement always() { return {Kind::AlwaysMatch, {}}; }
  static PatternElement default_() { return {Kind::Default, {}}; }
  static PatternElement literal(std::string text) { return {Kind::Literal, std::move(text)}; }
  static PatternElement negation(std::string text) { return {Kind::Negation, std::move(text)}; }

  bool operator==(const PatternElement&) const = default;
};

/// Specificity ranks used for lexicographic comparison.
constexpr int rank_of(PatternElement::Kind k) {
  switch (k) {
    case PatternElement::Kind::Literal: return 3;
    case PatternElement::Kind::Negation: return 2;
    case PatternElement::Kind::AlwaysMatch: return 1;
    case PatternElement::Kind::Default: return 0;
  }
  return 0;
}

std::string to_text(const PatternElement& e);

struct ContextPattern {
  std::array<PatternElement, kDimensionCount> elements;
  std::string source;

  const PatternElement& at(Dimension d) const { return elements[index_of(d)]; }
  bool all_default() const;
};

/// pattern := clause (',' clause)* ; clause := tag '=' element ;
/// element := '*' | '-' | '!' literal | literal. `all=X` must stand alone,
/// `others=X` fills unlisted dimensions, anything else left unmentioned is '-'.
/// Throws PatternSyntax, DuplicateTag, AllNotAlone or UnknownTag.
ContextPattern parse_pattern(std::string_view text);

/// Canonical form; parse_pattern(format_pattern(p)) has the same elements.
std::string format_pattern(const ContextPattern& p);

bool same_elements(const ContextPattern& a, const ContextPattern& b);

}  // namespace pfm
