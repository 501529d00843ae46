#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pfm {

/// Minimal parenthesized tree: symbols, quoted strings and lists.
struct SExpr {
  enum class Kind { Symbol, String, List };

  Kind kind = Kind::List;
  std::string text;
  std::vector<SExpr> items;

  static SExpr symbol(std::string text);
  static SExpr string(std::string text);
  static SExpr list(std::vector<SExpr> items = {});

  bool is_symbol() const { return kind == Kind::Symbol; }
  bool is_string() const { return kind == Kind::String; }
  bool is_list() const { return kind == Kind::List; }

  bool operator==(const SExpr&) const = default;
};

/// Single-line rendering, one space between items, strings quoted with
/// backslash escapes for '"' and '\\'.
std::string to_text(const SExpr& expr);

/// Inverse of to_text. Throws MalformedWire on bad input.
SExpr parse_sexpr(std::string_view text);

}  // namespace pfm
