#include "pfm/pattern.hpp"

#include "pfm/error.hpp"

#include <algorithm>
#include <cctype>
#include <vector>

namespace pfm {

namespace {

constexpr std::array<std::string_view, kDimensionCount> kTags = {
    "thread", "agent_type", "agent_instance", "parameter", "method",
    "service", "field", "object_type", "root_type", "package",
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// "object  type" -> "object_type"
std::string normalize_tag(std::string_view tag) {
  std::string out;
  bool gap = false;
  for (char c : tag) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      gap = true;
      continue;
    }
    if (gap && !out.empty()) out += '_';
    gap = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool valid_literal(std::string_view s) {
  if (s.empty() || s != trim(s)) return false;
  return s.find_first_of(",=!*") == std::string_view::npos;
}

PatternElement parse_element(std::string_view raw, std::string_view clause) {
  auto text = trim(raw);
  if (text == "*") return PatternElement::always();
  if (text == "-") return PatternElement::default_();
  if (!text.empty() && text.front() == '!') {
    auto lit = trim(text.substr(1));
    if (lit == "-" || !valid_literal(lit))
      fail(ErrorCode::PatternSyntax, "bad negation in clause '" + std::string(clause) + "'");
    return PatternElement::negation(std::string(lit));
  }
  if (!valid_literal(text)) fail(ErrorCode::PatternSyntax, "bad element in clause '" + std::string(clause) + "'");
  return PatternElement::literal(std::string(text));
}

}  // namespace

std::string_view tag_of(Dimension d) { return kTags[index_of(d)]; }

std::optional<Dimension> dimension_from_tag(std::string_view tag) {
  std::string norm = normalize_tag(tag);
  if (norm == "root_object_type") norm = "root_type";
  for (std::size_t i = 0; i < kTags.size(); ++i)
    if (kTags[i] == norm) return kAllDimensions[i];
  return std::nullopt;
}

ContextValues empty_context() {
  ContextValues v;
  v.fill(std::string(kNone));
  return v;
}

std::string to_text(const PatternElement& e) {
  switch (e.kind) {
    case PatternElement::Kind::AlwaysMatch: return "*";
    case PatternElement::Kind::Default: return "-";
    case PatternElement::Kind::Literal: return e.text;
    case PatternElement::Kind::Negation: return "!" + e.text;
  }
  return {};
}

bool ContextPattern::all_default() const {
  return std::all_of(elements.begin(), elements.end(),
                     [](const PatternElement& e) { return e.kind == PatternElement::Kind::Default; });
}

ContextPattern parse_pattern(std::string_view text) {
  ContextPattern p;
  p.source = std::string(text);
  std::array<bool, kDimensionCount> explicit_tag{};
  std::optional<PatternElement> others;
  std::optional<PatternElement> all;
  std::size_t clauses = 0;

  std::size_t start = 0;
  for (;;) {
    auto comma = text.find(',', start);
    auto clause = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    ++clauses;
    if (clause.empty()) fail(ErrorCode::PatternSyntax, "empty clause in '" + std::string(text) + "'");
    auto eq = clause.find('=');
    if (eq == std::string_view::npos || clause.find('=', eq + 1) != std::string_view::npos)
      fail(ErrorCode::PatternSyntax, "clause must be tag=element: '" + std::string(clause) + "'");
    auto tag = trim(clause.substr(0, eq));
    auto element = parse_element(clause.substr(eq + 1), clause);
    std::string norm = normalize_tag(tag);

    if (norm == "all") {
      if (all) fail(ErrorCode::DuplicateTag, "all");
      all = element;
    } else if (norm == "others") {
      if (others) fail(ErrorCode::DuplicateTag, "others");
      others = element;
    } else if (auto dim = dimension_from_tag(tag)) {
      auto i = index_of(*dim);
      if (explicit_tag[i]) fail(ErrorCode::DuplicateTag, std::string(tag_of(*dim)));
      explicit_tag[i] = true;
      p.elements[i] = element;
    } else {
      fail(ErrorCode::UnknownTag, "'" + std::string(tag) + "'");
    }

    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }

  if (all) {
    if (clauses != 1) fail(ErrorCode::AllNotAlone, "'" + std::string(text) + "'");
    p.elements.fill(*all);
    return p;
  }
  for (std::size_t i = 0; i < kDimensionCount; ++i)
    if (!explicit_tag[i]) p.elements[i] = others.value_or(PatternElement::default_());
  return p;
}

std::string format_pattern(const ContextPattern& p) {
  const auto& els = p.elements;
  if (std::all_of(els.begin(), els.end(), [&](const PatternElement& e) { return e == els[0]; }))
    return "all=" + to_text(els[0]);

  // The most frequent element becomes the `others` filler; ties prefer '-',
  // then '*', then the earliest dimension.
  auto count = [&](const PatternElement& e) { return std::count(els.begin(), els.end(), e); };
  auto preference = [](const PatternElement& e) {
    if (e.kind == PatternElement::Kind::Default) return 2;
    if (e.kind == PatternElement::Kind::AlwaysMatch) return 1;
    return 0;
  };
  const PatternElement* filler = &els[0];
  for (const auto& e : els) {
    auto ce = count(e), cf = count(*filler);
    if (ce > cf || (ce == cf && preference(e) > preference(*filler))) filler = &e;
  }

  std::string out;
  for (auto d : kAllDimensions) {
    const auto& e = els[index_of(d)];
    if (e == *filler) continue;
    out += std::string(tag_of(d)) + "=" + to_text(e) + ", ";
  }
  return out + "others=" + to_text(*filler);
}

bool same_elements(const ContextPattern& a, const ContextPattern& b) { return a.elements == b.elements; }

}  // namespace pfm
