#include "pfm/error.hpp"
#include "pfm/policy.hpp"

#include <cctype>

namespace pfm {

namespace {

std::string strip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

struct Call {
  std::string name;
  std::optional<std::string> arg;
};

Call split_call(std::string_view keyword) {
  auto text = strip(keyword);
  auto open = text.find('(');
  if (open == std::string::npos) return {text, std::nullopt};
  if (text.back() != ')') fail(ErrorCode::PolicySyntax, "unbalanced parentheses in '" + text + "'");
  return {strip(text.substr(0, open)), text.substr(open + 1, text.size() - open - 2)};
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (strip(s).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    auto item = strip(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (item.empty()) fail(ErrorCode::PolicySyntax, "empty list item in '" + std::string(s) + "'");
    out.push_back(std::move(item));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// First separator outside parentheses.
std::size_t top_level_comma(std::string_view s) {
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(') ++depth;
    else if (s[i] == ')') --depth;
    else if (s[i] == ',' && depth == 0) return i;
  }
  return std::string_view::npos;
}

void no_arg(const Call& c) {
  if (c.arg) fail(ErrorCode::PolicySyntax, c.name + " takes no argument");
}

const std::string& need_arg(const Call& c) {
  if (!c.arg || strip(*c.arg).empty()) fail(ErrorCode::PolicySyntax, c.name + " needs an argument");
  return *c.arg;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

}  // namespace

AnyPolicy parse_policy(PolicyKind kind, std::string_view keyword, const DeciderRegistry& deciders) {
  Call c = split_call(keyword);
  const auto& n = c.name;

  if (n == "by_ref") return no_arg(c), TransmissionPolicy::by_ref();
  if (n == "by_val") return no_arg(c), TransmissionPolicy::by_val();
  if (n == "by_move") return no_arg(c), TransmissionPolicy::by_move();
  if (n == "by_visit") return no_arg(c), TransmissionPolicy::by_visit();
  if (n == "by_value_to_depth") {
    auto arg = strip(need_arg(c));
    if (arg == "full" || arg == "FULL_CLOSURE") return TransmissionPolicy::full_closure();
    try {
      std::size_t used = 0;
      int depth = std::stoi(arg, &used);
      if (used == arg.size()) return TransmissionPolicy::to_depth(depth);
    } catch (const std::logic_error&) {
    }
    fail(ErrorCode::PolicySyntax, "by_value_to_depth needs an integer or 'full', got '" + arg + "'");
  }
  if (n == "by_ref_caching") {
    std::string arg = c.arg.value_or("");
    auto semi = arg.find(';');
    auto fields = split_list(std::string_view(arg).substr(0, semi), ',');
    std::vector<std::string> methods;
    if (semi != std::string::npos) methods = split_list(std::string_view(arg).substr(semi + 1), ',');
    return TransmissionPolicy::caching(std::move(fields), std::move(methods));
  }

  if (n == "element_wise") return no_arg(c), EncodingPolicy::element_wise();
  if (n == "base64") return no_arg(c), EncodingPolicy::base64();
  if (n == "class_by_name") {
    if (!c.arg) return EncodingPolicy::class_by_name(false);
    if (strip(*c.arg) == "include_bytes") return EncodingPolicy::class_by_name(true);
    fail(ErrorCode::PolicySyntax, "class_by_name accepts only 'include_bytes'");
  }
  if (n == "transform") {
    const auto& arg = need_arg(c);
    auto comma = top_level_comma(arg);
    if (comma == std::string::npos) fail(ErrorCode::PolicySyntax, "transform(id, inner) needs two arguments");
    auto id = strip(std::string_view(arg).substr(0, comma));
    auto inner = parse_policy(PolicyKind::Encoding, std::string_view(arg).substr(comma + 1), deciders);
    if (id.empty() || kind_of(inner) != PolicyKind::Encoding)
      fail(ErrorCode::PolicySyntax, "transform needs an id and an encoding policy");
    return EncodingPolicy::transform(std::move(id), std::get<EncodingPolicy>(std::move(inner)));
  }

  if (n == "create_local") return no_arg(c), PlacementPolicy::create_local();
  if (n == "create_at") return PlacementPolicy::create_at(strip(need_arg(c)));

  if (n == "allow") return no_arg(c), AccessPolicy::allow();
  if (n == "deny") return AccessPolicy::deny(c.arg ? strip(*c.arg) : std::string());

  if (n == "dynamic") {
    auto arg = strip(need_arg(c));
    auto colon = arg.find(':');
    std::string name = arg.substr(0, colon);
    std::string param = colon == std::string::npos ? std::string() : arg.substr(colon + 1);
    return deciders.make(kind, name, param);
  }

  fail(ErrorCode::PolicySyntax, "unknown policy keyword '" + std::string(keyword) + "'");
}

std::string format_policy(const TransmissionPolicy& p) {
  struct V {
    std::string operator()(const ByRef&) const { return "by_ref"; }
    std::string operator()(const ByVal&) const { return "by_val"; }
    std::string operator()(const ByMove&) const { return "by_move"; }
    std::string operator()(const ByVisit&) const { return "by_visit"; }
    std::string operator()(const ByValueToDepth& d) const {
      return "by_value_to_depth(" + (d.full_closure() ? std::string("full") : std::to_string(d.depth)) + ")";
    }
    std::string operator()(const ByReferenceWithCaching& c) const {
      return "by_ref_caching(" + join(c.fields) + ";" + join(c.methods) + ")";
    }
    std::string operator()(const Dynamic<TransmissionPolicy, TransmissionContext>& d) const {
      return "dynamic(" + d.decider->name() + ")";
    }
  };
  return std::visit(V{}, p.v);
}

std::string format_policy(const EncodingPolicy& p) {
  struct V {
    std::string operator()(const ElementWise&) const { return "element_wise"; }
    std::string operator()(const Base64Packed&) const { return "base64"; }
    std::string operator()(const ClassByName& c) const {
      return c.include_bytes_if_missing ? "class_by_name(include_bytes)" : "class_by_name";
    }
    std::string operator()(const TransformThenEncode& t) const {
      return "transform(" + t.transform_id + "," + format_policy(*t.inner) + ")";
    }
    std::string operator()(const Dynamic<EncodingPolicy, TransmissionContext>& d) const {
      return "dynamic(" + d.decider->name() + ")";
    }
  };
  return std::visit(V{}, p.v);
}

std::string format_policy(const PlacementPolicy& p) {
  struct V {
    std::string operator()(const CreateLocal&) const { return "create_local"; }
    std::string operator()(const CreateAt& c) const { return "create_at(" + c.node + ")"; }
    std::string operator()(const Dynamic<PlacementPolicy, InstantiationContext>& d) const {
      return "dynamic(" + d.decider->name() + ")";
    }
  };
  return std::visit(V{}, p.v);
}

std::string format_policy(const AccessPolicy& p) {
  struct V {
    std::string operator()(const Allow&) const { return "allow"; }
    std::string operator()(const Deny& d) const { return d.reason.empty() ? "deny" : "deny(" + d.reason + ")"; }
    std::string operator()(const Dynamic<AccessPolicy, AccessContext>& d) const {
      return "dynamic(" + d.decider->name() + ")";
    }
  };
  return std::visit(V{}, p.v);
}

std::string format_policy(const AnyPolicy& p) {
  return std::visit([](const auto& x) { return format_policy(x); }, p);
}

}  // namespace pfm
