#include "pfm/scenario.hpp"

#include "pfm/error.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace pfm {

namespace {

constexpr std::size_t kNoQuote = std::string::npos;

struct RawToken {
  std::string text;
  std::size_t quote_at = kNoQuote;  // index in text where the first quoted part starts
};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i < s.size() && (s[i] == '(' || s[i] == '[')) ++depth;
    if (i < s.size() && (s[i] == ')' || s[i] == ']')) --depth;
    if (i == s.size() || (s[i] == sep && depth == 0)) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

[[noreturn]] void syntax(const std::string& origin, int line, const std::string& msg) {
  fail(ErrorCode::ScenarioSyntax, origin + ":" + std::to_string(line) + ": " + msg);
}

std::vector<RawToken> tokenize(std::string_view line, const std::string& origin, int lineno) {
  std::vector<RawToken> out;
  RawToken cur;
  bool in_token = false;
  int depth = 0;
  auto flush = [&] {
    if (in_token) out.push_back(std::move(cur));
    cur = RawToken{};
    in_token = false;
  };
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '"') {
      if (cur.quote_at == kNoQuote) cur.quote_at = cur.text.size();
      in_token = true;
      bool closed = false;
      for (++i; i < line.size(); ++i) {
        if (line[i] == '\\' && i + 1 < line.size()) {
          cur.text += line[++i];
        } else if (line[i] == '"') {
          closed = true;
          break;
        } else {
          cur.text += line[i];
        }
      }
      if (!closed) syntax(origin, lineno, "unterminated string");
    } else if (std::isspace(static_cast<unsigned char>(c)) && depth == 0) {
      flush();
    } else if (c == '#' && !in_token && depth == 0) {
      break;
    } else {
      if (c == '(' || c == '[') ++depth;
      if (c == ')' || c == ']') --depth;
      cur.text += c;
      in_token = true;
    }
  }
  if (depth != 0) syntax(origin, lineno, "unbalanced brackets");
  flush();
  return out;
}

Token to_token(const RawToken& r) { return Token{r.text, r.quote_at != kNoQuote, false}; }

const std::set<std::string, std::less<>> kCommands = {
    "node", "type", "object", "set", "deploy", "body", "rule", "unrule", "partition", "transform",
    "call", "pcall", "manage", "read", "instantiate", "expect", "expect-policy", "expect-wire",
    "expect-error", "expect-known", "expect-unknown", "expect-rules", "expect-net", "expect-status",
};

// Splits tokens into positionals and key=value options. A token is an
// option when its '=' precedes any quoted part.
struct Args {
  std::vector<Token> pos;
  std::vector<std::pair<std::string, Token>> opts;

  std::optional<Token> opt(std::string_view key) const {
    for (const auto& [k, v] : opts)
      if (k == key) return v;
    return std::nullopt;
  }
  std::vector<Token> all(std::string_view key) const {
    std::vector<Token> out;
    for (const auto& [k, v] : opts)
      if (k == key) out.push_back(v);
    return out;
  }
  bool flag(std::string_view name) const {
    return std::any_of(pos.begin(), pos.end(), [&](const Token& t) { return !t.quoted && t.text == name; });
  }
};

bool is_key(std::string_view k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; });
}

}  // namespace

// --- parsing ------------------------------------------------------------------

Scenario parse_scenario(std::string_view text, std::string origin, std::filesystem::path base_dir) {
  Scenario s{origin, std::move(base_dir), {}};
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  Directive* open_body = nullptr;
  while (std::getline(in, line)) {
    ++lineno;
    auto raw = tokenize(line, origin, lineno);
    if (raw.empty()) continue;
    Directive d;
    d.line = lineno;
    d.source = trim(line);
    for (const auto& r : raw) {
      Token t = to_token(r);
      auto eq = r.text.find('=');
      if (eq != std::string::npos && eq < r.quote_at && is_key(std::string_view(r.text).substr(0, eq)))
        t.option = true;
      d.tokens.push_back(std::move(t));
    }
    const std::string head = d.tokens[0].text;
    if (open_body) {
      if (head == "}" && d.tokens.size() == 1) {
        open_body = nullptr;
        continue;
      }
      open_body->block.push_back(std::move(d));
      continue;
    }
    if (!kCommands.count(head)) syntax(origin, lineno, "unknown directive '" + head + "'");
    s.directives.push_back(std::move(d));
    if (head == "body") {
      auto& b = s.directives.back();
      if (b.tokens.size() != 3 || b.tokens[2].text != "{") syntax(origin, lineno, "expected: body Type.method {");
      open_body = &b;
    }
  }
  if (open_body) syntax(origin, open_body->line, "body block is not closed");
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ScenarioSyntax, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.filename().string(), path.parent_path());
}

// --- reports ------------------------------------------------------------------

bool Report::ok() const { return failures() == 0; }

std::size_t Report::failures() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const ReportEntry& e) { return !e.passed; }));
}

std::string Report::render(bool with_trace) const {
  std::string out;
  for (const auto& e : entries) {
    out += e.passed ? "PASS " : "FAIL ";
    out += "line " + std::to_string(e.line) + ": " + e.text;
    if (!e.detail.empty()) out += " (" + e.detail + ")";
    out += "\n";
    if (!e.passed)
      for (const auto& t : e.trace) out += "    " + t + "\n";
  }
  if (with_trace) {
    out += "trace:\n";
    for (const auto& t : trace) out += "  " + t + "\n";
  }
  out += std::to_string(entries.size() - failures()) + " passed, " + std::to_string(failures()) + " failed\n";
  return out;
}

// --- context specs and explanations -------------------------------------------

ContextValues parse_context_spec(std::string_view spec) {
  ContextValues ctx = empty_context();
  std::set<Dimension> seen;
  if (trim(spec).empty()) return ctx;
  for (const auto& clause : split(spec, ',')) {
    auto eq = clause.find('=');
    if (eq == std::string::npos) fail(ErrorCode::PatternSyntax, "expected tag=value in '" + clause + "'");
    auto tag = trim(std::string_view(clause).substr(0, eq));
    auto d = dimension_from_tag(tag);
    if (!d) fail(ErrorCode::UnknownTag, tag);
    if (!seen.insert(*d).second) fail(ErrorCode::DuplicateTag, tag);
    ctx[index_of(*d)] = trim(std::string_view(clause).substr(eq + 1));
  }
  return ctx;
}

std::string explain(const Engine& engine, PolicyKind kind, const ContextValues& ctx) {
  try {
    return render_trace(engine, engine.match(kind, ctx));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoApplicableRule) throw;
    MatchTrace t;
    t.kind = kind;
    t.context = ctx;
    return render_trace(engine, t);
  }
}

// --- runner -------------------------------------------------------------------

namespace {

std::size_t count_nodes(const WireValue& w, std::string_view kind) {
  std::size_t n = 0;
  auto fields = [&](const WireFields& f) {
    std::size_t k = 0;
    for (const auto& [name, v] : f) k += count_nodes(v, kind);
    return k;
  };
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        const char* name = std::is_same_v<T, wire::Null>        ? "null"
                           : std::is_same_v<T, wire::Prim>      ? "prim"
                           : std::is_same_v<T, wire::Object>    ? "obj"
                           : std::is_same_v<T, wire::BackRef>   ? "backref"
                           : std::is_same_v<T, wire::RemoteRef> ? "remote"
                           : std::is_same_v<T, wire::Array>     ? "array"
                           : std::is_same_v<T, wire::ArrayB64>  ? "array64"
                           : std::is_same_v<T, wire::ClassRef>  ? "class"
                                                                : "moved";
        if (kind == name) ++n;
        if constexpr (std::is_same_v<T, wire::Object>) n += fields(x.fields);
        if constexpr (std::is_same_v<T, wire::RemoteRef>) n += fields(x.cached_fields) + fields(x.cached_methods);
        if constexpr (std::is_same_v<T, wire::Array>)
          for (const auto& e : x.elements) n += count_nodes(e, kind);
      },
      w.v);
  return n;
}

TypeKind type_kind_from(const std::string& s) {
  if (s == "class") return TypeKind::Concrete;
  if (s == "interface") return TypeKind::Interface;
  fail(ErrorCode::ScenarioSyntax, "type kind must be class or interface, not " + s);
}

std::vector<MethodDecl> parse_methods(const std::string& text) {
  std::vector<MethodDecl> out;
  for (const auto& m : split(text, ';')) {
    if (m.empty()) continue;
    auto open = m.find('(');
    auto close = m.find(')', open == std::string::npos ? 0 : open);
    if (open == std::string::npos || close == std::string::npos)
      fail(ErrorCode::ScenarioSyntax, "bad method signature '" + m + "'");
    MethodDecl decl;
    decl.name = trim(std::string_view(m).substr(0, open));
    for (const auto& p : split(std::string_view(m).substr(open + 1, close - open - 1), ',')) {
      if (p.empty()) continue;
      auto colon = p.find(':');
      if (colon == std::string::npos) fail(ErrorCode::ScenarioSyntax, "parameter needs name:type in '" + m + "'");
      decl.params.push_back({trim(std::string_view(p).substr(0, colon)), trim(std::string_view(p).substr(colon + 1))});
    }
    auto rest = trim(std::string_view(m).substr(close + 1));
    if (!rest.empty()) {
      if (rest[0] != ':') fail(ErrorCode::ScenarioSyntax, "expected :ReturnType in '" + m + "'");
      decl.return_type = trim(std::string_view(rest).substr(1));
    }
    out.push_back(std::move(decl));
  }
  return out;
}

std::vector<FieldDecl> parse_fields(const std::string& text) {
  std::vector<FieldDecl> out;
  for (const auto& f : split(text, ',')) {
    if (f.empty()) continue;
    auto colon = f.find(':');
    if (colon == std::string::npos) fail(ErrorCode::ScenarioSyntax, "field needs name:type in '" + f + "'");
    out.push_back({trim(std::string_view(f).substr(0, colon)), trim(std::string_view(f).substr(colon + 1))});
  }
  return out;
}

std::int64_t parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    auto v = std::stoll(s, &used, 0);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::ScenarioSyntax, "expected an integer, got '" + s + "'");
  }
}

}  // namespace

struct ScenarioRunner::Impl {
  struct Var {
    NodeId node;
    Value value;
  };

  struct Abort {};

  ScenarioOptions options;
  Simulator sim;
  Report report;
  std::optional<NodeId> first;
  std::map<std::string, Var, std::less<>> vars;
  std::map<std::string, CallId, std::less<>> calls;
  std::map<std::string, std::pair<NodeId, RuleHandle>, std::less<>> handles;
  const Scenario* scenario = nullptr;
  std::size_t trace_mark = 0;

  explicit Impl(ScenarioOptions o) : options(o) { sim.set_tracing(true); }

  // -- helpers --

  [[noreturn]] void bad(const Directive& d, const std::string& msg) const { syntax(scenario->origin, d.line, msg); }

  Args args_of(const Directive& d, std::size_t from) const {
    Args a;
    for (std::size_t i = from; i < d.tokens.size(); ++i) {
      const auto& t = d.tokens[i];
      if (t.option) {
        auto eq = t.text.find('=');
        a.opts.emplace_back(t.text.substr(0, eq), Token{t.text.substr(eq + 1), t.quoted, false});
      } else {
        a.pos.push_back(t);
      }
    }
    return a;
  }

  std::vector<NodeId> nodes_of(const Directive& d, const std::string& spec) {
    std::vector<NodeId> out;
    if (spec == "*") return sim.node_ids();
    for (const auto& n : split(spec, ',')) out.push_back(sim.node(std::string_view(n)).id);
    if (out.empty()) bad(d, "no nodes named");
    return out;
  }

  Value lookup(NodeId node, const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) fail(ErrorCode::ScenarioSyntax, "unknown variable @" + name);
    if (it->second.value.is_object() && !(it->second.node == node))
      fail(ErrorCode::ScenarioSyntax, "@" + name + " lives on another node");
    return it->second.value;
  }

  Value literal(const Token& tok, std::string_view type, NodeId node) const {
    const std::string& s = tok.text;
    if (!tok.quoted && s == "null") return Value::null();
    if (!tok.quoted && !s.empty() && s[0] == '@') return lookup(node, s.substr(1));
    if (is_array_name(type)) {
      std::string element(array_element(type));
      if (s.rfind("fill(", 0) == 0 && s.back() == ')') {
        auto n = parse_int(s.substr(5, s.size() - 6));
        if (element == "byte") return Value::byte_array(static_cast<std::size_t>(n));
        ArrayValue a{element, {}};
        for (std::int64_t i = 0; i < n; ++i) a.elements.push_back(Value::of_integral(element, i % 251));
        return a;
      }
      if (s.size() < 2 || s.front() != '[' || s.back() != ']') fail(ErrorCode::ScenarioSyntax, "expected an array literal for " + std::string(type));
      ArrayValue a{element, {}};
      for (const auto& e : split(std::string_view(s).substr(1, s.size() - 2), ','))
        if (!e.empty()) {
          bool q = e.size() >= 2 && e.front() == '"' && e.back() == '"';
          a.elements.push_back(literal(Token{q ? e.substr(1, e.size() - 2) : e, q}, element, node));
        }
      return a;
    }
    if (type == "string") return Value::of_string(s);
    if (type == kClassType) {
      if (s.rfind("class(", 0) == 0 && s.back() == ')') return Value::of_class(s.substr(6, s.size() - 7));
      return Value::of_class(s);
    }
    if (type == "boolean") {
      if (s == "true") return Value::of_bool(true);
      if (s == "false") return Value::of_bool(false);
      fail(ErrorCode::ScenarioSyntax, "expected true or false, got '" + s + "'");
    }
    if (type == "float" || type == "double") {
      double d = 0;
      try {
        d = std::stod(s);
      } catch (const std::exception&) {
        fail(ErrorCode::ScenarioSyntax, "expected a number, got '" + s + "'");
      }
      Primitive p{std::string(type), {}};
      if (type == "float") {
        float f = static_cast<float>(d);
        p.payload.resize(4);
        std::memcpy(p.payload.data(), &f, 4);
      } else {
        p.payload.resize(8);
        std::memcpy(p.payload.data(), &d, 8);
      }
      return p;
    }
    if (primitive_width(type)) return Value::of_integral(type, parse_int(s));
    fail(ErrorCode::ScenarioSyntax, "cannot write '" + s + "' as " + std::string(type));
  }

  /// Literal typed after an existing value (for comparisons).
  Value literal_like(const Token& tok, const Value& like, NodeId node) const {
    if (like.is_null() || like.is_object()) {
      if (tok.text == "null" && !tok.quoted) return Value::null();
      return lookup(node, tok.text.substr(tok.text[0] == '@' ? 1 : 0));
    }
    return literal(tok, like.type_name(), node);
  }

  std::string describe(NodeId node, const Value& v) const {
    if (!v.is_object()) return to_literal(v);
    const auto& obj = sim.node(node).heap.get(v.object());
    if (obj.proxy) return "proxy to " + sim.node(obj.proxy->target_node).name + ":" + std::to_string(obj.proxy->target_id.value) + " as " + obj.proxy->view_type;
    return "local " + obj.type + "#" + std::to_string(v.object().id.value);
  }

  /// Empty string when `v` satisfies `check`.
  std::string check_value(NodeId node, const Value& v, const std::string& check, const std::optional<Token>& value) const {
    auto is_proxy = [&] { return v.is_object() && sim.node(node).heap.get(v.object()).proxy.has_value(); };
    if (check == "copy") {
      if (!v.is_object() || is_proxy()) return "expected a local copy, got " + describe(node, v);
    } else if (check == "proxy") {
      if (!is_proxy()) return "expected a proxy, got " + describe(node, v);
    } else if (check == "null") {
      if (!v.is_null()) return "expected null, got " + describe(node, v);
    } else if (check != "any") {
      fail(ErrorCode::ScenarioSyntax, "unknown expectation '" + check + "'");
    }
    if (value) {
      Value want = literal_like(*value, v, node);
      if (!(want == v)) return "expected " + to_literal(want) + ", got " + to_literal(v);
    }
    return {};
  }

  void record(const Directive& d, bool passed, std::string detail = {}) {
    ReportEntry e{d.line, d.source, passed, std::move(detail), {}};
    auto& t = sim.trace();
    if (!passed)
      for (std::size_t i = trace_mark; i < t.size(); ++i) e.trace.push_back(t[i]);
    report.entries.push_back(std::move(e));
  }

  // Runs `action`; with expect=error:CODE the error is the expectation.
  template <class Fn>
  void guarded(const Directive& d, const std::optional<Token>& expect, Fn action) {
    if (expect && expect->text.rfind("error:", 0) == 0) {
      ErrorCode want;
      if (!parse_error_code(expect->text.substr(6), want)) bad(d, "unknown error code " + expect->text.substr(6));
      expect_error(d, want, action);
      return;
    }
    action();
  }

  template <class Fn>
  void expect_error(const Directive& d, ErrorCode want, Fn action) {
    try {
      action();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ScenarioSyntax) throw;
      if (e.code() == want)
        record(d, true);
      else
        record(d, false, "expected " + std::string(to_string(want)) + ", got " + e.what());
      return;
    }
    record(d, false, "expected " + std::string(to_string(want)) + ", but it succeeded");
  }

  CallOptions call_options(const Args& a) const {
    CallOptions o;
    if (auto t = a.opt("agent_type")) o.agent_type = t->text;
    if (auto t = a.opt("agent_instance")) o.agent_instance = t->text;
    if (auto t = a.opt("thread")) o.thread = t->text;
    return o;
  }

  void store_result(const Args& a, NodeId node, const Value& v, std::optional<CallId> call) {
    if (auto as = a.opt("as")) {
      vars[as->text] = Var{node, v};
      if (call) calls[as->text] = *call;
    }
  }

  void check_result(const Directive& d, const Args& a, NodeId node, const Value& v) {
    auto expect = a.opt("expect");
    auto value = a.opt("value");
    if (!expect && !value) return;
    auto why = check_value(node, v, expect ? expect->text : "any", value);
    record(d, why.empty(), why);
  }

  std::vector<Value> call_args(const Args& a, NodeId client, const std::vector<ParamDecl>& params) const {
    auto raw = a.all("arg");
    std::vector<Value> out;
    for (std::size_t i = 0; i < raw.size(); ++i)
      out.push_back(literal(raw[i], i < params.size() ? std::string_view(params[i].type) : std::string_view("string"), client));
    return out;
  }

  static std::vector<ParamDecl> params_for(const TypeRegistry& types, const std::string& type, const std::string& method,
                                           std::size_t arity) {
    if (!types.contains(type)) return {};
    for (const auto& m : types.all_methods(type))
      if (m.name == method && m.params.size() == arity) return m.params;
    return {};
  }

  // -- directives --

  void exec(const Directive& d) {
    const std::string& cmd = d.tokens[0].text;
    trace_mark = sim.trace().size();
    if (cmd == "node") return do_node(d);
    if (cmd == "type") return do_type(d);
    if (cmd == "object") return do_object(d);
    if (cmd == "set") return do_set(d);
    if (cmd == "deploy") return do_deploy(d);
    if (cmd == "body") return do_body(d);
    if (cmd == "rule") return do_rule(d);
    if (cmd == "unrule") return do_unrule(d);
    if (cmd == "partition") return do_partition(d);
    if (cmd == "transform") return do_transform(d);
    if (cmd == "call") return do_call(d);
    if (cmd == "pcall") return do_pcall(d);
    if (cmd == "manage") return do_manage(d);
    if (cmd == "read") return do_read(d);
    if (cmd == "instantiate") return do_instantiate(d);
    if (cmd == "expect") return do_expect(d);
    if (cmd == "expect-policy") return do_expect_policy(d);
    if (cmd == "expect-wire") return do_expect_wire(d);
    if (cmd == "expect-error") return do_expect_error(d);
    if (cmd == "expect-known" || cmd == "expect-unknown") return do_expect_known(d);
    if (cmd == "expect-rules") return do_expect_rules(d);
    if (cmd == "expect-net") return do_expect_net(d);
    if (cmd == "expect-status") return do_expect_status(d);
    bad(d, "unknown directive " + cmd);
  }

  void need(const Directive& d, const Args& a, std::size_t n, const char* usage) const {
    if (a.pos.size() < n) bad(d, std::string("usage: ") + usage);
  }

  void do_node(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 1, "node NAME [agent_type=T] [agent_instance=I]");
    AgentInfo info;
    if (auto t = a.opt("agent_type")) info.agent_type = t->text;
    if (auto t = a.opt("agent_instance")) info.agent_instance = t->text;
    guarded(d, a.opt("expect"), [&] {
      auto id = sim.create_node(a.pos[0].text, info);
      if (!first) first = id;
    });
  }

  void do_type(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 3, "type NODES class|interface NAME [extends=A,B] [fields=\"f:T\"] [methods=\"m(p:T):R\"]");
    TypeDescriptor t;
    t.kind = type_kind_from(a.pos[1].text);
    t.name = a.pos[2].text;
    if (auto e = a.opt("extends"))
      for (auto& s : split(e->text, ','))
        if (!s.empty()) t.supertypes.push_back(s);
    if (auto f = a.opt("fields")) t.fields = parse_fields(f->text);
    if (auto m = a.opt("methods")) t.methods = parse_methods(m->text);
    guarded(d, a.opt("expect"), [&] {
      for (auto n : nodes_of(d, a.pos[0].text)) sim.node(n).types.register_type(t);
    });
  }

  void do_object(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 3, "object NODE VAR TYPE [field=value ...]");
    guarded(d, a.opt("expect"), [&] {
      Node& n = sim.node(std::string_view(a.pos[0].text));
      const auto& desc = n.types.get(a.pos[2].text);
      std::map<std::string, Value, std::less<>> fields;
      for (const auto& f : desc.fields) fields[f.name] = n.heap.default_value(f.type);
      for (const auto& [k, v] : a.opts) {
        if (k == "expect") continue;
        const auto* f = desc.find_field(k);
        if (!f) fail(ErrorCode::UnknownField, desc.name + "." + k);
        fields[k] = literal(v, f->type, n.id);
      }
      vars[a.pos[1].text] = Var{n.id, n.heap.allocate(desc.name, fields)};
    });
  }

  void do_set(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 2, "set NODE VAR field=value ...");
    guarded(d, a.opt("expect"), [&] {
      Node& n = sim.node(std::string_view(a.pos[0].text));
      Value target = lookup(n.id, a.pos[1].text);
      if (!target.is_object()) fail(ErrorCode::ScenarioSyntax, "@" + a.pos[1].text + " is not an object");
      const auto& desc = n.types.get(n.heap.get(target.object()).type);
      for (const auto& [k, v] : a.opts) {
        if (k == "expect") continue;
        const auto* f = desc.find_field(k);
        if (!f) fail(ErrorCode::UnknownField, desc.name + "." + k);
        n.heap.set_field(target.object(), k, literal(v, f->type, n.id));
      }
    });
  }

  void do_deploy(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 4, "deploy NODE SERVICE EXPOSED_TYPE @impl");
    guarded(d, a.opt("expect"), [&] {
      Node& n = sim.node(std::string_view(a.pos[0].text));
      Value impl = literal(a.pos[3], a.pos[2].text, n.id);
      if (!impl.is_object()) fail(ErrorCode::ScenarioSyntax, "deploy needs an object");
      sim.deploy(n.id, a.pos[1].text, a.pos[2].text, impl.object());
    });
  }

  struct RuleSpec {
    PolicyKind kind;
    std::string pattern;
    std::string policy;
    bool subtypes = false;
    TemporalScope scope = TemporalScope::Indefinite;
  };

  RuleSpec rule_spec(const Directive& d, const Args& a, std::size_t at) const {
    if (a.pos.size() < at + 3) bad(d, "expected KIND \"PATTERN\" POLICY");
    RuleSpec r;
    auto k = policy_kind_from(a.pos[at].text);
    if (!k) bad(d, "unknown policy kind " + a.pos[at].text);
    r.kind = *k;
    r.pattern = a.pos[at + 1].text;
    r.policy = a.pos[at + 2].text;
    r.subtypes = a.flag("subtypes");
    if (auto s = a.opt("scope")) {
      auto scope = temporal_scope_from(s->text);
      if (!scope) bad(d, "unknown scope " + s->text);
      r.scope = *scope;
    }
    return r;
  }

  void do_rule(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 1, "rule NODES KIND \"PATTERN\" POLICY [subtypes] [scope=S] [as=H]");
    RuleSpec r = rule_spec(d, a, 1);
    guarded(d, a.opt("expect"), [&] {
      for (auto n : nodes_of(d, a.pos[0].text)) {
        auto h = sim.node(n).engine.add_rule(r.kind, r.pattern, parse_policy(r.kind, r.policy, sim.deciders()),
                                             r.subtypes, r.scope);
        if (auto as = a.opt("as")) handles[as->text] = {n, h};
      }
    });
  }

  RuleHandle handle_of(const Directive& d, const std::string& name) const {
    auto it = handles.find(name);
    if (it != handles.end()) return it->second.second;
    if (!name.empty() && std::isdigit(static_cast<unsigned char>(name[0])))
      return RuleHandle{static_cast<std::uint64_t>(parse_int(name))};
    bad(d, "unknown rule handle " + name);
  }

  void do_unrule(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 2, "unrule NODE HANDLE");
    guarded(d, a.opt("expect"), [&] {
      sim.node(std::string_view(a.pos[0].text)).engine.remove_rule(handle_of(d, a.pos[1].text));
    });
  }

  void do_partition(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 3, "partition A B on|off");
    if (a.pos[2].text != "on" && a.pos[2].text != "off") bad(d, "partition state must be on or off");
    sim.set_partition(sim.node(std::string_view(a.pos[0].text)).id, sim.node(std::string_view(a.pos[1].text)).id,
                      a.pos[2].text == "on");
  }

  void do_transform(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 2, "transform NAME truncate field=F fraction=X");
    if (a.pos[1].text != "truncate") bad(d, "only the truncate transform is available");
    auto field = a.opt("field");
    auto fraction = a.opt("fraction");
    if (!field || !fraction) bad(d, "truncate needs field= and fraction=");
    double f = 0;
    try {
      f = std::stod(fraction->text);
    } catch (const std::exception&) {
      bad(d, "bad fraction " + fraction->text);
    }
    sim.transforms().add(a.pos[0].text, truncate_transform(field->text, f));
  }

  template <class Fn>
  void call_like(const Directive& d, const Args& a, NodeId client, Fn invoke) {
    guarded(d, a.opt("expect"), [&] {
      std::size_t before = sim.calls().size();
      Value v = invoke();
      std::optional<CallId> id;
      if (sim.calls().size() > before) id = sim.calls()[before].id;
      store_result(a, client, v, id);
      check_result(d, a, client, v);
    });
  }

  void do_call(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 4, "call CLIENT SERVER SERVICE METHOD [arg=V]... [as=X] [expect=E] [value=L]");
    NodeId client = sim.node(std::string_view(a.pos[0].text)).id;
    Node& server = sim.node(std::string_view(a.pos[1].text));
    std::vector<ParamDecl> params;
    if (auto it = server.services.find(a.pos[2].text); it != server.services.end())
      params = params_for(server.types, it->second.exposed_type, a.pos[3].text, a.all("arg").size());
    call_like(d, a, client, [&] {
      return sim.invoke(client, server.id, a.pos[2].text, a.pos[3].text, call_args(a, client, params), call_options(a));
    });
  }

  void do_pcall(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 3, "pcall CLIENT VAR METHOD [arg=V]... [as=X] [expect=E] [value=L]");
    NodeId client = sim.node(std::string_view(a.pos[0].text)).id;
    Value target = lookup(client, a.pos[1].text);
    if (!target.is_object()) bad(d, "@" + a.pos[1].text + " is not an object");
    const auto& obj = sim.node(client).heap.get(target.object());
    std::vector<ParamDecl> params = params_for(sim.node(client).types, obj.type, a.pos[2].text, a.all("arg").size());
    if (params.empty() && obj.proxy)
      params = params_for(sim.node(obj.proxy->target_node).types, obj.proxy->view_type, a.pos[2].text, a.all("arg").size());
    call_like(d, a, client, [&] {
      return sim.proxy_invoke(client, target.object(), a.pos[2].text, call_args(a, client, params), call_options(a));
    });
  }

  void do_manage(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 3, "manage CLIENT SERVER set_rule|remove_rule|list_rules ...");
    NodeId client = sim.node(std::string_view(a.pos[0].text)).id;
    NodeId server = sim.node(std::string_view(a.pos[1].text)).id;
    const std::string& op = a.pos[2].text;
    std::vector<Value> args;
    if (op == "set_rule") {
      RuleSpec r = rule_spec(d, a, 3);
      args = {Value::of_string(to_string(r.kind)), Value::of_string(r.pattern), Value::of_string(r.policy),
              Value::of_bool(r.subtypes), Value::of_string(to_string(r.scope))};
    } else if (op == "remove_rule") {
      need(d, a, 4, "manage CLIENT SERVER remove_rule HANDLE");
      args = {Value::of_long(static_cast<std::int64_t>(handle_of(d, a.pos[3].text).value))};
    } else if (op == "list_rules") {
      need(d, a, 4, "manage CLIENT SERVER list_rules KIND");
      args = {Value::of_string(a.pos[3].text)};
    } else {
      bad(d, "unknown manager operation " + op);
    }
    guarded(d, a.opt("expect"), [&] {
      Value v = sim.invoke(client, server, kManagerService, op, args, call_options(a));
      if (op == "set_rule") {
        if (auto as = a.opt("as")) handles[as->text] = {server, RuleHandle{static_cast<std::uint64_t>(as_integer(v.primitive()))}};
      } else {
        store_result(a, client, v, std::nullopt);
      }
      if (auto value = a.opt("value")) {
        auto why = check_value(client, v, "any", value);
        record(d, why.empty(), why);
      } else if (a.opt("expect")) {
        record(d, true);
      }
    });
  }

  void do_read(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 3, "read NODE VAR MEMBER [as=X] [expect=E] [value=L] [net=N]");
    NodeId node = sim.node(std::string_view(a.pos[0].text)).id;
    guarded(d, a.opt("expect"), [&] {
      Value target = lookup(node, a.pos[1].text);
      if (!target.is_object()) fail(ErrorCode::ScenarioSyntax, "@" + a.pos[1].text + " is not an object");
      auto before = sim.network_events();
      Value v = sim.proxy_read(node, target.object(), a.pos[2].text, call_options(a));
      store_result(a, node, v, std::nullopt);
      if (auto net = a.opt("net")) {
        auto delta = sim.network_events() - before;
        if (delta != static_cast<std::uint64_t>(parse_int(net->text))) {
          record(d, false, "expected " + net->text + " network events, saw " + std::to_string(delta));
          return;
        }
        if (!a.opt("expect") && !a.opt("value")) record(d, true);
      }
      check_result(d, a, node, v);
    });
  }

  void do_instantiate(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 2, "instantiate NODE TYPE [as=X] [expect_node=N]");
    NodeId node = sim.node(std::string_view(a.pos[0].text)).id;
    guarded(d, a.opt("expect"), [&] {
      Value v = sim.instantiate(node, a.pos[1].text, call_options(a));
      store_result(a, node, v, std::nullopt);
      if (auto where = a.opt("expect_node")) {
        const auto& obj = sim.node(node).heap.get(v.object());
        NodeId actual = obj.proxy ? obj.proxy->target_node : node;
        const auto& name = sim.node(actual).name;
        record(d, name == where->text, name == where->text ? "" : "created on " + name);
      }
      check_result(d, a, node, v);
    });
  }

  Value resolve_path(NodeId node, const std::string& path, std::string& declared) const {
    auto parts = split(path, '.');
    Value v = lookup(node, parts[0]);
    declared = v.type_name();
    const Heap& heap = sim.node(node).heap;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (!v.is_object()) fail(ErrorCode::ScenarioSyntax, path + ": '" + parts[i - 1] + "' is not an object");
      const auto& obj = heap.get(v.object());
      if (obj.proxy) fail(ErrorCode::ScenarioSyntax, path + ": '" + parts[i - 1] + "' is a proxy; use read");
      v = heap.field(v.object(), parts[i]);
      if (const auto* f = heap.types().get(obj.type).find_field(parts[i])) declared = f->type;
    }
    return v;
  }

  void do_expect(const Directive& d) {
    Args a = args_of(d, 1);
    if (a.pos.size() < 2 && a.opts.empty()) bad(d, "usage: expect NODE VAR[.field...] CHECK");
    NodeId node = sim.node(std::string_view(a.pos[0].text)).id;
    std::string declared;
    std::string why;
    try {
      Value v = resolve_path(node, a.pos.size() > 1 ? a.pos[1].text : "", declared);
      const Heap& heap = sim.node(node).heap;
      if (a.pos.size() > 2) why = check_value(node, v, a.pos[2].text, std::nullopt);
      if (why.empty() && a.opt("value")) {
        Token t = *a.opt("value");
        Value want = (v.is_null() || v.is_object()) ? literal_like(t, v, node) : literal(t, declared.empty() ? v.type_name() : declared, node);
        if (!(want == v)) why = "expected " + to_literal(want) + ", got " + to_literal(v);
      }
      if (why.empty() && a.opt("len")) {
        auto want = static_cast<std::size_t>(parse_int(a.opt("len")->text));
        std::size_t got = v.is_array() ? v.array().elements.size() : v.is_primitive() ? v.primitive().payload.size() : 0;
        if (got != want) why = "expected length " + std::to_string(want) + ", got " + std::to_string(got);
      }
      if (why.empty() && a.opt("type")) {
        std::string got = v.is_object() ? heap.get(v.object()).type : v.type_name();
        if (got != a.opt("type")->text) why = "expected type " + a.opt("type")->text + ", got " + got;
      }
      if (why.empty() && a.opt("node")) {
        NodeId at = node;
        if (v.is_object())
          if (const auto& obj = heap.get(v.object()); obj.proxy) at = obj.proxy->target_node;
        if (sim.node(at).name != a.opt("node")->text) why = "lives on " + sim.node(at).name;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ScenarioSyntax) throw;
      why = e.what();
    }
    record(d, why.empty(), why);
  }

  void do_expect_policy(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 2, "expect-policy NODE KIND context=\"...\" policy=KW");
    auto kind = policy_kind_from(a.pos[1].text);
    if (!kind) bad(d, "unknown policy kind " + a.pos[1].text);
    auto ctx_tok = a.opt("context");
    auto policy_tok = a.opt("policy");
    if (!ctx_tok || !policy_tok) bad(d, "expect-policy needs context= and policy=");
    const Engine& engine = sim.node(std::string_view(a.pos[0].text)).engine;
    auto ctx = parse_context_spec(ctx_tok->text);
    std::string got;
    try {
      auto trace = engine.match(*kind, ctx);
      got = format_policy(engine.find(*trace.winner)->policy);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoApplicableRule) throw;
      got = "none";
    }
    std::string want = policy_tok->text == "none" ? "none" : format_policy(parse_policy(*kind, policy_tok->text, sim.deciders()));
    record(d, got == want, got == want ? "" : "resolved to " + got + "\n" + explain(engine, *kind, ctx));
  }

  std::string wire_text(const Directive& d, const std::string& call_var, const std::string& which) const {
    auto it = calls.find(call_var);
    if (it == calls.end()) bad(d, "no call recorded as " + call_var);
    const auto& rec = sim.call(it->second);
    if (which == "result") return rec.result;
    if (which.rfind("arg", 0) == 0) {
      auto i = static_cast<std::size_t>(parse_int(which.substr(3)));
      if (i >= rec.args.size()) bad(d, "call has no argument " + which);
      return rec.args[i];
    }
    bad(d, "expected result or argN, got " + which);
  }

  void do_expect_wire(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 4, "expect-wire CALL result|argN golden FILE | count KIND N | contains TEXT");
    std::string text = wire_text(d, a.pos[0].text, a.pos[1].text);
    const std::string& mode = a.pos[2].text;
    if (mode == "golden") {
      auto path = scenario->base_dir / "golden" / a.pos[3].text;
      if (options.regen_golden) {
        std::filesystem::create_directories(path.parent_path());
        std::ofstream(path) << text << "\n";
        record(d, true, "regenerated");
        return;
      }
      std::ifstream in(path);
      if (!in) {
        record(d, false, "missing golden file " + path.string());
        return;
      }
      std::stringstream buf;
      buf << in.rdbuf();
      std::string want = trim(buf.str());
      record(d, want == text, want == text ? "" : "wire differs from golden:\n    got:  " + text + "\n    want: " + want);
    } else if (mode == "count") {
      need(d, a, 5, "expect-wire CALL WHICH count KIND N");
      auto n = count_nodes(parse_wire(text), a.pos[3].text);
      auto want = static_cast<std::size_t>(parse_int(a.pos[4].text));
      record(d, n == want, n == want ? "" : "counted " + std::to_string(n) + " " + a.pos[3].text + " nodes in " + text);
    } else if (mode == "contains") {
      bool ok = text.find(a.pos[3].text) != std::string::npos;
      record(d, ok, ok ? "" : "not found in " + text);
    } else {
      bad(d, "unknown expect-wire mode " + mode);
    }
  }

  void do_expect_error(const Directive& d) {
    if (d.tokens.size() < 3) bad(d, "usage: expect-error CODE DIRECTIVE...");
    ErrorCode want;
    if (!parse_error_code(d.tokens[1].text, want)) bad(d, "unknown error code " + d.tokens[1].text);
    Directive inner = d;
    inner.tokens.erase(inner.tokens.begin(), inner.tokens.begin() + 2);
    if (!kCommands.count(inner.tokens[0].text)) bad(d, "unknown directive " + inner.tokens[0].text);
    std::size_t entries = report.entries.size();
    expect_error(d, want, [&] {
      exec(inner);
      // expectations produced by the inner directive are not separate entries
      report.entries.resize(entries);
    });
  }

  void do_expect_known(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 2, "expect-known NODE TYPE");
    bool known = sim.node(std::string_view(a.pos[0].text)).types.contains(a.pos[1].text);
    bool want = d.tokens[0].text == "expect-known";
    record(d, known == want, known == want ? "" : a.pos[1].text + (known ? " is known" : " is unknown"));
  }

  void do_expect_rules(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 3, "expect-rules NODE KIND N");
    auto kind = policy_kind_from(a.pos[1].text);
    if (!kind) bad(d, "unknown policy kind " + a.pos[1].text);
    auto n = sim.node(std::string_view(a.pos[0].text)).engine.list_rules(*kind).size();
    auto want = static_cast<std::size_t>(parse_int(a.pos[2].text));
    record(d, n == want, n == want ? "" : std::to_string(n) + " rules installed");
  }

  void do_expect_net(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 1, "expect-net N");
    auto want = static_cast<std::uint64_t>(parse_int(a.pos[0].text));
    record(d, sim.network_events() == want, "saw " + std::to_string(sim.network_events()));
  }

  void do_expect_status(const Directive& d) {
    Args a = args_of(d, 1);
    need(d, a, 2, "expect-status CALL completed|denied|failed");
    auto it = calls.find(a.pos[0].text);
    if (it == calls.end()) bad(d, "no call recorded as " + a.pos[0].text);
    auto got = std::string(to_string(sim.call(it->second).status));
    record(d, got == a.pos[1].text, got == a.pos[1].text ? "" : "status is " + got);
  }

  // -- method bodies --

  void do_body(const Directive& d) {
    const std::string& target = d.tokens[1].text;
    auto dot = target.rfind('.');
    if (dot == std::string::npos) bad(d, "expected Type.method");
    std::string type = target.substr(0, dot);
    std::string method = target.substr(dot + 1);
    for (const auto& s : d.block) check_statement(s);
    std::vector<Directive> block = d.block;
    sim.set_body(type, method, [this, block, method](MethodEnv& env) { return run_body(block, method, env); });
  }

  void check_statement(const Directive& s) const {
    std::size_t i = 0;
    if (s.tokens[0].text == "when") i = 2;
    if (i >= s.tokens.size()) bad(s, "empty statement");
    static const std::set<std::string, std::less<>> kStatements = {"return", "set", "mutate", "rule", "manage"};
    if (!kStatements.count(s.tokens[i].text)) bad(s, "unknown statement '" + s.tokens[i].text + "'");
  }

  Value body_value(const Directive& s, const Args& a, std::size_t at, MethodEnv& env, std::string_view type) const {
    if (a.pos.size() <= at) bad(s, "missing value");
    const std::string& w = a.pos[at].text;
    if (!a.pos[at].quoted) {
      if (w == "field") {
        if (a.pos.size() <= at + 1) bad(s, "field needs a name");
        return env.field(a.pos[at + 1].text);
      }
      if (w == "arg") {
        if (a.pos.size() <= at + 1) bad(s, "arg needs an index");
        auto i = static_cast<std::size_t>(parse_int(a.pos[at + 1].text));
        if (i >= env.args.size()) fail(ErrorCode::ScenarioSyntax, "argument " + a.pos[at + 1].text + " out of range");
        return env.args[i];
      }
      if (w == "self") return env.self;
    }
    return literal(a.pos[at], type, env.node);
  }

  Value run_body(const std::vector<Directive>& block, const std::string& method, MethodEnv& env) {
    Node& n = sim.node(env.node);
    const auto& self_type = n.heap.get(env.self).type;
    std::string return_type = "void";
    for (const auto& m : n.types.all_methods(self_type))
      if (m.name == method && m.params.size() == env.args.size()) return_type = m.return_type;

    for (const auto& stmt : block) {
      Directive s = stmt;
      if (s.tokens[0].text == "when") {
        if (!as_integer(env.field(s.tokens[1].text).primitive())) continue;
        s.tokens.erase(s.tokens.begin(), s.tokens.begin() + 2);
      }
      Args a = args_of(s, 1);
      const std::string& op = s.tokens[0].text;
      if (op == "return") {
        return body_value(s, a, 0, env, return_type);
      } else if (op == "set") {
        if (a.pos.empty()) bad(s, "usage: set FIELD VALUE");
        const auto* f = n.types.get(self_type).find_field(a.pos[0].text);
        if (!f) fail(ErrorCode::UnknownField, self_type + "." + a.pos[0].text);
        env.set_field(a.pos[0].text, body_value(s, a, 1, env, f->type));
      } else if (op == "mutate") {
        // mutate arg I FIELD VALUE: writes through to whatever the argument is
        if (a.pos.size() < 4 || a.pos[0].text != "arg") bad(s, "usage: mutate arg I FIELD VALUE");
        Value target = body_value(s, a, 0, env, "");
        if (!target.is_object()) fail(ErrorCode::ScenarioSyntax, "argument is not an object");
        const auto& obj = n.heap.get(target.object());
        const std::string& type = obj.proxy ? obj.proxy->view_type : obj.type;
        const auto& holder = obj.proxy ? sim.node(obj.proxy->target_node).types : n.types;
        const auto* f = holder.get(type).find_field(a.pos[2].text);
        if (!f) fail(ErrorCode::UnknownField, type + "." + a.pos[2].text);
        Value v = body_value(s, a, 3, env, f->type);
        if (obj.proxy) {
          std::string setter = "set" + a.pos[2].text;
          setter[3] = static_cast<char>(std::toupper(static_cast<unsigned char>(setter[3])));
          sim.proxy_invoke(env.node, target.object(), setter, {v}, env.caller);
        } else {
          n.heap.set_field(target.object(), a.pos[2].text, v);
        }
      } else if (op == "rule") {
        RuleSpec r = rule_spec(s, a, 0);
        n.engine.add_rule(r.kind, r.pattern, parse_policy(r.kind, r.policy, sim.deciders()), r.subtypes, r.scope);
      } else if (op == "manage") {
        if (a.pos.size() < 2 || a.pos[1].text != "set_rule") bad(s, "usage: manage SERVER set_rule KIND \"PATTERN\" POLICY");
        RuleSpec r = rule_spec(s, a, 2);
        CallOptions o = env.caller;
        o.agent_type.clear();
        o.agent_instance.clear();
        sim.invoke(env.node, sim.node(std::string_view(a.pos[0].text)).id, kManagerService, "set_rule",
                   {Value::of_string(to_string(r.kind)), Value::of_string(r.pattern), Value::of_string(r.policy),
                    Value::of_bool(r.subtypes), Value::of_string(to_string(r.scope))},
                   o);
      }
    }
    return Value::null();
  }
};

ScenarioRunner::ScenarioRunner(ScenarioOptions options) : impl_(std::make_unique<Impl>(options)) {}
ScenarioRunner::~ScenarioRunner() = default;

Simulator& ScenarioRunner::sim() { return impl_->sim; }
const Report& ScenarioRunner::report() const { return impl_->report; }
std::optional<NodeId> ScenarioRunner::first_node() const { return impl_->first; }

const Report& ScenarioRunner::run(const Scenario& scenario) {
  impl_->scenario = &scenario;
  for (const auto& d : scenario.directives) {
    try {
      impl_->exec(d);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ScenarioSyntax) throw;
      impl_->record(d, false, std::string("unexpected ") + e.what() + "; scenario aborted");
      break;
    }
  }
  impl_->report.trace = impl_->sim.trace();
  return impl_->report;
}

}  // namespace pfm
