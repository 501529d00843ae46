#include "pfm/engine.hpp"

#include "pfm/error.hpp"

#include <algorithm>

namespace pfm {

bool element_accepts(const PatternElement& e, Dimension d, std::string_view value, bool match_subtypes,
                     const SubtypeFn& is_subtype) {
  auto literal = [&] {
    if (e.text == value) return true;
    bool type_dim = d == Dimension::ObjectType || d == Dimension::RootType;
    return match_subtypes && type_dim && is_subtype && is_subtype(value, e.text);
  };
  switch (e.kind) {
    case PatternElement::Kind::AlwaysMatch:
    case PatternElement::Kind::Default: return true;
    case PatternElement::Kind::Literal: return literal();
    case PatternElement::Kind::Negation: return !literal();
  }
  return false;
}

bool survives_default_elimination(const ContextPattern& candidate, const ContextPattern& owner) {
  for (auto d : kAllDimensions) {
    bool cand_default = candidate.at(d).kind == PatternElement::Kind::Default;
    bool owner_default = owner.at(d).kind == PatternElement::Kind::Default;
    if (cand_default && !owner_default) return false;
    if (!cand_default && owner_default) return true;
  }
  return true;
}

namespace {

std::string rule_label(const Rule& r) { return "#" + std::to_string(r.handle.value); }

std::string context_text(const ContextValues& ctx) {
  std::string out;
  for (auto d : kAllDimensions) {
    if (!out.empty()) out += ", ";
    out += std::string(tag_of(d)) + "=" + ctx[index_of(d)];
  }
  return out;
}

// Stages two to four over the applicable rules (ordered by seq).
const Rule* select_winner(std::vector<const Rule*> survivors, MatchTrace& trace) {
  for (auto d : kAllDimensions) {
    auto is_default = [d](const Rule* r) { return r->pattern.at(d).kind == PatternElement::Kind::Default; };
    auto specific = std::find_if_not(survivors.begin(), survivors.end(), is_default);
    if (specific == survivors.end()) continue;
    for (const Rule* r : survivors) {
      if (is_default(r))
        trace.eliminated.push_back({r->handle, d,
                                    "'-' at " + std::string(tag_of(d)) + " yields to specific rule " +
                                        rule_label(**specific)});
    }
    survivors.erase(std::remove_if(survivors.begin(), survivors.end(), is_default), survivors.end());
  }

  const Rule* best = survivors.front();
  for (std::size_t i = 1; i < survivors.size(); ++i) {
    const Rule* r = survivors[i];
    std::string line = rule_label(*best) + " vs " + rule_label(*r) + ": ";
    bool decided = false;
    for (auto d : kAllDimensions) {
      int a = rank_of(best->pattern.at(d).kind);
      int b = rank_of(r->pattern.at(d).kind);
      if (a == b) continue;
      line += std::string(tag_of(d)) + " ranks " + std::to_string(a) + " vs " + std::to_string(b) + ", ";
      if (b > a) best = r;
      line += rule_label(*best) + " leads";
      decided = true;
      break;
    }
    if (!decided) {
      // equal rank vectors: the later installation wins
      if (r->seq > best->seq) best = r;
      line += "equal ranks, later rule " + rule_label(*best) + " leads";
    }
    trace.comparison.push_back(std::move(line));
  }
  return best;
}

}  // namespace

Engine::Engine(const TypeRegistry* types) : types_(types) {}

bool Engine::is_subtype(std::string_view sub, std::string_view super) const {
  if (sub == super) return true;
  return types_ && types_->is_subtype(sub, super);
}

void Engine::check_cached_methods(const ContextPattern& pattern, const AnyPolicy& policy) const {
  const auto* tp = std::get_if<TransmissionPolicy>(&policy);
  if (!tp || !types_) return;
  const auto* caching = std::get_if<ByReferenceWithCaching>(&tp->v);
  if (!caching || caching->methods.empty()) return;
  const auto& type = pattern.at(Dimension::ObjectType);
  if (type.kind != PatternElement::Kind::Literal || !types_->contains(type.text)) return;
  auto methods = types_->all_methods(type.text);
  for (const auto& m : caching->methods) {
    bool ok = std::any_of(methods.begin(), methods.end(),
                          [&](const MethodDecl& d) { return d.name == m && d.params.empty(); });
    if (!ok) fail(ErrorCode::CachedMethodArity, type.text + " has no zero-parameter method " + m);
  }
}

RuleHandle Engine::add_rule(PolicyKind kind, std::string_view pattern, AnyPolicy policy, bool match_subtypes,
                            TemporalScope scope) {
  std::optional<CallId> owner;
  if (scope == TemporalScope::CurrentCall) {
    owner = current_call();
    if (!owner) fail(ErrorCode::NoActiveCall, "CURRENT_CALL rule installed outside any call");
  }
  return add_rule(kind, pattern, std::move(policy), match_subtypes, scope, owner);
}

RuleHandle Engine::add_rule(PolicyKind kind, std::string_view pattern_text, AnyPolicy policy, bool match_subtypes,
                            TemporalScope scope, std::optional<CallId> owner_call) {
  ContextPattern pattern;
  try {
    pattern = parse_pattern(pattern_text);
  } catch (const Error& e) {
    fail(ErrorCode::PatternSyntax, e.what());
  }
  if (kind_of(policy) != kind)
    fail(ErrorCode::KindMismatch, std::string(to_string(kind_of(policy))) + " policy " + format_policy(policy) +
                                      " given for a " + std::string(to_string(kind)) + " rule");
  if (scope == TemporalScope::CurrentCall && !owner_call)
    fail(ErrorCode::NoActiveCall, "CURRENT_CALL rule needs an owning call");
  if (scope == TemporalScope::Indefinite) owner_call.reset();
  check_cached_methods(pattern, policy);

  auto rule = std::make_unique<Rule>();
  rule->seq = next_seq_++;
  rule->handle = RuleHandle{rule->seq};
  rule->kind = kind;
  rule->pattern = std::move(pattern);
  rule->policy = std::move(policy);
  rule->match_subtypes = match_subtypes;
  rule->scope = scope;
  rule->owner_call = owner_call;
  trees_[static_cast<std::size_t>(kind)].insert(rule.get());
  RuleHandle handle = rule->handle;
  rules_.emplace(handle, std::move(rule));
  return handle;
}

void Engine::remove_rule(RuleHandle handle) {
  auto it = rules_.find(handle);
  if (it == rules_.end()) fail(ErrorCode::UnknownHandle, "rule #" + std::to_string(handle.value));
  trees_[static_cast<std::size_t>(it->second->kind)].erase(it->second.get());
  rules_.erase(it);
}

const Rule* Engine::find(RuleHandle handle) const {
  auto it = rules_.find(handle);
  return it == rules_.end() ? nullptr : it->second.get();
}

RuleInfo Engine::describe(const Rule& r) const {
  return RuleInfo{r.handle, r.seq, r.kind, format_pattern(r.pattern), format_policy(r.policy), r.match_subtypes,
                  r.scope, r.owner_call};
}

std::vector<RuleInfo> Engine::list_rules(PolicyKind kind) const {
  std::vector<RuleInfo> out;
  for (const auto& [h, r] : rules_)
    if (r->kind == kind) out.push_back(describe(*r));
  return out;
}

MatchTrace Engine::match(PolicyKind kind, const ContextValues& ctx) const {
  MatchTrace trace;
  trace.kind = kind;
  trace.context = ctx;
  SubtypeFn subtype = [this](std::string_view a, std::string_view b) { return is_subtype(a, b); };
  auto applicable = trees_[static_cast<std::size_t>(kind)].applicable(ctx, subtype);
  for (const Rule* r : applicable) trace.applicable.push_back(r->handle);
  if (applicable.empty())
    fail(ErrorCode::NoApplicableRule,
         "no applicable " + std::string(to_string(kind)) + " rule for {" + context_text(ctx) + "}");
  trace.winner = select_winner(std::move(applicable), trace)->handle;
  return trace;
}

namespace {

template <class Policy, class Context>
Resolution<Policy> resolve_with(const Engine& engine, PolicyKind kind, const Context& ctx) {
  Resolution<Policy> out{Policy{}, engine.match(kind, ctx.dims)};
  const Rule* winner = engine.find(*out.trace.winner);
  out.policy = eval_dynamic(std::get<Policy>(winner->policy), ctx, &out.trace.dynamic_chain);
  return out;
}

}  // namespace

Resolution<TransmissionPolicy> Engine::resolve_transmission(const TransmissionContext& ctx) const {
  return resolve_with<TransmissionPolicy>(*this, PolicyKind::Transmission, ctx);
}

Resolution<EncodingPolicy> Engine::resolve_encoding(const TransmissionContext& ctx) const {
  return resolve_with<EncodingPolicy>(*this, PolicyKind::Encoding, ctx);
}

Resolution<PlacementPolicy> Engine::resolve_placement(const InstantiationContext& ctx) const {
  return resolve_with<PlacementPolicy>(*this, PolicyKind::Placement, ctx);
}

Resolution<AccessPolicy> Engine::resolve_access(const AccessContext& ctx) const {
  return resolve_with<AccessPolicy>(*this, PolicyKind::Access, ctx);
}

void Engine::begin_servicing(CallId call) { servicing_.push_back(call); }

void Engine::end_servicing(CallId call) {
  auto it = std::find(servicing_.rbegin(), servicing_.rend(), call);
  if (it != servicing_.rend()) servicing_.erase(std::next(it).base());
}

std::optional<CallId> Engine::current_call() const {
  if (servicing_.empty()) return std::nullopt;
  return servicing_.back();
}

void Engine::expire_call_scoped(CallId call) {
  std::vector<RuleHandle> doomed;
  for (const auto& [h, r] : rules_)
    if (r->scope == TemporalScope::CurrentCall && r->owner_call == call) doomed.push_back(h);
  for (auto h : doomed) remove_rule(h);
}

std::string Engine::dump_tree(PolicyKind kind) const {
  return trees_[static_cast<std::size_t>(kind)].dump([](const Rule& r) {
    std::string s = format_policy(r.policy) + " (rule #" + std::to_string(r.handle.value) + ", seq " +
                    std::to_string(r.seq);
    if (r.match_subtypes) s += ", subtypes";
    if (r.scope == TemporalScope::CurrentCall) s += ", current_call";
    return s + ")";
  });
}

std::string render_trace(const Engine& engine, const MatchTrace& trace) {
  auto label = [&](RuleHandle h) {
    const Rule* r = engine.find(h);
    std::string s = "#" + std::to_string(h.value);
    if (r) s += " " + format_pattern(r->pattern) + " → " + format_policy(r->policy);
    return s;
  };
  std::string out = "kind: " + std::string(to_string(trace.kind)) + "\n";
  out += "context: " + context_text(trace.context) + "\n";
  out += "applicable:\n";
  if (trace.applicable.empty()) out += "  (none)\n";
  for (auto h : trace.applicable) out += "  " + label(h) + "\n";
  if (!trace.eliminated.empty()) {
    out += "eliminated:\n";
    for (const auto& e : trace.eliminated) out += "  #" + std::to_string(e.rule.value) + ": " + e.reason + "\n";
  }
  if (!trace.comparison.empty()) {
    out += "comparison:\n";
    for (const auto& c : trace.comparison) out += "  " + c + "\n";
  }
  if (!trace.dynamic_chain.empty()) {
    out += "dynamic chain:\n";
    for (const auto& d : trace.dynamic_chain) out += "  " + d + "\n";
  }
  if (trace.winner) {
    const Rule* r = engine.find(*trace.winner);
    out += "winner: ";
    out += r ? format_pattern(r->pattern) + " → " + format_policy(r->policy)
             : "#" + std::to_string(trace.winner->value);
    out += "\n";
  } else {
    out += "no applicable rule\n";
  }
  return out;
}

}  // namespace pfm
