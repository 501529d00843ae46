#include "pfm/engine.hpp"
#include "pfm/error.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace pfm;

namespace {

template <class Fn>
ErrorCode code_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::ScenarioSyntax;
}

ContextValues ctx_of(std::initializer_list<std::pair<Dimension, std::string>> values) {
  auto ctx = empty_context();
  for (const auto& [d, v] : values) ctx[index_of(d)] = v;
  return ctx;
}

RuleHandle add(Engine& e, std::string_view pattern, TransmissionPolicy p, bool subtypes = false) {
  return e.add_rule(PolicyKind::Transmission, pattern, p, subtypes, TemporalScope::Indefinite);
}

TransmissionPolicy winner_of(const Engine& e, const ContextValues& ctx) {
  TransmissionContext tc;
  tc.dims = ctx;
  return e.resolve_transmission(tc).policy;
}

TypeRegistry universe_types(const oracle::Universe& u) {
  TypeRegistry types;
  for (const auto& t : u.values[index_of(Dimension::ObjectType)]) {
    std::vector<std::string> supers;
    if (auto it = u.supers.find(t); it != u.supers.end()) supers = it->second;
    types.register_type(TypeDescriptor{t, TypeKind::Concrete, "", {}, {}, supers});
  }
  return types;
}

std::optional<RuleHandle> engine_winner(const Engine& e, const ContextValues& ctx) {
  try {
    return e.match(PolicyKind::Transmission, ctx).winner;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::NoApplicableRule) throw;
    return std::nullopt;
  }
}

}  // namespace

TEST_CASE("web-service clients get values, everyone else references") {
  Engine e;
  add(e, "agent_type=WS, others=*", TransmissionPolicy::by_val());
  add(e, "all=-", TransmissionPolicy::by_ref());
  CHECK(winner_of(e, ctx_of({{Dimension::AgentType, "WS"}, {Dimension::Service, "x"}})) == TransmissionPolicy::by_val());
  CHECK(winner_of(e, ctx_of({{Dimension::AgentType, "RAFDA"}})) == TransmissionPolicy::by_ref());
}

TEST_CASE("a management-service context falls through to the default") {
  Engine e;
  add(e, "agent_type=WS, others=*", TransmissionPolicy::by_val());
  add(e, "all=-", TransmissionPolicy::by_ref());
  add(e, "object_type=Person, others=*", TransmissionPolicy::by_val(), true);
  add(e, "service=Directory, object_type=-, others=*", TransmissionPolicy::by_ref(), true);
  auto ctx = ctx_of({{Dimension::Thread, "318264"},
                     {Dimension::AgentType, "RAFDA"},
                     {Dimension::Service, "ManageNode"},
                     {Dimension::ObjectType, "HashMap"},
                     {Dimension::Package, "java.util"}});
  CHECK(winner_of(e, ctx) == TransmissionPolicy::by_ref());
  auto text = render_trace(e, e.match(PolicyKind::Transmission, ctx));
  CHECK(text.find("winner: all=- → by_ref") != std::string::npos);
}

TEST_CASE("object rule with a subordinated type dimension") {
  TypeRegistry types;
  types.register_type(TypeDescriptor{"Person", TypeKind::Concrete, "", {}, {}, {}});
  types.register_type(TypeDescriptor{"Student", TypeKind::Concrete, "", {}, {}, {"Person"}});
  types.register_type(TypeDescriptor{"Address", TypeKind::Concrete, "", {}, {}, {}});
  Engine e(&types);
  add(e, "object_type=Person, others=*", TransmissionPolicy::by_val(), true);
  add(e, "service=Directory, object_type=-, others=*", TransmissionPolicy::by_ref(), true);
  auto dir = [](std::string t) { return ctx_of({{Dimension::Service, "Directory"}, {Dimension::ObjectType, t}}); };
  CHECK(winner_of(e, dir("Person")) == TransmissionPolicy::by_val());
  CHECK(winner_of(e, dir("Student")) == TransmissionPolicy::by_val());
  CHECK(winner_of(e, dir("Address")) == TransmissionPolicy::by_ref());
}

TEST_CASE("service outranks object type when both are specific") {
  Engine e;
  add(e, "object_type=Person, others=*", TransmissionPolicy::by_val());
  add(e, "service=Directory, others=*", TransmissionPolicy::by_ref());
  CHECK(winner_of(e, ctx_of({{Dimension::Service, "Directory"}, {Dimension::ObjectType, "Person"}})) ==
        TransmissionPolicy::by_ref());
  CHECK(winner_of(e, ctx_of({{Dimension::Service, "Registry"}, {Dimension::ObjectType, "Person"}})) ==
        TransmissionPolicy::by_val());
}

TEST_CASE("subtype matching only on type dimensions and only when asked") {
  TypeRegistry types;
  types.register_type(TypeDescriptor{"Base", TypeKind::Concrete, "", {}, {}, {}});
  types.register_type(TypeDescriptor{"Derived", TypeKind::Concrete, "", {}, {}, {"Base"}});
  Engine e(&types);
  add(e, "object_type=Base, others=*", TransmissionPolicy::by_val());
  add(e, "all=-", TransmissionPolicy::by_ref());
  CHECK(winner_of(e, ctx_of({{Dimension::ObjectType, "Derived"}})) == TransmissionPolicy::by_ref());
  add(e, "root_type=Base, others=*", TransmissionPolicy::by_move(), true);
  CHECK(winner_of(e, ctx_of({{Dimension::RootType, "Derived"}})) == TransmissionPolicy::by_move());
  add(e, "service=Base, others=*", TransmissionPolicy::by_visit(), true);
  CHECK(winner_of(e, ctx_of({{Dimension::Service, "Derived"}})) == TransmissionPolicy::by_ref());
}

TEST_CASE("latest of two equal patterns wins") {
  Engine e;
  add(e, "all=-", TransmissionPolicy::by_ref());
  add(e, "all=-", TransmissionPolicy::by_val());
  CHECK(winner_of(e, empty_context()) == TransmissionPolicy::by_val());
}

TEST_CASE("an empty engine applies nothing") {
  Engine e;
  CHECK(code_of([&] { winner_of(e, empty_context()); }) == ErrorCode::NoApplicableRule);
  AccessContext ac;
  CHECK(code_of([&] { e.resolve_access(ac); }) == ErrorCode::NoApplicableRule);
  InstantiationContext ic;
  CHECK(code_of([&] { e.resolve_placement(ic); }) == ErrorCode::NoApplicableRule);
  TransmissionContext tc;
  CHECK(code_of([&] { e.resolve_encoding(tc); }) == ErrorCode::NoApplicableRule);
  CHECK(e.list_rules(PolicyKind::Transmission).empty());
  CHECK(e.dump_tree(PolicyKind::Transmission) == "(empty)\n");
}

TEST_CASE("rule installation errors") {
  Engine e;
  CHECK(code_of([&] { add(e, "bad==", TransmissionPolicy::by_ref()); }) == ErrorCode::PatternSyntax);
  CHECK(code_of([&] { e.add_rule(PolicyKind::Transmission, "all=-", AccessPolicy::allow(), false, TemporalScope::Indefinite); }) ==
        ErrorCode::KindMismatch);
  CHECK(code_of([&] { e.add_rule(PolicyKind::Transmission, "all=-", TransmissionPolicy::by_ref(), false, TemporalScope::CurrentCall); }) ==
        ErrorCode::NoActiveCall);
  auto h = add(e, "all=-", TransmissionPolicy::by_ref());
  e.remove_rule(h);
  CHECK(code_of([&] { e.remove_rule(h); }) == ErrorCode::UnknownHandle);
}

TEST_CASE("cached methods must take no parameters") {
  TypeRegistry types;
  types.register_type(TypeDescriptor{"P", TypeKind::Concrete, "", {}, {{"size", {}, "int"}, {"get", {{"k", "int"}}, "int"}}, {}});
  Engine e(&types);
  e.add_rule(PolicyKind::Transmission, "object_type=P, others=*", TransmissionPolicy::caching({}, {"size"}), false,
             TemporalScope::Indefinite);
  CHECK(code_of([&] {
          e.add_rule(PolicyKind::Transmission, "object_type=P, others=*", TransmissionPolicy::caching({}, {"get"}), false,
                     TemporalScope::Indefinite);
        }) == ErrorCode::CachedMethodArity);
}

TEST_CASE("listing and removal keep insertion order") {
  Engine e;
  auto a = add(e, "agent_type=WS, others=*", TransmissionPolicy::by_val());
  auto b = add(e, "thread=t, others=-", TransmissionPolicy::by_move());
  auto c = add(e, "all=-", TransmissionPolicy::by_ref());
  auto listed = e.list_rules(PolicyKind::Transmission);
  REQUIRE(listed.size() == 3);
  CHECK(listed[0].pattern == "agent_type=WS, others=*");
  for (const auto& r : listed) CHECK(same_elements(parse_pattern(r.pattern), e.find(r.handle)->pattern));
  e.remove_rule(b);
  listed = e.list_rules(PolicyKind::Transmission);
  REQUIRE(listed.size() == 2);
  CHECK(listed[0].handle == a);
  CHECK(listed[1].handle == c);
  CHECK(listed[0].seq < listed[1].seq);
}

TEST_CASE("removing the web-service rule falls back to the default") {
  Engine e;
  auto ws = add(e, "agent_type=WS, others=*", TransmissionPolicy::by_val());
  add(e, "all=-", TransmissionPolicy::by_ref());
  e.remove_rule(ws);
  CHECK(winner_of(e, ctx_of({{Dimension::AgentType, "WS"}})) == TransmissionPolicy::by_ref());
}

TEST_CASE("tree dump") {
  Engine e;
  add(e, "agent_type=WS, others=*", TransmissionPolicy::by_val());
  auto before = e.dump_tree(PolicyKind::Transmission);
  auto h = add(e, "all=-", TransmissionPolicy::by_ref());
  auto dump = e.dump_tree(PolicyKind::Transmission);
  CHECK(std::count(dump.begin(), dump.end(), '\n') >= 22);
  CHECK(dump.find("agent_type: WS") != std::string::npos);
  CHECK(dump.find("=> by_val") != std::string::npos);
  CHECK(dump.find("=> by_ref") != std::string::npos);
  CHECK(dump.find("=> by_val") < dump.find("=> by_ref"));
  e.remove_rule(h);
  CHECK(e.dump_tree(PolicyKind::Transmission) == before);
}

TEST_CASE("call-scoped rules bind to the call being serviced") {
  Engine e;
  add(e, "all=-", TransmissionPolicy::by_ref());
  e.begin_servicing(CallId{7});
  e.add_rule(PolicyKind::Transmission, "all=*", TransmissionPolicy::by_val(), false, TemporalScope::CurrentCall);
  e.begin_servicing(CallId{8});
  auto inner = e.add_rule(PolicyKind::Transmission, "thread=t, others=*", TransmissionPolicy::by_move(), false,
                          TemporalScope::CurrentCall);
  CHECK(e.find(inner)->owner_call == CallId{8});
  CHECK(winner_of(e, empty_context()) == TransmissionPolicy::by_val());
  e.end_servicing(CallId{8});
  e.expire_call_scoped(CallId{8});
  CHECK(e.find(inner) == nullptr);
  CHECK(e.current_call() == CallId{7});
  e.expire_call_scoped(CallId{99});
  CHECK(e.list_rules(PolicyKind::Transmission).size() == 2);
  e.end_servicing(CallId{7});
  e.expire_call_scoped(CallId{7});
  CHECK(winner_of(e, empty_context()) == TransmissionPolicy::by_ref());
  e.expire_call_scoped(CallId{7});
  CHECK(e.list_rules(PolicyKind::Transmission).size() == 1);
}

TEST_CASE("tree-indexed resolution equals the flat scan") {
  std::mt19937 rng(17);
  auto u = oracle::small_universe();
  auto types = universe_types(u);
  for (int round = 0; round < 1500; ++round) {
    Engine e(&types);
    std::vector<oracle::FlatRule> flat;
    std::vector<RuleHandle> handles;
    int n = std::uniform_int_distribution<int>(0, 12)(rng);
    for (int i = 0; i < n; ++i) {
      auto r = oracle::random_rule(rng, u);
      auto h = add(e, oracle::spell(r.elements), TransmissionPolicy::by_ref(), r.match_subtypes);
      r.seq = e.find(h)->seq;
      flat.push_back(r);
      handles.push_back(h);
    }
    for (int c = 0; c < 8; ++c) {
      auto ctx = oracle::random_context(rng, u);
      auto want = oracle::flat_resolve(flat, ctx, u.supers);
      auto got = engine_winner(e, ctx);
      REQUIRE(want.has_value() == got.has_value());
      if (want) REQUIRE(handles[*want] == *got);
    }
  }
}

TEST_CASE("raising an element of the winner never makes it lose") {
  std::mt19937 rng(23);
  auto u = oracle::small_universe();
  auto types = universe_types(u);
  int checked = 0;
  for (int round = 0; round < 2000 && checked < 300; ++round) {
    Engine e(&types);
    std::vector<std::pair<RuleHandle, oracle::FlatRule>> rules;
    for (int i = 0; i < 8; ++i) {
      auto r = oracle::random_rule(rng, u);
      rules.emplace_back(add(e, oracle::spell(r.elements), TransmissionPolicy::by_ref(), r.match_subtypes), r);
    }
    auto ctx = oracle::random_context(rng, u);
    auto win = engine_winner(e, ctx);
    if (!win) continue;
    auto it = std::find_if(rules.begin(), rules.end(), [&](const auto& p) { return p.first == *win; });
    auto raised = it->second;
    auto d = std::uniform_int_distribution<std::size_t>(0, kDimensionCount - 1)(rng);
    auto& el = raised.elements[d];
    if (el.kind == PatternElement::Kind::Default)
      el = PatternElement::always();
    else if (el.kind == PatternElement::Kind::AlwaysMatch && ctx[d] != kNone)
      el = PatternElement::literal(ctx[d]);
    else
      continue;
    // the raised rank vector is strictly greater, so the new seq plays no part
    e.remove_rule(*win);
    auto h = add(e, oracle::spell(raised.elements), TransmissionPolicy::by_ref(), raised.match_subtypes);
    REQUIRE(engine_winner(e, ctx) == h);
    ++checked;
  }
  CHECK(checked >= 300);
}
