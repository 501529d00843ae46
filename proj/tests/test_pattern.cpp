#include "pfm/error.hpp"
#include "pfm/pattern.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace pfm;
using K = PatternElement::Kind;

namespace {

ErrorCode parse_error(std::string_view text) {
  try {
    parse_pattern(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("pattern parsed: " << text);
  return ErrorCode::ScenarioSyntax;
}

}  // namespace

TEST_CASE("web-service rule") {
  auto p = parse_pattern("agent_type=WS, others=*");
  CHECK(p.at(Dimension::AgentType) == PatternElement::literal("WS"));
  for (auto d : kAllDimensions)
    if (d != Dimension::AgentType) CHECK(p.at(d).kind == K::AlwaysMatch);
  CHECK(format_pattern(p) == "agent_type=WS, others=*");
}

TEST_CASE("all shorthand") {
  auto p = parse_pattern("all=-");
  CHECK(p.all_default());
  CHECK(format_pattern(p) == "all=-");
  CHECK(parse_pattern("all=*").at(Dimension::Package).kind == K::AlwaysMatch);
}

TEST_CASE("explicit default among wildcards") {
  auto p = parse_pattern("service=Directory, object_type=-, others=*");
  CHECK(p.at(Dimension::Service) == PatternElement::literal("Directory"));
  CHECK(p.at(Dimension::ObjectType).kind == K::Default);
  CHECK(p.at(Dimension::Thread).kind == K::AlwaysMatch);
  CHECK(p.at(Dimension::RootType).kind == K::AlwaysMatch);
  CHECK(format_pattern(p) == "service=Directory, object_type=-, others=*");
}

TEST_CASE("coarse pattern with spaced tag and unmentioned dimensions") {
  auto p = parse_pattern("object type=a.b.C, method=d.e.F.m1()");
  CHECK(p.at(Dimension::ObjectType) == PatternElement::literal("a.b.C"));
  CHECK(p.at(Dimension::Method) == PatternElement::literal("d.e.F.m1()"));
  CHECK(p.at(Dimension::Thread).kind == K::Default);
  CHECK(p.at(Dimension::Package).kind == K::Default);
  CHECK(parse_pattern("root object type=X").at(Dimension::RootType) == PatternElement::literal("X"));
}

TEST_CASE("negation and whitespace") {
  auto p = parse_pattern("  agent_type = !WS ,others= * ");
  CHECK(p.at(Dimension::AgentType) == PatternElement::negation("WS"));
  CHECK(p.at(Dimension::Field).kind == K::AlwaysMatch);
}

TEST_CASE("malformed patterns") {
  CHECK(parse_error("service=Directory, all=*") == ErrorCode::AllNotAlone);
  CHECK(parse_error("service=a, service=b") == ErrorCode::DuplicateTag);
  CHECK(parse_error("others=*, others=-") == ErrorCode::DuplicateTag);
  CHECK(parse_error("colour=red") == ErrorCode::UnknownTag);
  CHECK(parse_error("bad==") == ErrorCode::PatternSyntax);
  CHECK(parse_error("service") == ErrorCode::PatternSyntax);
  CHECK(parse_error("service=!*") == ErrorCode::PatternSyntax);
  CHECK(parse_error("service=!-") == ErrorCode::PatternSyntax);
  CHECK(parse_error("service=a,,thread=b") == ErrorCode::PatternSyntax);
  CHECK(parse_error("") == ErrorCode::PatternSyntax);
}

TEST_CASE("shorthand equals the spelled-out pattern") {
  std::mt19937 rng(3);
  auto u = oracle::small_universe();
  for (int i = 0; i < 500; ++i) {
    auto r = oracle::random_rule(rng, u);
    std::string spelled = oracle::spell(r.elements);
    auto p = parse_pattern(spelled);
    REQUIRE(p.elements == r.elements);
    // the canonical form re-parses to the same mapping
    REQUIRE(parse_pattern(format_pattern(p)).elements == p.elements);
  }
}

TEST_CASE("others fills exactly the unlisted dimensions") {
  auto p = parse_pattern("thread=t1, package=!java.util, others=-");
  auto q = parse_pattern(
      "thread=t1, agent_type=-, agent_instance=-, parameter=-, method=-, service=-, field=-, object_type=-, "
      "root_type=-, package=!java.util");
  CHECK(same_elements(p, q));
}
