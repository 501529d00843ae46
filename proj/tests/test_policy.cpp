#include "pfm/error.hpp"
#include "pfm/policy.hpp"

#include <doctest.h>

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

std::string round_trip(PolicyKind kind, std::string_view text) {
  DeciderRegistry deciders;
  return format_policy(parse_policy(kind, text, deciders));
}

TransmissionContext image_of_size(std::size_t bytes, Heap& heap) {
  auto img = heap.allocate("JPEGImage", {{"data", Value::byte_array(bytes)}});
  TransmissionContext ctx;
  ctx.current_object = Value(img);
  ctx.heap = &heap;
  return ctx;
}

}  // namespace

TEST_CASE("keywords round-trip through their canonical text") {
  CHECK(round_trip(PolicyKind::Transmission, "by_ref") == "by_ref");
  CHECK(round_trip(PolicyKind::Transmission, "by_val") == "by_val");
  CHECK(round_trip(PolicyKind::Transmission, "by_move") == "by_move");
  CHECK(round_trip(PolicyKind::Transmission, "by_visit") == "by_visit");
  CHECK(round_trip(PolicyKind::Transmission, "by_value_to_depth(2)") == "by_value_to_depth(2)");
  CHECK(round_trip(PolicyKind::Transmission, "by_value_to_depth(full)") == "by_value_to_depth(full)");
  CHECK(round_trip(PolicyKind::Transmission, "by_ref_caching(key)") == "by_ref_caching(key;)");
  CHECK(round_trip(PolicyKind::Transmission, "by_ref_caching(a, b; size)") == "by_ref_caching(a,b;size)");
  CHECK(round_trip(PolicyKind::Transmission, "dynamic(by_size:500)") == "dynamic(by_size:500)");
  CHECK(round_trip(PolicyKind::Encoding, "transform(zip, base64)") == "transform(zip,base64)");
  CHECK(round_trip(PolicyKind::Encoding, "class_by_name(include_bytes)") == "class_by_name(include_bytes)");
  CHECK(round_trip(PolicyKind::Placement, "create_at(east)") == "create_at(east)");
  CHECK(round_trip(PolicyKind::Access, "deny(untrusted)") == "deny(untrusted)");
  CHECK(round_trip(PolicyKind::Access, "deny") == "deny");
}

TEST_CASE("keyword errors") {
  DeciderRegistry deciders;
  CHECK(code_of([&] { parse_policy(PolicyKind::Transmission, "by_nothing", deciders); }) == ErrorCode::PolicySyntax);
  CHECK(code_of([&] { parse_policy(PolicyKind::Transmission, "by_ref(1)", deciders); }) == ErrorCode::PolicySyntax);
  CHECK(code_of([&] { parse_policy(PolicyKind::Transmission, "by_value_to_depth(0)", deciders); }) == ErrorCode::InvalidPolicy);
  CHECK(code_of([&] { parse_policy(PolicyKind::Transmission, "by_value_to_depth(x)", deciders); }) == ErrorCode::PolicySyntax);
  CHECK(code_of([&] { parse_policy(PolicyKind::Transmission, "dynamic(psychic)", deciders); }) == ErrorCode::UnknownDecider);
  CHECK(code_of([&] { parse_policy(PolicyKind::Encoding, "transform(a,transform(b,transform(c,transform(d,transform(e,base64)))))", deciders); }) ==
        ErrorCode::InvalidPolicy);
  CHECK(kind_of(parse_policy(PolicyKind::Transmission, "allow", deciders)) == PolicyKind::Access);
}

TEST_CASE("concrete policies evaluate to themselves") {
  TransmissionContext ctx;
  std::vector<std::string> chain;
  CHECK(eval_dynamic(TransmissionPolicy::by_ref(), ctx, &chain) == TransmissionPolicy::by_ref());
  CHECK(chain.empty());
}

TEST_CASE("size decider flips at its threshold") {
  TypeRegistry types;
  types.register_type(TypeDescriptor{"JPEGImage", TypeKind::Concrete, "", {{"data", "byte[]"}}, {}, {}});
  Heap heap(NodeId{1}, types);
  DeciderRegistry deciders;
  auto p = std::get<TransmissionPolicy>(parse_policy(PolicyKind::Transmission, "dynamic(by_size:500)", deciders));
  std::vector<std::string> chain;
  CHECK(eval_dynamic(p, image_of_size(499, heap), &chain) == TransmissionPolicy::by_val());
  CHECK(chain == std::vector<std::string>{"by_size:500"});
  CHECK(eval_dynamic(p, image_of_size(500, heap)) == TransmissionPolicy::by_ref());
}

TEST_CASE("a decider that returns itself overflows the chain") {
  struct Loop : TransmissionDecider {
    std::shared_ptr<const TransmissionDecider> self;
    TransmissionPolicy decide(const TransmissionContext&) const override { return TransmissionPolicy::dynamic(self); }
    std::string name() const override { return "loop"; }
  };
  auto loop = std::make_shared<Loop>();
  loop->self = loop;
  TransmissionContext ctx;
  std::vector<std::string> chain;
  CHECK(code_of([&] { eval_dynamic(TransmissionPolicy::dynamic(loop), ctx, &chain); }) == ErrorCode::DynamicChainOverflow);
  CHECK(chain.size() == static_cast<std::size_t>(kDynamicChainLimit));
  loop->self.reset();  // break the cycle
}

TEST_CASE("a throwing decider is reported as a decider failure") {
  auto d = make_decider<AccessPolicy, AccessContext>("boom", [](const AccessContext&) -> AccessPolicy {
    throw std::runtime_error("no");
  });
  AccessContext ctx;
  CHECK(code_of([&] { eval_dynamic(AccessPolicy::dynamic(d), ctx); }) == ErrorCode::DeciderFailure);
}

TEST_CASE("a decider may return a depth-limited policy") {
  auto d = make_decider<TransmissionPolicy, TransmissionContext>(
      "two", [](const TransmissionContext&) { return TransmissionPolicy::to_depth(2); });
  TransmissionContext ctx;
  CHECK(eval_dynamic(TransmissionPolicy::dynamic(d), ctx) == TransmissionPolicy::to_depth(2));
}

TEST_CASE("least-loaded placement picks the smallest census entry") {
  DeciderRegistry deciders;
  auto p = std::get<PlacementPolicy>(parse_policy(PolicyKind::Placement, "dynamic(least_loaded)", deciders));
  InstantiationContext ctx;
  ctx.census = {{NodeId{1}, "a", 7}, {NodeId{2}, "b", 3}, {NodeId{3}, "c", 5}};
  CHECK(eval_dynamic(p, ctx) == PlacementPolicy::create_at("b"));
}

TEST_CASE("cached member predicates") {
  auto p = std::get<ByReferenceWithCaching>(TransmissionPolicy::caching({"key"}, {"size"}).v);
  CHECK(p.is_cached_field("key"));
  CHECK_FALSE(p.is_cached_field("size"));
  CHECK(p.is_cached_method("size"));
}
