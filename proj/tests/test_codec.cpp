#include "pfm/codec.hpp"
#include "pfm/error.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cctype>
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

/// A sender and a receiver sharing one set of types.
struct Link {
  TypeRegistry send_types;
  TypeRegistry recv_types;
  Heap sender{NodeId{1}, send_types};
  Heap receiver{NodeId{2}, recv_types};
  Engine engine{&send_types};
  TransformRegistry transforms;
  DeciderRegistry deciders;

  void both(const TypeDescriptor& d) {
    send_types.register_type(d);
    recv_types.register_type(d);
  }
  void rule(PolicyKind kind, std::string_view pattern, std::string_view policy, bool subtypes = false) {
    engine.add_rule(kind, pattern, parse_policy(kind, policy, deciders), subtypes, TemporalScope::Indefinite);
  }
  Encoded encode(const Value& root, std::string declared) {
    TransmissionMeta meta;
    meta.declared_type = std::move(declared);
    meta.dims[index_of(Dimension::Parameter)] = std::string(kReturnParameter);
    meta.destination_knows = [this](std::string_view t) { return recv_types.contains(t); };
    EncodeEnv env;
    env.engine = &engine;
    env.heap = &sender;
    env.transforms = &transforms;
    // getters only: getSize() reads field size
    env.call_method = [this](const ObjRef& r, const std::string& m) {
      std::string field = m.substr(3);
      field[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(field[0])));
      return sender.field(r, field);
    };
    return encode_transmission(root, meta, env);
  }
  Value decode(const WireValue& w, std::string_view declared) {
    return decode_transmission(w, receiver, recv_types, declared).value;
  }
};

TypeDescriptor klass(std::string name, std::vector<FieldDecl> fields, std::vector<MethodDecl> methods = {}) {
  return TypeDescriptor{std::move(name), TypeKind::Concrete, "", std::move(fields), std::move(methods), {}};
}

std::set<ObjectId> by_value_ids(const Encoded& enc) {
  std::set<ObjectId> out;
  for (const auto& [tag, ref] : enc.tag_origins) out.insert(ref.id);
  return out;
}

}  // namespace

TEST_CASE("aliased children are sent once and stay aliased") {
  Link l;
  l.both(klass("Leaf", {{"n", "int"}}));
  l.both(klass("Two", {{"a", "Leaf"}, {"b", "Leaf"}}));
  l.rule(PolicyKind::Transmission, "all=-", "by_val");
  l.rule(PolicyKind::Encoding, "all=-", "element_wise");
  auto leaf = l.sender.allocate("Leaf", {{"n", Value::of_int(4)}});
  auto two = l.sender.allocate("Two", {{"a", Value(leaf)}, {"b", Value(leaf)}});
  auto enc = l.encode(Value(two), "Two");
  const auto& obj = enc.wire.as<wire::Object>();
  CHECK(obj.fields[0].second.is<wire::Object>());
  CHECK(obj.fields[1].second.is<wire::BackRef>());
  auto copy = l.decode(enc.wire, "Two");
  CHECK(l.receiver.field(copy.object(), "a") == l.receiver.field(copy.object(), "b"));
  CHECK_FALSE(copy.object() == two);
}

TEST_CASE("random graphs decode to isomorphic copies") {
  std::mt19937 rng(101);
  for (int round = 0; round < 300; ++round) {
    Link l;
    oracle::register_graph_types(l.send_types);
    oracle::register_graph_types(l.recv_types);
    l.rule(PolicyKind::Transmission, "all=-", "by_val");
    l.rule(PolicyKind::Encoding, "all=-", "element_wise");
    auto root = oracle::random_graph(rng, l.sender, 15);
    auto enc = l.encode(Value(root), "Root");
    auto again = l.encode(Value(root), "Root");
    REQUIRE(canonical_bytes(enc.wire) == canonical_bytes(again.wire));
    auto copy = l.decode(parse_wire(canonical_bytes(enc.wire)), "Root");
    REQUIRE(oracle::isomorphic(l.sender, Value(root), l.receiver, copy));
  }
}

TEST_CASE("a depth budget copies exactly the objects within reach") {
  std::mt19937 rng(202);
  for (int round = 0; round < 300; ++round) {
    Link l;
    oracle::register_graph_types(l.send_types);
    oracle::register_graph_types(l.recv_types);
    int d = std::uniform_int_distribution<int>(1, 4)(rng);
    l.rule(PolicyKind::Transmission, "object_type=Root, others=*", "by_value_to_depth(" + std::to_string(d) + ")");
    l.rule(PolicyKind::Transmission, "all=-", "by_ref");
    l.rule(PolicyKind::Encoding, "all=-", "element_wise");
    auto root = oracle::random_graph(rng, l.sender, 15);
    auto enc = l.encode(Value(root), "Root");
    REQUIRE(by_value_ids(enc) == oracle::within_distance(l.sender, root, d));
  }
}

TEST_CASE("full closure equals a depth beyond the graph") {
  std::mt19937 rng(303);
  for (int round = 0; round < 100; ++round) {
    std::string texts[2];
    std::mt19937 start = rng;
    for (int k = 0; k < 2; ++k) {
      std::mt19937 same = start;
      Link l;
      oracle::register_graph_types(l.send_types);
      l.rule(PolicyKind::Transmission, "object_type=Root, others=*", k ? "by_value_to_depth(20)" : "by_value_to_depth(full)");
      l.rule(PolicyKind::Transmission, "all=-", "by_ref");
      l.rule(PolicyKind::Encoding, "all=-", "element_wise");
      auto root = oracle::random_graph(same, l.sender, 15);
      texts[k] = canonical_bytes(l.encode(Value(root), "Root").wire);
      rng = same;
    }
    REQUIRE(texts[0] == texts[1]);
  }
}

TEST_CASE("a budget yields to a more specific rule below it") {
  Link l;
  l.both(klass("Leaf", {{"n", "int"}}));
  l.both(klass("Mid", {{"leaf", "Leaf"}}));
  l.both(klass("Top", {{"mid", "Mid"}, {"leaf", "Leaf"}}));
  l.rule(PolicyKind::Transmission, "object_type=Top, others=*", "by_value_to_depth(1)");
  l.rule(PolicyKind::Transmission, "object_type=Mid, others=*", "by_value_to_depth(full)");
  l.rule(PolicyKind::Transmission, "object_type=Leaf, field=leaf, root_type=Top, others=*", "by_ref");
  l.rule(PolicyKind::Transmission, "all=-", "by_ref");
  l.rule(PolicyKind::Encoding, "all=-", "element_wise");
  auto leaf = l.sender.allocate("Leaf", {{"n", Value::of_int(1)}});
  auto deep = l.sender.allocate("Leaf", {{"n", Value::of_int(2)}});
  auto mid = l.sender.allocate("Mid", {{"leaf", Value(deep)}});
  auto top = l.sender.allocate("Top", {{"mid", Value(mid)}, {"leaf", Value(leaf)}});
  auto enc = l.encode(Value(top), "Top");
  CHECK(by_value_ids(enc) == std::set<ObjectId>{top.id, mid.id});
}

TEST_CASE("caching with nothing to cache is a plain reference") {
  std::string texts[2];
  for (int k = 0; k < 2; ++k) {
    Link l;
    l.both(klass("P", {{"key", "string"}}));
    l.rule(PolicyKind::Transmission, "all=-", k ? "by_ref_caching(;)" : "by_ref");
    l.rule(PolicyKind::Encoding, "all=-", "element_wise");
    auto p = l.sender.allocate("P", {{"key", Value::of_string("k")}});
    texts[k] = canonical_bytes(l.encode(Value(p), "P").wire);
  }
  CHECK(texts[0] == texts[1]);
}

TEST_CASE("cached members are snapshots") {
  Link l;
  l.both(klass("P", {{"key", "string"}, {"size", "int"}}, {{"getSize", {}, "int"}}));
  l.rule(PolicyKind::Transmission, "all=-", "by_ref_caching(key;getSize)");
  l.rule(PolicyKind::Encoding, "all=-", "element_wise");
  auto p = l.sender.allocate("P", {{"key", Value::of_string("k1")}, {"size", Value::of_int(3)}});
  auto enc = l.encode(Value(p), "P");
  const auto& r = enc.wire.as<wire::RemoteRef>();
  REQUIRE(r.cached_fields.size() == 1);
  REQUIRE(r.cached_methods.size() == 1);
  auto proxy = l.decode(enc.wire, "P");
  l.sender.set_field(p, "key", Value::of_string("k2"));
  const auto& data = *l.receiver.get(proxy.object()).proxy;
  CHECK(data.cached_fields[0].second == Value::of_string("k1"));
  CHECK(data.cached_methods[0].second == Value::of_int(3));
  CHECK(data.view_type == "P");
}

TEST_CASE("rules that match nothing leave the wire unchanged") {
  std::mt19937 rng(404);
  for (int round = 0; round < 100; ++round) {
    std::string texts[2];
    std::mt19937 start = rng;
    for (int k = 0; k < 2; ++k) {
      std::mt19937 same = start;
      Link l;
      oracle::register_graph_types(l.send_types);
      l.rule(PolicyKind::Transmission, "object_type=Root, others=*", "by_value_to_depth(2)");
      l.rule(PolicyKind::Transmission, "all=-", "by_ref");
      l.rule(PolicyKind::Encoding, "all=-", "element_wise");
      if (k) {
        l.rule(PolicyKind::Transmission, "object_type=Elsewhere, others=*", "by_val");
        l.rule(PolicyKind::Encoding, "service=Elsewhere, others=*", "base64");
      }
      auto root = oracle::random_graph(same, l.sender, 12);
      texts[k] = canonical_bytes(l.encode(Value(root), "Root").wire);
      rng = same;
    }
    REQUIRE(texts[0] == texts[1]);
  }
}

TEST_CASE("packed arrays decode to the element-wise values") {
  std::mt19937 rng(505);
  for (const char* type : {"byte", "int", "long", "short"}) {
    for (int round = 0; round < 20; ++round) {
      Value decoded[2];
      ArrayValue a{type, {}};
      int n = std::uniform_int_distribution<int>(0, 40)(rng);
      for (int i = 0; i < n; ++i) a.elements.push_back(Value::of_integral(type, std::uniform_int_distribution<int>(-300, 300)(rng)));
      for (int k = 0; k < 2; ++k) {
        Link l;
        l.both(klass("Box", {{"data", array_of(type)}}));
        l.rule(PolicyKind::Transmission, "all=-", "by_val");
        l.rule(PolicyKind::Encoding, "all=-", k ? "base64" : "element_wise");
        l.rule(PolicyKind::Encoding, "object_type=Box, others=*", "element_wise");
        auto box = l.sender.allocate("Box", {{"data", Value(a)}});
        auto enc = l.encode(Value(box), "Box");
        const auto& data = enc.wire.as<wire::Object>().fields[0].second;
        REQUIRE(data.is<wire::ArrayB64>() == (k == 1));
        decoded[k] = l.receiver.field(l.decode(enc.wire, "Box").object(), "data");
      }
      REQUIRE(decoded[0] == decoded[1]);
      REQUIRE(decoded[0] == Value(a));
    }
  }
}

TEST_CASE("packing refuses arrays of objects") {
  Link l;
  l.both(klass("Leaf", {{"n", "int"}}));
  l.both(klass("Many", {{"xs", "Leaf[]"}}));
  l.rule(PolicyKind::Transmission, "all=-", "by_val");
  l.rule(PolicyKind::Encoding, "all=-", "base64");
  l.rule(PolicyKind::Encoding, "object_type=Many, others=*", "element_wise");
  l.rule(PolicyKind::Encoding, "object_type=Leaf, others=*", "element_wise");
  auto m = l.sender.allocate("Many", {{"xs", Value(ArrayValue{"Leaf", {}})}});
  CHECK(code_of([&] { l.encode(Value(m), "Many"); }) == ErrorCode::Base64OnNonPrimitiveArray);
}

TEST_CASE("class values by name, with and without their description") {
  Link l;
  l.send_types.register_type(klass("x.Y", {{"n", "int"}}));
  l.rule(PolicyKind::Transmission, "all=-", "by_val");
  l.rule(PolicyKind::Encoding, "all=-", "class_by_name");
  auto enc = l.encode(Value::of_class("x.Y"), "Class");
  CHECK(enc.wire == WireValue{wire::ClassRef{"x.Y", std::nullopt}});
  CHECK(code_of([&] { l.decode(enc.wire, "Class"); }) == ErrorCode::UnknownClassRef);

  l.rule(PolicyKind::Encoding, "object_type=Class, others=*", "class_by_name(include_bytes)");
  enc = l.encode(Value::of_class("x.Y"), "Class");
  REQUIRE(enc.wire.as<wire::ClassRef>().class_bytes.has_value());
  CHECK(l.decode(enc.wire, "Class") == Value::of_class("x.Y"));
  CHECK(l.recv_types.get("x.Y") == l.send_types.get("x.Y"));

  // now known on the other side: the name alone is sent
  enc = l.encode(Value::of_class("x.Y"), "Class");
  CHECK_FALSE(enc.wire.as<wire::ClassRef>().class_bytes.has_value());
}

TEST_CASE("transforms run before the inner encoding") {
  Link l;
  l.both(klass("Img", {{"data", "byte[]"}}));
  l.transforms.add("half", truncate_transform("data", 0.5));
  l.rule(PolicyKind::Transmission, "all=-", "by_val");
  l.rule(PolicyKind::Encoding, "all=-", "element_wise");
  l.rule(PolicyKind::Encoding, "object_type=Img, others=*", "transform(half,element_wise)");
  auto img = l.sender.allocate("Img", {{"data", Value::byte_array(31)}});
  auto copy = l.decode(l.encode(Value(img), "Img").wire, "Img");
  CHECK(l.receiver.field(copy.object(), "data").array().elements.size() == 15);
  CHECK(l.sender.field(img, "data").array().elements.size() == 31);

  l.rule(PolicyKind::Encoding, "object_type=Img, others=*", "transform(missing,element_wise)");
  CHECK(code_of([&] { l.encode(Value(img), "Img"); }) == ErrorCode::UnknownTransform);
}

TEST_CASE("missing rules are errors, not defaults") {
  Link l;
  l.both(klass("Leaf", {{"n", "int"}}));
  auto leaf = l.sender.allocate("Leaf", {{"n", Value::of_int(1)}});
  CHECK(code_of([&] { l.encode(Value(leaf), "Leaf"); }) == ErrorCode::NoApplicableRule);
  l.rule(PolicyKind::Transmission, "all=-", "by_val");
  CHECK(code_of([&] { l.encode(Value(leaf), "Leaf"); }) == ErrorCode::NoApplicableRule);
  // scalars need no decision at all
  CHECK(Link().encode(Value::of_int(3), "int").wire.is<wire::Prim>());
}

TEST_CASE("references take the declared view when it fits") {
  Link l;
  l.both(TypeDescriptor{"Named", TypeKind::Interface, "", {}, {{"getName", {}, "string"}}, {}});
  l.both(klass("Person", {{"name", "string"}}, {{"getName", {}, "string"}}));
  l.both(TypeDescriptor{"Sized", TypeKind::Interface, "", {}, {{"size", {}, "int"}}, {}});
  l.rule(PolicyKind::Transmission, "all=-", "by_ref");
  l.rule(PolicyKind::Encoding, "all=-", "element_wise");
  auto p = l.sender.allocate("Person", {{"name", Value::of_string("a")}});
  CHECK(l.encode(Value(p), "Named").wire.as<wire::RemoteRef>().view_type == "Named");
  CHECK(l.encode(Value(p), "Sized").wire.as<wire::RemoteRef>().view_type == "Person");
}

TEST_CASE("decoder checks tag order and field layout") {
  Link l;
  l.both(klass("Leaf", {{"n", "int"}}));
  auto n = WireValue{wire::Prim{"int", {1, 0, 0, 0}}};
  CHECK(code_of([&] { l.decode({wire::Object{"Leaf", 1, {{"n", n}}}}, "Leaf"); }) == ErrorCode::TagOrderViolation);
  CHECK(code_of([&] { l.decode({wire::BackRef{0}}, "Leaf"); }) == ErrorCode::TagOrderViolation);
  CHECK(code_of([&] { l.decode({wire::Object{"Leaf", 0, {{"m", n}}}}, "Leaf"); }) == ErrorCode::MalformedWire);
  CHECK(code_of([&] { l.decode({wire::Object{"Leaf", 0, {}}}, "Leaf"); }) == ErrorCode::MalformedWire);
  CHECK(code_of([&] { l.decode({wire::Object{"Leaf", 0, {{"n", {wire::Prim{"int", {1}}}}}}}, "Leaf"); }) ==
        ErrorCode::MalformedWire);
}
