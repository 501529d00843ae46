#include "pfm/error.hpp"
#include "pfm/heap.hpp"
#include "pfm/types.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace pfm;

namespace {

TypeDescriptor klass(std::string name, std::vector<FieldDecl> fields = {}, std::vector<MethodDecl> methods = {},
                     std::vector<std::string> supers = {}) {
  return TypeDescriptor{std::move(name), TypeKind::Concrete, "", std::move(fields), std::move(methods), std::move(supers)};
}

TypeDescriptor iface(std::string name, std::vector<MethodDecl> methods, std::vector<std::string> supers = {}) {
  return TypeDescriptor{std::move(name), TypeKind::Interface, "", {}, std::move(methods), std::move(supers)};
}

MethodDecl m(std::string name, std::vector<ParamDecl> params, std::string ret) {
  return MethodDecl{std::move(name), std::move(params), std::move(ret)};
}

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

}  // namespace

TEST_CASE("student is a person and a scholar") {
  TypeRegistry types;
  types.register_type(klass("Person"));
  types.register_type(iface("Scholar", {}));
  types.register_type(klass("Student", {}, {}, {"Person", "Scholar"}));
  CHECK(types.is_subtype("Student", "Person"));
  CHECK(types.is_subtype("Student", "Scholar"));
  CHECK_FALSE(types.is_subtype("Person", "Student"));
  CHECK(types.is_subtype("Student[]", "Person[]"));
}

TEST_CASE("registration errors") {
  TypeRegistry types;
  types.register_type(klass("A"));
  CHECK(code_of([&] { types.register_type(klass("A")); }) == ErrorCode::DuplicateType);
  CHECK(code_of([&] { types.register_type(klass("Self", {}, {}, {"Self"})); }) == ErrorCode::CyclicSupertype);
  CHECK(code_of([&] { types.get("Nope"); }) == ErrorCode::UnknownType);
  CHECK(types.contains("int[]"));
  CHECK_FALSE(types.contains("Nope[]"));
}

TEST_CASE("subtype closure matches a depth-first search over declared supertypes") {
  std::mt19937 rng(11);
  for (int round = 0; round < 20; ++round) {
    TypeRegistry types;
    oracle::SuperMap supers;
    std::vector<std::string> names;
    for (int i = 0; i < 50; ++i) {
      std::string name = "T" + std::to_string(i);
      std::vector<std::string> s;
      for (int k = 0; k < 2 && i > 0; ++k)
        if (std::uniform_int_distribution<int>(0, 2)(rng) == 0) {
          auto& pick = names[std::uniform_int_distribution<std::size_t>(0, names.size() - 1)(rng)];
          if (std::find(s.begin(), s.end(), pick) == s.end()) s.push_back(pick);
        }
      types.register_type(klass(name, {}, {}, s));
      supers[name] = s;
      names.push_back(name);
    }
    for (const auto& a : names) {
      auto up = oracle::supertypes_of(supers, a);
      for (const auto& b : names) REQUIRE(types.is_subtype(a, b) == (up.count(b) > 0));
    }
  }
}

TEST_CASE("structural compatibility of a student with a narrower interface") {
  TypeRegistry types;
  types.register_type(klass("Student", {{"name", "string"}}, {m("getName", {}, "string"), m("enrol", {{"c", "string"}}, "void")}));
  types.register_type(iface("Human", {m("getName", {}, "string")}));
  types.register_type(iface("Robot", {m("charge", {}, "void")}));
  CHECK(types.structurally_compatible("Student", "Human"));
  CHECK_FALSE(types.structurally_compatible("Human", "Student"));
  CHECK_FALSE(types.structurally_compatible("Student", "Robot"));
  CHECK(types.structurally_compatible("Student", "Student"));
  CHECK(code_of([&] { types.structurally_compatible("Student", "Ghost"); }) == ErrorCode::UnknownType);
}

TEST_CASE("parameters are contravariant and results covariant") {
  TypeRegistry types;
  types.register_type(klass("Animal"));
  types.register_type(klass("Cat", {}, {m("purr", {}, "void")}, {"Animal"}));
  types.register_type(iface("Feeder", {m("feed", {{"a", "Cat"}}, "Animal")}));
  types.register_type(klass("Generous", {}, {m("feed", {{"a", "Animal"}}, "Cat")}));
  types.register_type(klass("Picky", {}, {m("feed", {{"a", "Cat"}}, "Cat")}));
  types.register_type(klass("Stingy", {}, {m("feed", {{"a", "Cat"}}, "string")}));
  types.register_type(iface("AnimalFeeder", {m("feed", {{"a", "Animal"}}, "Animal")}));
  CHECK(types.structurally_compatible("Generous", "Feeder"));
  CHECK(types.structurally_compatible("Picky", "Feeder"));
  CHECK_FALSE(types.structurally_compatible("Stingy", "Feeder"));
  CHECK_FALSE(types.structurally_compatible("Picky", "AnimalFeeder"));
}

TEST_CASE("recursive structural types are compared coinductively") {
  TypeRegistry types;
  types.register_type(iface("List", {m("next", {}, "List"), m("head", {}, "int")}));
  types.register_type(klass("Cons", {}, {m("next", {}, "Cons"), m("head", {}, "int")}));
  types.register_type(klass("Broken", {}, {m("next", {}, "Broken"), m("head", {}, "string")}));
  CHECK(types.structurally_compatible("Cons", "List"));
  CHECK_FALSE(types.structurally_compatible("Broken", "List"));
}

TEST_CASE("structural compatibility agrees with the greatest-fixpoint oracle") {
  std::mt19937 rng(29);
  std::vector<std::string> method_names{"a", "b", "c"};
  for (int round = 0; round < 40; ++round) {
    std::map<std::string, oracle::MiniType> mini;
    mini["int"] = {false, {}, {}};
    mini["void"] = {false, {}, {}};
    TypeRegistry types;
    std::vector<std::string> names;
    for (int i = 0; i < 30; ++i) {
      std::string name = "S" + std::to_string(i);
      names.push_back(name);
    }
    auto any_type = [&] {
      auto k = std::uniform_int_distribution<std::size_t>(0, names.size() + 1)(rng);
      return k < names.size() ? names[k] : std::string(k == names.size() ? "int" : "void");
    };
    for (std::size_t i = 0; i < names.size(); ++i) {
      oracle::MiniType t;
      if (i > 0 && std::uniform_int_distribution<int>(0, 3)(rng) == 0)
        t.supers.push_back(names[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
      int count = std::uniform_int_distribution<int>(0, 3)(rng);
      for (int k = 0; k < count; ++k) {
        MethodDecl md{method_names[std::uniform_int_distribution<std::size_t>(0, 2)(rng)], {}, any_type()};
        if (std::uniform_int_distribution<int>(0, 1)(rng)) md.params.push_back({"p", any_type()});
        bool clash = std::any_of(t.methods.begin(), t.methods.end(),
                                 [&](const MethodDecl& o) { return o.name == md.name && o.params.size() == md.params.size(); });
        if (!clash) t.methods.push_back(md);
      }
      mini[names[i]] = t;
    }
    for (const auto& n : names) {
      const auto& t = mini[n];
      types.register_type(TypeDescriptor{n, TypeKind::Interface, "", {}, t.methods, t.supers});
    }
    auto rel = oracle::structural_gfp(mini);
    for (const auto& a : names)
      for (const auto& b : names) {
        INFO(a << " vs " << b);
        REQUIRE(types.structurally_compatible(a, b) == rel.at({a, b}));
        if (types.is_subtype(a, b)) REQUIRE(types.structurally_compatible(a, b));
      }
  }
}

TEST_CASE("allocation") {
  TypeRegistry types;
  types.register_type(klass("Person", {{"name", "string"}, {"age", "int"}}));
  types.register_type(iface("Human", {}));
  Heap heap(NodeId{3}, types);

  auto a = heap.allocate("Person", {{"name", Value::of_string("a")}, {"age", Value::of_int(1)}});
  auto b = heap.allocate_default("Person");
  CHECK(a.node == NodeId{3});
  CHECK(a.type == "Person");
  CHECK_FALSE(a == b);
  heap.erase(b);
  auto c = heap.allocate_default("Person");
  CHECK(c.id.value > b.id.value);

  CHECK(code_of([&] { heap.allocate_default("Human"); }) == ErrorCode::AbstractInstantiation);
  CHECK(code_of([&] { heap.allocate("Person", {{"name", Value::of_string("x")}}); }) == ErrorCode::MissingField);
  CHECK(code_of([&] { heap.allocate("Person", {{"name", Value::of_int(1)}, {"age", Value::of_int(1)}}); }) ==
        ErrorCode::FieldTypeMismatch);
  CHECK(code_of([&] { heap.set_field(a, "age", Value::of_string("old")); }) == ErrorCode::FieldTypeMismatch);
  CHECK(code_of([&] { heap.field(a, "height"); }) == ErrorCode::UnknownField);
  CHECK(code_of([&] { heap.get(b); }) == ErrorCode::DanglingRef);
  CHECK(as_text(heap.field(a, "name").primitive()) == "a");
}

TEST_CASE("move and visit transitions") {
  TypeRegistry types;
  types.register_type(klass("Box", {{"n", "int"}}));
  Heap heap(NodeId{1}, types);
  auto a = heap.allocate_default("Box");
  ObjRef far{NodeId{2}, ObjectId{9}, "Box"};
  heap.begin_visit(a, far, CallId{1});
  CHECK(code_of([&] { heap.mark_moved(a, far); }) == ErrorCode::IllegalMoveTransition);
  heap.end_visit(a);
  heap.mark_moved(a, far);
  CHECK(code_of([&] { heap.set_field(a, "n", Value::of_int(1)); }) == ErrorCode::MovedObject);
  ObjRef farther{NodeId{3}, ObjectId{4}, "Box"};
  heap.retarget(a, farther);
  CHECK(heap.get(a).move.location->node == NodeId{3});
}

TEST_CASE("closure size") {
  TypeRegistry types;
  types.register_type(klass("Leaf", {{"v", "long"}}));
  types.register_type(klass("Blob", {{"data", "byte[]"}}));
  types.register_type(klass("Pair", {{"l", "Blob"}, {"r", "Blob"}, {"tag", "int"}}));
  Heap heap(NodeId{1}, types);
  auto leaf = heap.allocate("Leaf", {{"v", Value::of_long(5)}});
  CHECK(closure_size(heap, Value(leaf)) == 8);

  auto blob = heap.allocate("Blob", {{"data", Value::byte_array(100)}});
  auto pair = heap.allocate("Pair", {{"l", Value(blob)}, {"r", Value(blob)}, {"tag", Value::of_int(0)}});
  CHECK(closure_size(heap, Value(pair)) == 104);
}

TEST_CASE("closure size of random graphs matches a visited-set walk") {
  std::mt19937 rng(5);
  for (int round = 0; round < 300; ++round) {
    TypeRegistry types;
    oracle::register_graph_types(types);
    Heap heap(NodeId{1}, types);
    auto root = oracle::random_graph(rng, heap, 20);
    REQUIRE(closure_size(heap, Value(root)) == oracle::closure_bytes(heap, Value(root)));
  }
}

TEST_CASE("type descriptions round-trip") {
  auto d = klass("x.Y", {{"n", "int"}}, {m("get", {{"k", "string"}}, "int")}, {"x.Base"});
  CHECK(parse_type_description(describe_type(d)) == d);
  CHECK(package_of("a.b.C") == "a.b");
  CHECK(package_of("C").empty());
  CHECK(package_of("a.b.C[]") == "a.b");
}
