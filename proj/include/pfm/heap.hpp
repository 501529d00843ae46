#pragma once

#include "pfm/ids.hpp"
#include "pfm/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace pfm {

/// Reference to a heap object. Equality is identity: (node, id).
struct ObjRef {
  NodeId node;
  ObjectId id;
  std::string type;

  bool operator==(const ObjRef& o) const { return node == o.node && id == o.id; }
};

struct Primitive {
  std::string type;
  std::vector<std::uint8_t> payload;
  bool operator==(const Primitive&) const = default;
};

class Value;

struct ArrayValue {
  std::string element_type;
  std::vector<Value> elements;
  bool operator==(const ArrayValue&) const;
};

class Value {
 public:
  using Storage = std::variant<std::monostate, Primitive, ObjRef, ArrayValue>;

  Value() = default;
  Value(Primitive p) : v_(std::move(p)) {}
  Value(ObjRef r) : v_(std::move(r)) {}
  Value(ArrayValue a) : v_(std::move(a)) {}

  static Value null() { return {}; }
  static Value of_int(std::int32_t v);
  static Value of_long(std::int64_t v);
  static Value of_bool(bool v);
  static Value of_byte(std::uint8_t v);
  static Value of_string(std::string_view v);
  static Value of_class(std::string_view type_name);
  /// Fixed-width primitive from a signed integer, truncated little-endian.
  static Value of_integral(std::string_view type, std::int64_t v);
  /// byte[] of `length` elements, element i = i mod 251.
  static Value byte_array(std::size_t length);

  bool is_null() const { return std::holds_alternative<std::monostate>(v_); }
  bool is_primitive() const { return std::holds_alternative<Primitive>(v_); }
  bool is_object() const { return std::holds_alternative<ObjRef>(v_); }
  bool is_array() const { return std::holds_alternative<ArrayValue>(v_); }

  const Primitive& primitive() const { return std::get<Primitive>(v_); }
  const ObjRef& object() const { return std::get<ObjRef>(v_); }
  const ArrayValue& array() const { return std::get<ArrayValue>(v_); }
  ArrayValue& array() { return std::get<ArrayValue>(v_); }

  /// Static type name of the value ("" for null).
  std::string type_name() const;

  const Storage& storage() const { return v_; }

  bool operator==(const Value&) const = default;

 private:
  Storage v_;
};

std::int64_t as_integer(const Primitive& p);
std::string as_text(const Primitive& p);

/// Human-readable literal: 42, "text", Class(a.b.C), @node:id, [..], null.
std::string to_literal(const Value& v);

enum class Residency { Resident, MovedTo, VisitingAt };

struct MoveState {
  Residency residency = Residency::Resident;
  std::optional<ObjRef> location;  // MovedTo / VisitingAt
  CallId token;                    // VisitingAt: the call that must return
};

/// Client-side stand-in for an object living on another node.
struct ProxyData {
  NodeId target_node;
  ObjectId target_id;
  std::string view_type;
  std::vector<std::pair<std::string, Value>> cached_fields;
  std::vector<std::pair<std::string, Value>> cached_methods;
};

struct HeapObject {
  std::string type;
  std::vector<std::pair<std::string, Value>> fields;  // declared order
  MoveState move;
  std::optional<ProxyData> proxy;
  /// Earlier homes of an object that arrived by move; their forwarding
  /// pointers are retargeted whenever this object moves on.
  std::vector<ObjRef> former_homes;

  const Value* find_field(std::string_view name) const;
};

/// Objects of one address space.
class Heap {
 public:
  Heap(NodeId node, const TypeRegistry& types) : node_(node), types_(&types) {}

  NodeId node() const { return node_; }
  const TypeRegistry& types() const { return *types_; }

  /// All declared fields must be supplied and conform to their declared types.
  ObjRef allocate(std::string_view type, const std::map<std::string, Value, std::less<>>& fields);
  /// Zero, empty or null for every declared field.
  ObjRef allocate_default(std::string_view type);
  ObjRef allocate_proxy(ProxyData data);

  bool contains(const ObjRef& ref) const;
  const HeapObject& get(const ObjRef& ref) const;
  ObjRef ref_of(ObjectId id) const;

  const Value& field(const ObjRef& ref, std::string_view name) const;
  void set_field(const ObjRef& ref, std::string_view name, Value value);

  void erase(const ObjRef& ref);

  /// Resident -> MovedTo. A MovedTo object may only be retargeted.
  void mark_moved(const ObjRef& ref, const ObjRef& to);
  void retarget(const ObjRef& ref, const ObjRef& to);
  void add_former_home(const ObjRef& ref, const ObjRef& home);
  /// Resident -> VisitingAt -> Resident.
  void begin_visit(const ObjRef& ref, const ObjRef& at, CallId token);
  void end_visit(const ObjRef& ref);
  /// The visitor copy is invalidated by pointing it back at its origin.
  void invalidate_visitor(const ObjRef& ref, const ObjRef& home);

  std::size_t size() const { return objects_.size(); }
  std::vector<ObjectId> ids() const;

  /// Value conforms to the declared type (nominal or structural for objects).
  bool conforms(const Value& v, std::string_view declared) const;
  Value default_value(std::string_view declared) const;

 private:
  HeapObject& mutable_get(const ObjRef& ref);
  ObjRef insert(HeapObject obj);

  NodeId node_;
  const TypeRegistry* types_;
  std::map<ObjectId, HeapObject> objects_;
  std::uint64_t next_id_ = 1;
};

/// Sum of primitive payload bytes over the closure reachable from `root`,
/// each object counted once. Proxies and moved objects contribute nothing.
std::size_t closure_size(const Heap& heap, const Value& root);

}  // namespace pfm
