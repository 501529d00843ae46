#include "pfm/heap.hpp"

#include "pfm/error.hpp"

#include <set>
#include <sstream>

namespace pfm {

bool ArrayValue::operator==(const ArrayValue& o) const {
  return element_type == o.element_type && elements == o.elements;
}

namespace {

Primitive little_endian(std::string type, std::int64_t v, std::size_t width) {
  Primitive p{std::move(type), {}};
  auto u = static_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < width; ++i) p.payload.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
  return p;
}

}  // namespace

Value Value::of_int(std::int32_t v) { return little_endian("int", v, 4); }
Value Value::of_long(std::int64_t v) { return little_endian("long", v, 8); }
Value Value::of_bool(bool v) { return little_endian("boolean", v ? 1 : 0, 1); }
Value Value::of_byte(std::uint8_t v) { return little_endian("byte", v, 1); }

Value Value::of_string(std::string_view v) { return Primitive{"string", {v.begin(), v.end()}}; }

Value Value::of_class(std::string_view type_name) {
  return Primitive{std::string(kClassType), {type_name.begin(), type_name.end()}};
}

Value Value::of_integral(std::string_view type, std::int64_t v) {
  auto width = primitive_width(type);
  if (!width) fail(ErrorCode::FieldTypeMismatch, std::string(type) + " is not a fixed-width primitive");
  return little_endian(std::string(type), v, *width);
}

Value Value::byte_array(std::size_t length) {
  ArrayValue a{"byte", {}};
  a.elements.reserve(length);
  for (std::size_t i = 0; i < length; ++i) a.elements.push_back(of_byte(static_cast<std::uint8_t>(i % 251)));
  return a;
}

std::string Value::type_name() const {
  if (is_primitive()) return primitive().type;
  if (is_object()) return object().type;
  if (is_array()) return array_of(array().element_type);
  return {};
}

std::int64_t as_integer(const Primitive& p) {
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < p.payload.size() && i < 8; ++i) u |= std::uint64_t{p.payload[i]} << (8 * i);
  // sign-extend narrower payloads
  if (!p.payload.empty() && p.payload.size() < 8 && (p.payload.back() & 0x80))
    u |= ~std::uint64_t{0} << (8 * p.payload.size());
  return static_cast<std::int64_t>(u);
}

std::string as_text(const Primitive& p) { return std::string(p.payload.begin(), p.payload.end()); }

std::string to_literal(const Value& v) {
  if (v.is_null()) return "null";
  if (v.is_object()) return "@" + std::to_string(v.object().node.value) + ":" + std::to_string(v.object().id.value);
  if (v.is_array()) {
    std::string out = "[";
    const auto& a = v.array();
    for (std::size_t i = 0; i < a.elements.size(); ++i) {
      if (i) out += ",";
      out += to_literal(a.elements[i]);
    }
    return out + "]";
  }
  const auto& p = v.primitive();
  if (p.type == "string") return "\"" + as_text(p) + "\"";
  if (p.type == kClassType) return "Class(" + as_text(p) + ")";
  if (p.type == "boolean") return as_integer(p) ? "true" : "false";
  if (p.type == "float" || p.type == "double") {
    std::ostringstream os;
    for (auto b : p.payload) os << std::hex << int(b);
    return p.type + ":0x" + os.str();
  }
  return std::to_string(as_integer(p));
}

const Value* HeapObject::find_field(std::string_view name) const {
  for (const auto& [n, v] : fields)
    if (n == name) return &v;
  return nullptr;
}

bool Heap::conforms(const Value& v, std::string_view declared) const {
  if (v.is_null()) {
    const auto* d = types_->find(declared);
    return !d || d->kind != TypeKind::Primitive;
  }
  if (v.is_primitive()) return v.primitive().type == declared;
  if (v.is_array()) {
    if (!is_array_name(declared)) return false;
    auto element = array_element(declared);
    if (!types_->conforms(v.array().element_type, element)) return false;
    for (const auto& e : v.array().elements)
      if (!conforms(e, element)) return false;
    return true;
  }
  const auto& ref = v.object();
  if (ref.node != node_) return false;
  return types_->conforms(ref.type, declared);
}

Value Heap::default_value(std::string_view declared) const {
  if (auto width = primitive_width(declared)) return Primitive{std::string(declared), std::vector<std::uint8_t>(*width, 0)};
  if (declared == "string" || declared == kClassType) return Primitive{std::string(declared), {}};
  if (is_array_name(declared)) return ArrayValue{std::string(array_element(declared)), {}};
  return Value::null();
}

ObjRef Heap::insert(HeapObject obj) {
  ObjectId id{next_id_++};
  std::string type = obj.type;
  objects_.emplace(id, std::move(obj));
  return ObjRef{node_, id, std::move(type)};
}

ObjRef Heap::allocate(std::string_view type, const std::map<std::string, Value, std::less<>>& fields) {
  const auto& d = types_->get(type);
  if (d.kind != TypeKind::Concrete)
    fail(ErrorCode::AbstractInstantiation, std::string(type) + " is " + std::string(to_string(d.kind)));
  for (const auto& [name, value] : fields)
    if (!d.find_field(name)) fail(ErrorCode::UnknownField, std::string(type) + "." + name);
  HeapObject obj{d.name, {}, {}, std::nullopt, {}};
  for (const auto& f : d.fields) {
    auto it = fields.find(f.name);
    if (it == fields.end()) fail(ErrorCode::MissingField, d.name + "." + f.name);
    if (!conforms(it->second, f.type))
      fail(ErrorCode::FieldTypeMismatch, d.name + "." + f.name + " expects " + f.type + ", got " + it->second.type_name());
    obj.fields.emplace_back(f.name, it->second);
  }
  return insert(std::move(obj));
}

ObjRef Heap::allocate_default(std::string_view type) {
  const auto& d = types_->get(type);
  if (d.kind != TypeKind::Concrete)
    fail(ErrorCode::AbstractInstantiation, std::string(type) + " is " + std::string(to_string(d.kind)));
  HeapObject obj{d.name, {}, {}, std::nullopt, {}};
  for (const auto& f : d.fields) obj.fields.emplace_back(f.name, default_value(f.type));
  return insert(std::move(obj));
}

ObjRef Heap::allocate_proxy(ProxyData data) {
  HeapObject obj{data.view_type, {}, {}, std::move(data), {}};
  return insert(std::move(obj));
}

bool Heap::contains(const ObjRef& ref) const { return ref.node == node_ && objects_.contains(ref.id); }

const HeapObject& Heap::get(const ObjRef& ref) const {
  if (ref.node != node_) fail(ErrorCode::DanglingRef, "reference into node " + std::to_string(ref.node.value));
  auto it = objects_.find(ref.id);
  if (it == objects_.end()) fail(ErrorCode::DanglingRef, "object " + std::to_string(ref.id.value));
  return it->second;
}

HeapObject& Heap::mutable_get(const ObjRef& ref) { return const_cast<HeapObject&>(get(ref)); }

ObjRef Heap::ref_of(ObjectId id) const {
  ObjRef probe{node_, id, {}};
  return ObjRef{node_, id, get(probe).type};
}

const Value& Heap::field(const ObjRef& ref, std::string_view name) const {
  const auto& obj = get(ref);
  if (const auto* v = obj.find_field(name)) return *v;
  if (obj.move.residency != Residency::Resident)
    fail(ErrorCode::MovedObject, obj.type + " has no resident state here");
  fail(ErrorCode::UnknownField, obj.type + "." + std::string(name));
}

void Heap::set_field(const ObjRef& ref, std::string_view name, Value value) {
  auto& obj = mutable_get(ref);
  if (obj.move.residency == Residency::MovedTo) fail(ErrorCode::MovedObject, obj.type + " has moved away");
  const auto& d = types_->get(obj.type);
  const auto* decl = d.find_field(name);
  if (!decl) fail(ErrorCode::UnknownField, obj.type + "." + std::string(name));
  if (!conforms(value, decl->type))
    fail(ErrorCode::FieldTypeMismatch, obj.type + "." + std::string(name) + " expects " + decl->type);
  for (auto& [n, v] : obj.fields)
    if (n == name) v = std::move(value);
}

void Heap::erase(const ObjRef& ref) {
  get(ref);
  objects_.erase(ref.id);
}

void Heap::mark_moved(const ObjRef& ref, const ObjRef& to) {
  auto& obj = mutable_get(ref);
  if (obj.move.residency != Residency::Resident)
    fail(ErrorCode::IllegalMoveTransition, "only resident objects can move");
  obj.move = MoveState{Residency::MovedTo, to, {}};
  obj.fields.clear();
}

void Heap::retarget(const ObjRef& ref, const ObjRef& to) {
  auto& obj = mutable_get(ref);
  if (obj.move.residency != Residency::MovedTo) fail(ErrorCode::IllegalMoveTransition, "retarget needs a moved object");
  obj.move.location = to;
}

void Heap::add_former_home(const ObjRef& ref, const ObjRef& home) { mutable_get(ref).former_homes.push_back(home); }

void Heap::begin_visit(const ObjRef& ref, const ObjRef& at, CallId token) {
  auto& obj = mutable_get(ref);
  if (obj.move.residency != Residency::Resident)
    fail(ErrorCode::IllegalMoveTransition, "only resident objects can visit");
  obj.move = MoveState{Residency::VisitingAt, at, token};
}

void Heap::end_visit(const ObjRef& ref) {
  auto& obj = mutable_get(ref);
  if (obj.move.residency != Residency::VisitingAt) fail(ErrorCode::IllegalMoveTransition, "object is not visiting");
  obj.move = MoveState{};
}

void Heap::invalidate_visitor(const ObjRef& ref, const ObjRef& home) {
  auto& obj = mutable_get(ref);
  if (obj.move.residency != Residency::Resident) fail(ErrorCode::IllegalMoveTransition, "visitor copy is not resident");
  obj.move = MoveState{Residency::MovedTo, home, {}};
  obj.fields.clear();
}

std::vector<ObjectId> Heap::ids() const {
  std::vector<ObjectId> out;
  out.reserve(objects_.size());
  for (const auto& [id, obj] : objects_) out.push_back(id);
  return out;
}

std::size_t closure_size(const Heap& heap, const Value& root) {
  std::size_t total = 0;
  std::set<ObjectId> visited;
  std::vector<const Value*> stack{&root};
  while (!stack.empty()) {
    const Value* v = stack.back();
    stack.pop_back();
    if (v->is_primitive()) {
      total += v->primitive().payload.size();
    } else if (v->is_array()) {
      for (const auto& e : v->array().elements) stack.push_back(&e);
    } else if (v->is_object()) {
      const auto& obj = heap.get(v->object());
      if (!visited.insert(v->object().id).second) continue;
      if (obj.proxy) continue;
      for (const auto& [name, fv] : obj.fields) stack.push_back(&fv);
    }
  }
  return total;
}

}  // namespace pfm
