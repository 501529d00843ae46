#include "pfm/types.hpp"

#include "pfm/error.hpp"
#include "pfm/sexpr.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <utility>

namespace pfm {

namespace {

constexpr std::array<std::pair<std::string_view, std::size_t>, 9> kFixedWidth = {{
    {"boolean", 1},
    {"byte", 1},
    {"char", 2},
    {"short", 2},
    {"int", 4},
    {"long", 8},
    {"float", 4},
    {"double", 8},
    {"void", 0},
}};

constexpr std::array<std::string_view, 2> kVariableWidth = {"string", kClassType};

constexpr std::string_view kArraySuffix = "[]";

}  // namespace

std::string_view to_string(TypeKind kind) {
  switch (kind) {
    case TypeKind::Concrete: return "concrete";
    case TypeKind::Interface: return "interface";
    case TypeKind::Primitive: return "primitive";
    case TypeKind::Array: return "array";
  }
  return "?";
}

const FieldDecl* TypeDescriptor::find_field(std::string_view field) const {
  for (const auto& f : fields)
    if (f.name == field) return &f;
  return nullptr;
}

std::optional<std::size_t> TypeDescriptor::field_index(std::string_view field) const {
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i].name == field) return i;
  return std::nullopt;
}

std::string package_of(std::string_view type_name) {
  if (is_array_name(type_name)) return package_of(array_element(type_name));
  auto dot = type_name.rfind('.');
  if (dot == std::string_view::npos) return {};
  return std::string(type_name.substr(0, dot));
}

std::string array_of(std::string_view element_type) { return std::string(element_type) + std::string(kArraySuffix); }

bool is_array_name(std::string_view type_name) {
  return type_name.size() > kArraySuffix.size() && type_name.ends_with(kArraySuffix);
}

std::string_view array_element(std::string_view array_name) {
  return array_name.substr(0, array_name.size() - kArraySuffix.size());
}

std::optional<std::size_t> primitive_width(std::string_view type_name) {
  for (const auto& [name, width] : kFixedWidth)
    if (name == type_name) return width;
  return std::nullopt;
}

TypeRegistry::TypeRegistry() {
  for (const auto& [name, width] : kFixedWidth) {
    (void)width;
    types_.emplace(std::string(name), TypeDescriptor{std::string(name), TypeKind::Primitive, {}, {}, {}, {}});
  }
  for (auto name : kVariableWidth)
    types_.emplace(std::string(name), TypeDescriptor{std::string(name), TypeKind::Primitive, {}, {}, {}, {}});
}

void TypeRegistry::register_type(TypeDescriptor d) {
  if (d.name.empty()) fail(ErrorCode::UnknownType, "type name must not be empty");
  if (is_array_name(d.name) || d.kind == TypeKind::Array)
    fail(ErrorCode::DuplicateType, "array types are derived from their element type: " + d.name);
  if (types_.contains(d.name)) fail(ErrorCode::DuplicateType, d.name);
  if (d.kind == TypeKind::Primitive && (!d.fields.empty() || !d.methods.empty()))
    fail(ErrorCode::FieldTypeMismatch, "primitive type " + d.name + " cannot declare fields or methods");

  std::set<std::string_view> seen;
  for (const auto& f : d.fields)
    if (!seen.insert(f.name).second) fail(ErrorCode::DuplicateType, "field " + f.name + " declared twice in " + d.name);

  for (const auto& s : d.supertypes)
    if (s == d.name || reaches(s, d.name)) fail(ErrorCode::CyclicSupertype, d.name + " through " + s);

  std::string key = d.name;
  types_.emplace(std::move(key), std::move(d));
}

const TypeDescriptor* TypeRegistry::find(std::string_view name) const {
  if (auto it = types_.find(name); it != types_.end()) return &it->second;
  if (!is_array_name(name)) return nullptr;
  if (auto it = arrays_.find(name); it != arrays_.end()) return &it->second;
  if (!find(array_element(name))) return nullptr;
  TypeDescriptor d{std::string(name), TypeKind::Array, std::string(array_element(name)), {}, {}, {}};
  return &arrays_.emplace(std::string(name), std::move(d)).first->second;
}

const TypeDescriptor& TypeRegistry::get(std::string_view name) const {
  if (const auto* d = find(name)) return *d;
  fail(ErrorCode::UnknownType, std::string(name));
}

bool TypeRegistry::reaches(std::string_view from, std::string_view target) const {
  std::vector<std::string_view> stack{from};
  std::set<std::string_view> visited;
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    if (cur == target) return true;
    if (!visited.insert(cur).second) continue;
    auto it = types_.find(cur);
    if (it == types_.end()) continue;
    for (const auto& s : it->second.supertypes) stack.push_back(s);
  }
  return false;
}

bool TypeRegistry::is_subtype(std::string_view sub, std::string_view super) const {
  if (sub == super) return true;
  if (is_array_name(sub) && is_array_name(super)) return is_subtype(array_element(sub), array_element(super));
  return reaches(sub, super);
}

std::vector<MethodDecl> TypeRegistry::all_methods(std::string_view type_name) const {
  std::vector<MethodDecl> out;
  std::vector<std::string_view> queue{type_name};
  std::set<std::string_view> visited;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    if (!visited.insert(queue[i]).second) continue;
    const auto* d = find(queue[i]);
    if (!d) continue;
    for (const auto& m : d->methods) {
      bool hidden = std::any_of(out.begin(), out.end(), [&](const MethodDecl& o) {
        return o.name == m.name && o.params.size() == m.params.size();
      });
      if (!hidden) out.push_back(m);
    }
    for (const auto& s : d->supertypes) queue.push_back(s);
  }
  return out;
}

bool TypeRegistry::structurally_compatible(std::string_view impl, std::string_view view) const {
  get(impl);
  get(view);
  std::vector<Assumption> assumed;
  return compatible(impl, view, assumed);
}

bool TypeRegistry::conforms(std::string_view value_type, std::string_view declared) const {
  if (value_type == declared) return true;
  if (!find(value_type) || !find(declared)) return false;
  std::vector<Assumption> assumed;
  return compatible(value_type, declared, assumed);
}

bool TypeRegistry::compatible(std::string_view impl, std::string_view view, std::vector<Assumption>& assumed) const {
  if (impl == view || is_subtype(impl, view)) return true;
  const auto* ti = find(impl);
  const auto* tv = find(view);
  if (!ti || !tv) return false;
  if (ti->kind == TypeKind::Array && tv->kind == TypeKind::Array)
    return compatible(ti->element_type, tv->element_type, assumed);
  auto is_value_kind = [](TypeKind k) { return k == TypeKind::Primitive || k == TypeKind::Array; };
  if (is_value_kind(ti->kind) || is_value_kind(tv->kind)) return false;

  for (const auto& a : assumed)
    if (a.impl == impl && a.view == view) return true;

  // Assumptions made while checking a pair that turns out false are dropped.
  std::size_t mark = assumed.size();
  assumed.push_back({std::string(impl), std::string(view)});
  bool ok = methods_compatible(*ti, *tv, assumed);
  if (!ok) assumed.resize(mark);
  return ok;
}

bool TypeRegistry::methods_compatible(const TypeDescriptor& impl, const TypeDescriptor& view,
                                      std::vector<Assumption>& assumed) const {
  auto impl_methods = all_methods(impl.name);
  for (const auto& vm : all_methods(view.name)) {
    bool found = false;
    for (const auto& im : impl_methods) {
      if (im.name != vm.name || im.params.size() != vm.params.size()) continue;
      std::size_t mark = assumed.size();
      bool ok = true;
      for (std::size_t p = 0; ok && p < vm.params.size(); ++p)
        ok = compatible(vm.params[p].type, im.params[p].type, assumed);
      ok = ok && compatible(im.return_type, vm.return_type, assumed);
      if (ok) {
        found = true;
        break;
      }
      assumed.resize(mark);
    }
    if (!found) return false;
  }
  return true;
}

std::vector<std::string> TypeRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, d] : types_) out.push_back(name);
  return out;
}

std::string describe_type(const TypeDescriptor& d) {
  SExpr supers = SExpr::list({SExpr::symbol("supers")});
  for (const auto& s : d.supertypes) supers.items.push_back(SExpr::string(s));
  SExpr fields = SExpr::list({SExpr::symbol("fields")});
  for (const auto& f : d.fields) fields.items.push_back(SExpr::list({SExpr::string(f.name), SExpr::string(f.type)}));
  SExpr methods = SExpr::list({SExpr::symbol("methods")});
  for (const auto& m : d.methods) {
    SExpr me = SExpr::list({SExpr::string(m.name), SExpr::string(m.return_type)});
    for (const auto& p : m.params) me.items.push_back(SExpr::list({SExpr::string(p.name), SExpr::string(p.type)}));
    methods.items.push_back(std::move(me));
  }
  return to_text(SExpr::list({SExpr::symbol("type"), SExpr::string(d.name), SExpr::symbol(std::string(to_string(d.kind))),
                              std::move(supers), std::move(fields), std::move(methods)}));
}

TypeDescriptor parse_type_description(std::string_view text) {
  auto bad = [&](const char* what) -> void { fail(ErrorCode::MalformedWire, std::string("type description: ") + what); };
  SExpr e = parse_sexpr(text);
  if (!e.is_list() || e.items.size() != 6 || !e.items[0].is_symbol() || e.items[0].text != "type" ||
      !e.items[1].is_string() || !e.items[2].is_symbol())
    bad("bad header");
  TypeDescriptor d;
  d.name = e.items[1].text;
  const std::string& kind = e.items[2].text;
  if (kind == "concrete") d.kind = TypeKind::Concrete;
  else if (kind == "interface") d.kind = TypeKind::Interface;
  else bad("only concrete and interface types can be transported");

  auto section = [&](const SExpr& s, std::string_view tag) -> const std::vector<SExpr>& {
    if (!s.is_list() || s.items.empty() || s.items[0].text != tag) bad("bad section");
    return s.items;
  };
  const auto& supers = section(e.items[3], "supers");
  for (std::size_t i = 1; i < supers.size(); ++i) d.supertypes.push_back(supers[i].text);
  const auto& fields = section(e.items[4], "fields");
  for (std::size_t i = 1; i < fields.size(); ++i) {
    if (!fields[i].is_list() || fields[i].items.size() != 2) bad("bad field");
    d.fields.push_back({fields[i].items[0].text, fields[i].items[1].text});
  }
  const auto& methods = section(e.items[5], "methods");
  for (std::size_t i = 1; i < methods.size(); ++i) {
    const auto& m = methods[i];
    if (!m.is_list() || m.items.size() < 2) bad("bad method");
    MethodDecl md{m.items[0].text, {}, m.items[1].text};
    for (std::size_t p = 2; p < m.items.size(); ++p) {
      if (!m.items[p].is_list() || m.items[p].items.size() != 2) bad("bad parameter");
      md.params.push_back({m.items[p].items[0].text, m.items[p].items[1].text});
    }
    d.methods.push_back(std::move(md));
  }
  return d;
}

}  // namespace pfm
