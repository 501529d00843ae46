#include "pfm/wire.hpp"

#include "pfm/error.hpp"
#include "pfm/sexpr.hpp"

#include <sodium.h>

#include <charconv>

namespace pfm {

namespace wire {
bool Object::operator==(const Object& o) const { return type == o.type && tag == o.tag && fields == o.fields; }
bool RemoteRef::operator==(const RemoteRef& o) const {
  return node == o.node && object == o.object && view_type == o.view_type && cached_fields == o.cached_fields &&
         cached_methods == o.cached_methods;
}
bool Array::operator==(const Array& o) const { return element_type == o.element_type && elements == o.elements; }
}  // namespace wire

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

std::string base64_encode(std::string_view bytes) {
  return base64_encode(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    fail(ErrorCode::MalformedWire, "invalid base64 text");
  out.resize(len);
  return out;
}

namespace {

SExpr sym(std::string s) { return SExpr::symbol(std::move(s)); }
SExpr str(std::string s) { return SExpr::string(std::move(s)); }
template <class N>
SExpr num(N n) {
  return sym(std::to_string(n));
}

SExpr to_sexpr(const WireValue& w);

SExpr fields_sexpr(std::string head, const WireFields& fields) {
  SExpr out = SExpr::list({sym(std::move(head))});
  for (const auto& [name, value] : fields) out.items.push_back(SExpr::list({str(name), to_sexpr(value)}));
  return out;
}

SExpr to_sexpr(const WireValue& w) {
  struct Visitor {
    SExpr operator()(const wire::Null&) const { return SExpr::list({sym("null")}); }
    SExpr operator()(const wire::Prim& p) const {
      return SExpr::list({sym("prim"), str(p.type), str(base64_encode(p.payload))});
    }
    SExpr operator()(const wire::Object& o) const {
      SExpr out = SExpr::list({sym("obj"), str(o.type), num(o.tag)});
      for (const auto& [name, value] : o.fields) out.items.push_back(SExpr::list({str(name), to_sexpr(value)}));
      return out;
    }
    SExpr operator()(const wire::BackRef& b) const { return SExpr::list({sym("backref"), num(b.tag)}); }
    SExpr operator()(const wire::RemoteRef& r) const {
      return SExpr::list({sym("remote"), num(r.node), num(r.object), str(r.view_type),
                          fields_sexpr("fields", r.cached_fields), fields_sexpr("methods", r.cached_methods)});
    }
    SExpr operator()(const wire::Array& a) const {
      SExpr out = SExpr::list({sym("array"), str(a.element_type)});
      for (const auto& e : a.elements) out.items.push_back(to_sexpr(e));
      return out;
    }
    SExpr operator()(const wire::ArrayB64& a) const {
      return SExpr::list({sym("array64"), str(a.element_type), str(a.text)});
    }
    SExpr operator()(const wire::ClassRef& c) const {
      SExpr out = SExpr::list({sym("class"), str(c.name)});
      if (c.class_bytes) out.items.push_back(str(*c.class_bytes));
      return out;
    }
    SExpr operator()(const wire::Moved& m) const { return SExpr::list({sym("moved"), num(m.node), num(m.object)}); }
  };
  return std::visit(Visitor{}, w.v);
}

[[noreturn]] void malformed(const std::string& what) { fail(ErrorCode::MalformedWire, what); }

const std::string& text_of(const SExpr& e, SExpr::Kind kind, const char* what) {
  if (e.kind != kind) malformed(std::string("expected ") + what);
  return e.text;
}

template <class N>
N number_of(const SExpr& e) {
  const auto& t = text_of(e, SExpr::Kind::Symbol, "number");
  N n{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
  if (ec != std::errc{} || ptr != t.data() + t.size()) malformed("bad number " + t);
  return n;
}

WireValue from_sexpr(const SExpr& e);

WireFields fields_from(const SExpr& e, std::string_view head) {
  if (!e.is_list() || e.items.empty() || e.items[0].text != head) malformed("expected (" + std::string(head) + " ...)");
  WireFields out;
  for (std::size_t i = 1; i < e.items.size(); ++i) {
    const auto& f = e.items[i];
    if (!f.is_list() || f.items.size() != 2) malformed("bad field entry");
    out.emplace_back(text_of(f.items[0], SExpr::Kind::String, "field name"), from_sexpr(f.items[1]));
  }
  return out;
}

WireValue from_sexpr(const SExpr& e) {
  if (!e.is_list() || e.items.empty() || !e.items[0].is_symbol()) malformed("expected a tagged list");
  const auto& head = e.items[0].text;
  const auto& it = e.items;
  auto arity = [&](std::size_t n) {
    if (it.size() != n) malformed(head + " takes " + std::to_string(n - 1) + " items");
  };
  if (head == "null") {
    arity(1);
    return {wire::Null{}};
  }
  if (head == "prim") {
    arity(3);
    return {wire::Prim{text_of(it[1], SExpr::Kind::String, "type"),
                       base64_decode(text_of(it[2], SExpr::Kind::String, "payload"))}};
  }
  if (head == "obj") {
    if (it.size() < 3) malformed("obj needs a type and a tag");
    wire::Object o{text_of(it[1], SExpr::Kind::String, "type"), number_of<std::uint32_t>(it[2]), {}};
    for (std::size_t i = 3; i < it.size(); ++i) {
      if (!it[i].is_list() || it[i].items.size() != 2) malformed("bad obj field");
      o.fields.emplace_back(text_of(it[i].items[0], SExpr::Kind::String, "field name"), from_sexpr(it[i].items[1]));
    }
    return {std::move(o)};
  }
  if (head == "backref") {
    arity(2);
    return {wire::BackRef{number_of<std::uint32_t>(it[1])}};
  }
  if (head == "remote") {
    arity(6);
    return {wire::RemoteRef{number_of<std::uint32_t>(it[1]), number_of<std::uint64_t>(it[2]),
                            text_of(it[3], SExpr::Kind::String, "view type"), fields_from(it[4], "fields"),
                            fields_from(it[5], "methods")}};
  }
  if (head == "array") {
    if (it.size() < 2) malformed("array needs an element type");
    wire::Array a{text_of(it[1], SExpr::Kind::String, "element type"), {}};
    for (std::size_t i = 2; i < it.size(); ++i) a.elements.push_back(from_sexpr(it[i]));
    return {std::move(a)};
  }
  if (head == "array64") {
    arity(3);
    return {wire::ArrayB64{text_of(it[1], SExpr::Kind::String, "element type"),
                           text_of(it[2], SExpr::Kind::String, "base64 text")}};
  }
  if (head == "class") {
    if (it.size() != 2 && it.size() != 3) malformed("class takes a name and optional bytes");
    wire::ClassRef c{text_of(it[1], SExpr::Kind::String, "class name"), std::nullopt};
    if (it.size() == 3) c.class_bytes = text_of(it[2], SExpr::Kind::String, "class bytes");
    return {std::move(c)};
  }
  if (head == "moved") {
    arity(3);
    return {wire::Moved{number_of<std::uint32_t>(it[1]), number_of<std::uint64_t>(it[2])}};
  }
  malformed("unknown wire node " + head);
}

}  // namespace

std::string canonical_bytes(const WireValue& w) { return to_text(to_sexpr(w)); }

WireValue parse_wire(std::string_view text) { return from_sexpr(parse_sexpr(text)); }

}  // namespace pfm
