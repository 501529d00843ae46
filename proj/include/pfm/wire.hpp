#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace pfm {

struct WireValue;

using WireFields = std::vector<std::pair<std::string, WireValue>>;

namespace wire {

struct Null {
  bool operator==(const Null&) const = default;
};

struct Prim {
  std::string type;
  std::vector<std::uint8_t> payload;
  bool operator==(const Prim&) const = default;
};

struct Object {
  std::string type;
  std::uint32_t tag = 0;
  WireFields fields;
  bool operator==(const Object&) const;
};

struct BackRef {
  std::uint32_t tag = 0;
  bool operator==(const BackRef&) const = default;
};

struct RemoteRef {
  std::uint32_t node = 0;
  std::uint64_t object = 0;
  std::string view_type;
  WireFields cached_fields;
  WireFields cached_methods;
  bool operator==(const RemoteRef&) const;
};

struct Array {
  std::string element_type;
  std::vector<WireValue> elements;
  bool operator==(const Array&) const;
};

struct ArrayB64 {
  std::string element_type;
  std::string text;
  bool operator==(const ArrayB64&) const = default;
};

struct ClassRef {
  std::string name;
  std::optional<std::string> class_bytes;  // base64 of the descriptor text
  bool operator==(const ClassRef&) const = default;
};

struct Moved {
  std::uint32_t node = 0;
  std::uint64_t object = 0;
  bool operator==(const Moved&) const = default;
};

}  // namespace wire

struct WireValue {
  using Variant = std::variant<wire::Null, wire::Prim, wire::Object, wire::BackRef, wire::RemoteRef, wire::Array,
                               wire::ArrayB64, wire::ClassRef, wire::Moved>;
  Variant v;

  template <class T>
  bool is() const {
    return std::holds_alternative<T>(v);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(v);
  }
  template <class T>
  T& as() {
    return std::get<T>(v);
  }

  bool operator==(const WireValue&) const = default;
};

/// Deterministic text form: one parenthesized line, names quoted, binary
/// payloads in base64.
std::string canonical_bytes(const WireValue& w);

/// Inverse of canonical_bytes. Throws MalformedWire.
WireValue parse_wire(std::string_view text);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::string base64_encode(std::string_view bytes);
/// Throws MalformedWire on invalid input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace pfm
