#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pfm {

enum class TypeKind { Concrete, Interface, Primitive, Array };

std::string_view to_string(TypeKind kind);

struct FieldDecl {
  std::string name;
  std::string type;
  bool operator==(const FieldDecl&) const = default;
};

struct ParamDecl {
  std::string name;
  std::string type;
  bool operator==(const ParamDecl&) const = default;
};

struct MethodDecl {
  std::string name;
  std::vector<ParamDecl> params;
  std::string return_type = "void";
  bool operator==(const MethodDecl&) const = default;
};

/// A named type. Field order is the canonical encoding order.
struct TypeDescriptor {
  std::string name;
  TypeKind kind = TypeKind::Concrete;
  std::string element_type;  // arrays only
  std::vector<FieldDecl> fields;
  std::vector<MethodDecl> methods;
  std::vector<std::string> supertypes;

  bool operator==(const TypeDescriptor&) const = default;

  const FieldDecl* find_field(std::string_view field) const;
  std::optional<std::size_t> field_index(std::string_view field) const;
};

/// Package part of a dotted type name, or empty when there is none.
std::string package_of(std::string_view type_name);

/// "T[]" for element type T.
std::string array_of(std::string_view element_type);
bool is_array_name(std::string_view type_name);
std::string_view array_element(std::string_view array_name);

/// Fixed payload width of a primitive type, nullopt for variable width
/// ("string", "Class") or non-primitives.
std::optional<std::size_t> primitive_width(std::string_view type_name);

/// Reserved metatype whose payload is a type name.
inline constexpr std::string_view kClassType = "Class";

/// Per-node closed world of types with a nominal subtype relation and a
/// structural compatibility check over method shapes.
class TypeRegistry {
 public:
  /// Starts with the built-in primitives (boolean, byte, char, short, int,
  /// long, float, double, string, void, Class).
  TypeRegistry();

  void register_type(TypeDescriptor descriptor);

  /// Array names resolve whenever their element type resolves.
  const TypeDescriptor* find(std::string_view name) const;
  const TypeDescriptor& get(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  /// Reflexive-transitive closure of declared supertypes. Arrays are covariant.
  bool is_subtype(std::string_view sub, std::string_view super) const;

  /// Every method of `view` (declared or inherited) has a counterpart in
  /// `impl` with equal name and arity, contravariant parameters and a
  /// covariant result. Throws UnknownType when either name is unresolved.
  bool structurally_compatible(std::string_view impl, std::string_view view) const;

  /// Nominal subtype or structural compatibility; unknown names conform
  /// only to themselves.
  bool conforms(std::string_view value_type, std::string_view declared) const;

  /// Declared methods first, then inherited ones not overridden by name and arity.
  std::vector<MethodDecl> all_methods(std::string_view type_name) const;

  /// Registered names in lexicographic order (synthesized arrays excluded).
  std::vector<std::string> names() const;

 private:
  struct Assumption {
    std::string impl;
    std::string view;
  };

  bool compatible(std::string_view impl, std::string_view view, std::vector<Assumption>& assumed) const;
  bool methods_compatible(const TypeDescriptor& impl, const TypeDescriptor& view,
                          std::vector<Assumption>& assumed) const;
  bool reaches(std::string_view from, std::string_view target) const;

  std::map<std::string, TypeDescriptor, std::less<>> types_;
  mutable std::map<std::string, TypeDescriptor, std::less<>> arrays_;
};

/// Canonical text for a descriptor; used as the "class bytes" payload.
std::string describe_type(const TypeDescriptor& descriptor);
TypeDescriptor parse_type_description(std::string_view text);

}  // namespace pfm
