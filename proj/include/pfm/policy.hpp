#pragma once

#include "pfm/heap.hpp"
#include "pfm/ids.hpp"
#include "pfm/pattern.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace pfm {

enum class PolicyKind : std::uint8_t { Transmission, Encoding, Placement, Access };

inline constexpr std::array<PolicyKind, 4> kAllPolicyKinds = {PolicyKind::Transmission, PolicyKind::Encoding,
                                                              PolicyKind::Placement, PolicyKind::Access};

std::string_view to_string(PolicyKind kind);
std::optional<PolicyKind> policy_kind_from(std::string_view name);

enum class Direction : std::uint8_t { OutgoingArgument, ReturningResult };

enum class TemporalScope : std::uint8_t { Indefinite, CurrentCall };

std::string_view to_string(TemporalScope scope);
std::optional<TemporalScope> temporal_scope_from(std::string_view name);

// --- reified contexts -------------------------------------------------------

/// One object transmission. `dims` holds the value of every dimension; the
/// remaining members are what a dynamic policy may inspect.
struct TransmissionContext {
  ContextValues dims = empty_context();
  Value current_object;
  Value root_object;
  std::optional<std::string> field_name;
  int depth_from_root = 0;
  CallId call_id;
  Direction direction = Direction::ReturningResult;
  /// Heap of the sending node; lets deciders measure closures.
  const Heap* heap = nullptr;

  const std::string& get(Dimension d) const { return dims[index_of(d)]; }
};

struct NodeCensus {
  NodeId node;
  std::string name;
  std::size_t objects = 0;
};

struct InstantiationContext {
  ContextValues dims = empty_context();
  NodeId requesting_node;
  std::vector<NodeCensus> census;

  const std::string& get(Dimension d) const { return dims[index_of(d)]; }
};

struct AccessContext {
  ContextValues dims = empty_context();
  NodeId requesting_node;
  std::optional<ObjRef> target;

  const std::string& get(Dimension d) const { return dims[index_of(d)]; }
};

// --- dynamic policies -------------------------------------------------------

/// Application-defined policy computed from the actual context.
template <class Policy, class Context>
class Decider {
 public:
  virtual ~Decider() = default;
  virtual Policy decide(const Context& context) const = 0;
  /// Registry name plus argument, e.g. "by_size:500".
  virtual std::string name() const = 0;
};

template <class Policy, class Context>
struct Dynamic {
  std::shared_ptr<const Decider<Policy, Context>> decider;
  bool operator==(const Dynamic& o) const { return decider == o.decider; }
};

// --- transmission -----------------------------------------------------------

struct ByRef {
  bool operator==(const ByRef&) const = default;
};
struct ByVal {
  bool operator==(const ByVal&) const = default;
};
struct ByMove {
  bool operator==(const ByMove&) const = default;
};
struct ByVisit {
  bool operator==(const ByVisit&) const = default;
};

struct ByValueToDepth {
  static constexpr int kFullClosure = -1;
  int depth = kFullClosure;

  bool full_closure() const { return depth == kFullClosure; }
  bool operator==(const ByValueToDepth&) const = default;
};

struct ByReferenceWithCaching {
  std::vector<std::string> fields;
  std::vector<std::string> methods;  // zero-parameter methods only

  bool is_cached_field(std::string_view f) const;
  bool is_cached_method(std::string_view m) const;
  bool operator==(const ByReferenceWithCaching&) const = default;
};

struct TransmissionPolicy;
using TransmissionDecider = Decider<TransmissionPolicy, TransmissionContext>;

struct TransmissionPolicy {
  using Variant = std::variant<ByRef, ByVal, ByMove, ByVisit, ByValueToDepth, ByReferenceWithCaching,
                               Dynamic<TransmissionPolicy, TransmissionContext>>;
  Variant v;

  static TransmissionPolicy by_ref() { return {ByRef{}}; }
  static TransmissionPolicy by_val() { return {ByVal{}}; }
  static TransmissionPolicy by_move() { return {ByMove{}}; }
  static TransmissionPolicy by_visit() { return {ByVisit{}}; }
  static TransmissionPolicy full_closure() { return {ByValueToDepth{}}; }
  /// depth >= 1; throws InvalidPolicy otherwise.
  static TransmissionPolicy to_depth(int depth);
  static TransmissionPolicy caching(std::vector<std::string> fields, std::vector<std::string> methods);
  static TransmissionPolicy dynamic(std::shared_ptr<const TransmissionDecider> d);

  bool is_dynamic() const { return std::holds_alternative<Dynamic<TransmissionPolicy, TransmissionContext>>(v); }
  bool operator==(const TransmissionPolicy&) const = default;
};

// --- encoding ---------------------------------------------------------------

struct ElementWise {
  bool operator==(const ElementWise&) const = default;
};
struct Base64Packed {
  bool operator==(const Base64Packed&) const = default;
};
struct ClassByName {
  bool include_bytes_if_missing = false;
  bool operator==(const ClassByName&) const = default;
};

struct EncodingPolicy;
using EncodingDecider = Decider<EncodingPolicy, TransmissionContext>;

struct TransformThenEncode {
  static constexpr int kMaxNesting = 4;
  std::string transform_id;
  std::shared_ptr<const EncodingPolicy> inner;
  bool operator==(const TransformThenEncode& o) const;
};

struct EncodingPolicy {
  using Variant =
      std::variant<ElementWise, Base64Packed, ClassByName, TransformThenEncode, Dynamic<EncodingPolicy, TransmissionContext>>;
  Variant v;

  static EncodingPolicy element_wise() { return {ElementWise{}}; }
  static EncodingPolicy base64() { return {Base64Packed{}}; }
  static EncodingPolicy class_by_name(bool include_bytes_if_missing) { return {ClassByName{include_bytes_if_missing}}; }
  /// Throws InvalidPolicy when transforms nest deeper than kMaxNesting.
  static EncodingPolicy transform(std::string id, EncodingPolicy inner);
  static EncodingPolicy dynamic(std::shared_ptr<const EncodingDecider> d);

  bool is_dynamic() const { return std::holds_alternative<Dynamic<EncodingPolicy, TransmissionContext>>(v); }
  bool operator==(const EncodingPolicy&) const = default;
};

// --- placement --------------------------------------------------------------

struct CreateLocal {
  bool operator==(const CreateLocal&) const = default;
};
struct CreateAt {
  std::string node;
  bool operator==(const CreateAt&) const = default;
};

struct PlacementPolicy;
using PlacementDecider = Decider<PlacementPolicy, InstantiationContext>;

struct PlacementPolicy {
  using Variant = std::variant<CreateLocal, CreateAt, Dynamic<PlacementPolicy, InstantiationContext>>;
  Variant v;

  static PlacementPolicy create_local() { return {CreateLocal{}}; }
  static PlacementPolicy create_at(std::string node) { return {CreateAt{std::move(node)}}; }
  static PlacementPolicy dynamic(std::shared_ptr<const PlacementDecider> d);

  bool is_dynamic() const { return std::holds_alternative<Dynamic<PlacementPolicy, InstantiationContext>>(v); }
  bool operator==(const PlacementPolicy&) const = default;
};

// --- access -----------------------------------------------------------------

struct Allow {
  bool operator==(const Allow&) const = default;
};
struct Deny {
  std::string reason;
  bool operator==(const Deny&) const = default;
};

struct AccessPolicy;
using AccessDecider = Decider<AccessPolicy, AccessContext>;

struct AccessPolicy {
  using Variant = std::variant<Allow, Deny, Dynamic<AccessPolicy, AccessContext>>;
  Variant v;

  static AccessPolicy allow() { return {Allow{}}; }
  static AccessPolicy deny(std::string reason = {}) { return {Deny{std::move(reason)}}; }
  static AccessPolicy dynamic(std::shared_ptr<const AccessDecider> d);

  bool is_dynamic() const { return std::holds_alternative<Dynamic<AccessPolicy, AccessContext>>(v); }
  bool operator==(const AccessPolicy&) const = default;
};

using AnyPolicy = std::variant<TransmissionPolicy, EncodingPolicy, PlacementPolicy, AccessPolicy>;

PolicyKind kind_of(const AnyPolicy& p);

/// Wraps a callable as a named decider.
template <class Policy, class Context, class Fn>
std::shared_ptr<const Decider<Policy, Context>> make_decider(std::string name, Fn fn) {
  struct Impl final : Decider<Policy, Context> {
    Impl(std::string n, Fn f) : n_(std::move(n)), f_(std::move(f)) {}
    Policy decide(const Context& c) const override { return f_(c); }
    std::string name() const override { return n_; }
    std::string n_;
    Fn f_;
  };
  return std::make_shared<const Impl>(std::move(name), std::move(fn));
}

// --- dynamic evaluation -----------------------------------------------------

inline constexpr int kDynamicChainLimit = 8;

/// Returns concrete policies unchanged; otherwise calls deciders until a
/// concrete policy appears. More than kDynamicChainLimit decider calls
/// raise DynamicChainOverflow; a throwing decider raises DeciderFailure.
/// Decider names are appended to `chain` when given.
TransmissionPolicy eval_dynamic(const TransmissionPolicy& p, const TransmissionContext& ctx,
                                std::vector<std::string>* chain = nullptr);
EncodingPolicy eval_dynamic(const EncodingPolicy& p, const TransmissionContext& ctx,
                            std::vector<std::string>* chain = nullptr);
PlacementPolicy eval_dynamic(const PlacementPolicy& p, const InstantiationContext& ctx,
                             std::vector<std::string>* chain = nullptr);
AccessPolicy eval_dynamic(const AccessPolicy& p, const AccessContext& ctx, std::vector<std::string>* chain = nullptr);

// --- keywords ---------------------------------------------------------------

/// Named factories for dynamic deciders, looked up as `dynamic(name[:arg])`.
class DeciderRegistry {
 public:
  using TransmissionFactory = std::function<std::shared_ptr<const TransmissionDecider>(const std::string& arg)>;
  using EncodingFactory = std::function<std::shared_ptr<const EncodingDecider>(const std::string& arg)>;
  using PlacementFactory = std::function<std::shared_ptr<const PlacementDecider>(const std::string& arg)>;
  using AccessFactory = std::function<std::shared_ptr<const AccessDecider>(const std::string& arg)>;

  /// Registers the built-ins: transmission by_size:N, encoding
  /// base64_from:N, placement least_loaded, access allow_agent_type:T.
  DeciderRegistry();

  void add(std::string name, TransmissionFactory f) { transmission_[std::move(name)] = std::move(f); }
  void add(std::string name, EncodingFactory f) { encoding_[std::move(name)] = std::move(f); }
  void add(std::string name, PlacementFactory f) { placement_[std::move(name)] = std::move(f); }
  void add(std::string name, AccessFactory f) { access_[std::move(name)] = std::move(f); }

  /// Throws UnknownDecider.
  AnyPolicy make(PolicyKind kind, const std::string& name, const std::string& arg) const;

 private:
  std::map<std::string, TransmissionFactory> transmission_;
  std::map<std::string, EncodingFactory> encoding_;
  std::map<std::string, PlacementFactory> placement_;
  std::map<std::string, AccessFactory> access_;
};

/// Parses a policy keyword (by_ref, by_value_to_depth(2), base64, create_at(b),
/// deny(reason), dynamic(by_size:500), ...). The result's kind is that of the
/// keyword; `kind` only selects the registry for dynamic(...). Throws
/// PolicySyntax, InvalidPolicy or UnknownDecider.
AnyPolicy parse_policy(PolicyKind kind, std::string_view keyword, const DeciderRegistry& deciders);

std::string format_policy(const AnyPolicy& p);
std::string format_policy(const TransmissionPolicy& p);
std::string format_policy(const EncodingPolicy& p);
std::string format_policy(const PlacementPolicy& p);
std::string format_policy(const AccessPolicy& p);

}  // namespace pfm
