#pragma once

#include "pfm/engine.hpp"
#include "pfm/heap.hpp"
#include "pfm/wire.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pfm {

/// Named value transforms usable from transform(id, inner).
class TransformRegistry {
 public:
  using Fn = std::function<WireValue(const WireValue&)>;

  void add(std::string id, Fn fn) { fns_[std::move(id)] = std::move(fn); }
  bool contains(std::string_view id) const { return fns_.find(id) != fns_.end(); }
  /// Throws UnknownTransform.
  const Fn& get(std::string_view id) const;

 private:
  std::map<std::string, Fn, std::less<>> fns_;
};

/// Keeps the first floor(n * fraction) elements of the array held in
/// `field` of an encoded object; other nodes pass through unchanged.
TransformRegistry::Fn truncate_transform(std::string field, double fraction);

/// What the caller knows about one transmission before any object is visited.
struct TransmissionMeta {
  /// thread, agent_type, agent_instance, parameter, method and service;
  /// the per-object dimensions are filled in during traversal.
  ContextValues dims = empty_context();
  CallId call_id;
  Direction direction = Direction::ReturningResult;
  /// Declared parameter or return type, used to pick remote view types.
  std::string declared_type;
  /// Whether the receiving node has a type; drives class_by_name(include_bytes).
  std::function<bool(std::string_view)> destination_knows;
};

struct EncodeEnv {
  const Engine* engine = nullptr;
  const Heap* heap = nullptr;
  const TransformRegistry* transforms = nullptr;
  /// Evaluates a zero-parameter method on the sender for cached results.
  std::function<Value(const ObjRef&, const std::string&)> call_method;
  /// One line per policy decision when set.
  std::vector<std::string>* log = nullptr;
};

struct PendingMove {
  ObjRef original;
  std::uint32_t tag = 0;
  bool visit = false;
};

struct Encoded {
  WireValue wire;
  std::vector<PendingMove> moves;
  /// Sender object behind every by-value tag.
  std::map<std::uint32_t, ObjRef> tag_origins;
};

Encoded encode_transmission(const Value& root, const TransmissionMeta& meta, const EncodeEnv& env);

/// Whole-closure element-wise copy with no policy consultation; used for
/// cached members.
WireValue encode_snapshot(const Value& v, const Heap& heap);

struct Decoded {
  Value value;
  std::map<std::uint32_t, ObjRef> tags;
};

/// Materializes `w` on `heap`. `registry` must be the heap's registry; it
/// receives types carried by class_by_name(include_bytes).
Decoded decode_transmission(const WireValue& w, Heap& heap, TypeRegistry& registry, std::string_view declared_type);

}  // namespace pfm
