#include "pfm/codec.hpp"

#include "pfm/error.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <set>

namespace pfm {

const TransformRegistry::Fn& TransformRegistry::get(std::string_view id) const {
  auto it = fns_.find(id);
  if (it == fns_.end()) fail(ErrorCode::UnknownTransform, std::string(id));
  return it->second;
}

TransformRegistry::Fn truncate_transform(std::string field, double fraction) {
  return [field = std::move(field), fraction](const WireValue& w) {
    WireValue out = w;
    if (!out.is<wire::Object>()) return out;
    for (auto& [name, value] : out.as<wire::Object>().fields) {
      if (name != field) continue;
      if (value.is<wire::Array>()) {
        auto& elems = value.as<wire::Array>().elements;
        elems.resize(static_cast<std::size_t>(std::floor(static_cast<double>(elems.size()) * fraction)));
      } else if (value.is<wire::ArrayB64>()) {
        auto& packed = value.as<wire::ArrayB64>();
        auto bytes = base64_decode(packed.text);
        std::size_t width = primitive_width(packed.element_type).value_or(1);
        std::size_t n = bytes.size() / width;
        bytes.resize(static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction)) * width);
        packed.text = base64_encode(bytes);
      }
    }
    return out;
  };
}

namespace {

constexpr long kUnbounded = std::numeric_limits<long>::max();
constexpr std::string_view kElementField = "#element";

std::string package_or_none(std::string_view type) {
  auto p = package_of(is_array_name(type) ? array_element(type) : type);
  return p.empty() ? std::string(kNone) : p;
}

void collect_refs(const Value& v, std::vector<ObjRef>& out) {
  if (v.is_object()) {
    out.push_back(v.object());
  } else if (v.is_array()) {
    for (const auto& e : v.array().elements) collect_refs(e, out);
  }
}

bool is_packable(const wire::Array& a) {
  if (!primitive_width(a.element_type)) return false;
  for (const auto& e : a.elements)
    if (!e.is<wire::Prim>()) return false;
  return true;
}

// --- snapshot ---------------------------------------------------------------

class SnapshotWriter {
 public:
  explicit SnapshotWriter(const Heap& heap) : heap_(heap) {}

  WireValue write(const Value& v) {
    if (v.is_null()) return {wire::Null{}};
    if (v.is_primitive()) return {wire::Prim{v.primitive().type, v.primitive().payload}};
    if (v.is_array()) {
      wire::Array a{v.array().element_type, {}};
      for (const auto& e : v.array().elements) a.elements.push_back(write(e));
      return {std::move(a)};
    }
    const auto& ref = v.object();
    const auto& obj = heap_.get(ref);
    if (obj.proxy) return {wire::RemoteRef{obj.proxy->target_node.value, obj.proxy->target_id.value, obj.proxy->view_type, {}, {}}};
    if (obj.move.residency != Residency::Resident)
      return {wire::Moved{obj.move.location->node.value, obj.move.location->id.value}};
    if (auto it = tags_.find(ref.id); it != tags_.end()) return {wire::BackRef{it->second}};
    std::uint32_t tag = next_tag_++;
    tags_.emplace(ref.id, tag);
    wire::Object o{obj.type, tag, {}};
    for (const auto& [name, fv] : obj.fields) o.fields.emplace_back(name, write(fv));
    return {std::move(o)};
  }

 private:
  const Heap& heap_;
  std::map<ObjectId, std::uint32_t> tags_;
  std::uint32_t next_tag_ = 0;
};

// --- policy-driven encoder ----------------------------------------------------

class Encoder {
 public:
  Encoder(const Value& root, const TransmissionMeta& meta, const EncodeEnv& env)
      : root_(root), meta_(meta), env_(env), heap_(*env.heap), engine_(*env.engine) {}

  Encoded run() {
    plan();
    Slot root_slot{std::nullopt, 0, meta_.declared_type};
    Encoded out;
    out.wire = emit(root_, root_slot);
    out.moves = std::move(moves_);
    out.tag_origins = std::move(origins_);
    return out;
  }

 private:
  enum class Mode { Value, Ref, Caching, Proxy, Moved };

  struct Budget {
    const Rule* owner = nullptr;
    long remaining = 0;
  };

  struct Plan {
    Mode mode = Mode::Ref;
    std::optional<std::string> field;
    int depth = 0;
    std::string view_type;
    ByReferenceWithCaching caching;
    std::optional<EncodingPolicy> encoding;
    bool move = false;
    bool visit = false;
  };

  // Where a value sits: the field it was reached through and its depth.
  struct Slot {
    std::optional<std::string> field;
    int depth = 0;
    std::string declared_type;
  };

  struct Pending {
    ObjRef ref;
    Slot slot;
    std::optional<Budget> budget;
  };

  TransmissionContext context(const Value& current, const std::string& type, const Slot& slot) const {
    TransmissionContext ctx;
    ctx.dims = meta_.dims;
    ctx.dims[index_of(Dimension::Field)] = slot.field.value_or(std::string(kNone));
    ctx.dims[index_of(Dimension::ObjectType)] = type;
    ctx.dims[index_of(Dimension::RootType)] = root_.is_null() ? std::string(kNone) : root_type_name();
    ctx.dims[index_of(Dimension::Package)] = package_or_none(type);
    ctx.current_object = current;
    ctx.root_object = root_;
    ctx.field_name = slot.field;
    ctx.depth_from_root = slot.depth;
    ctx.call_id = meta_.call_id;
    ctx.direction = meta_.direction;
    ctx.heap = &heap_;
    return ctx;
  }

  std::string root_type_name() const {
    if (root_.is_object()) return heap_.get(root_.object()).type;
    return root_.type_name();
  }

  std::string view_for(const std::string& concrete, const std::string& declared) const {
    const auto& types = heap_.types();
    if (declared.empty() || declared == concrete || !types.contains(declared) || !types.contains(concrete))
      return concrete;
    if (types.is_subtype(concrete, declared) || types.structurally_compatible(concrete, declared)) return declared;
    return concrete;
  }

  void log(const std::string& what, const TransmissionContext& ctx, const MatchTrace& trace, const std::string& policy) {
    if (!env_.log) return;
    std::string line = what + " " + ctx.get(Dimension::ObjectType) + " field=" + ctx.get(Dimension::Field) +
                       " depth=" + std::to_string(ctx.depth_from_root) + " -> " + policy;
    if (trace.winner) line += " (rule #" + std::to_string(trace.winner->value) + ")";
    env_.log->push_back(std::move(line));
  }

  EncodingPolicy resolve_encoding(const TransmissionContext& ctx) {
    auto res = engine_.resolve_encoding(ctx);
    log("encoding", ctx, res.trace, format_policy(res.policy));
    return res.policy;
  }

  void enqueue_children(std::deque<Pending>& queue, const ObjRef& ref, int depth, std::optional<Budget> budget) {
    const auto& obj = heap_.get(ref);
    const auto& desc = heap_.types().get(obj.type);
    for (const auto& [name, value] : obj.fields) {
      std::vector<ObjRef> refs;
      collect_refs(value, refs);
      std::string declared = desc.find_field(name) ? desc.find_field(name)->type : std::string();
      while (is_array_name(declared)) declared = std::string(array_element(declared));
      for (auto& r : refs) queue.push_back({r, Slot{name, depth + 1, declared}, budget});
    }
  }

  void plan() {
    std::deque<Pending> queue;
    if (root_.is_object()) {
      queue.push_back({root_.object(), Slot{std::nullopt, 0, meta_.declared_type}, std::nullopt});
    } else if (root_.is_array()) {
      std::vector<ObjRef> refs;
      collect_refs(root_, refs);
      std::string declared(array_element(root_.type_name()));
      while (is_array_name(declared)) declared = std::string(array_element(declared));
      for (auto& r : refs) queue.push_back({r, Slot{std::string(kElementField), 1, declared}, std::nullopt});
    }

    while (!queue.empty()) {
      Pending item = std::move(queue.front());
      queue.pop_front();
      if (plans_.count(item.ref.id)) continue;
      Plan& p = plans_[item.ref.id];
      p.field = item.slot.field;
      p.depth = item.slot.depth;

      const auto& obj = heap_.get(item.ref);
      if (obj.proxy) {
        p.mode = Mode::Proxy;
        continue;
      }
      if (obj.move.residency != Residency::Resident) {
        p.mode = Mode::Moved;
        continue;
      }

      auto ctx = context(Value(item.ref), obj.type, item.slot);
      auto res = engine_.resolve_transmission(ctx);
      const Rule* winner = engine_.find(*res.trace.winner);
      p.view_type = view_for(obj.type, item.slot.declared_type);

      std::optional<Budget> child_budget;
      bool budget_governs = item.budget && (winner == item.budget->owner ||
                                            !survives_default_elimination(winner->pattern, item.budget->owner->pattern));
      if (budget_governs) {
        long r = item.budget->remaining;
        if (r >= 0) {
          p.mode = Mode::Value;
          child_budget = Budget{item.budget->owner, r == kUnbounded ? r : r - 1};
        } else {
          p.mode = Mode::Ref;
        }
        log("transmission", ctx, res.trace,
            std::string(p.mode == Mode::Value ? "by_val" : "by_ref") + " [depth budget]");
      } else {
        std::visit(
            [&](const auto& tp) {
              using T = std::decay_t<decltype(tp)>;
              if constexpr (std::is_same_v<T, ByRef>) {
                p.mode = Mode::Ref;
              } else if constexpr (std::is_same_v<T, ByVal>) {
                p.mode = Mode::Value;
              } else if constexpr (std::is_same_v<T, ByValueToDepth>) {
                p.mode = Mode::Value;
                child_budget = Budget{winner, tp.full_closure() ? kUnbounded : static_cast<long>(tp.depth) - 1};
              } else if constexpr (std::is_same_v<T, ByMove> || std::is_same_v<T, ByVisit>) {
                p.mode = Mode::Value;
                p.move = std::is_same_v<T, ByMove>;
                p.visit = std::is_same_v<T, ByVisit>;
                child_budget = Budget{winner, kUnbounded};
              } else if constexpr (std::is_same_v<T, ByReferenceWithCaching>) {
                p.mode = Mode::Caching;
                p.caching = tp;
              }
            },
            res.policy.v);
        log("transmission", ctx, res.trace, format_policy(res.policy));
      }
      p.encoding = resolve_encoding(ctx);
      if (p.mode == Mode::Value) enqueue_children(queue, item.ref, item.slot.depth, child_budget);
    }
  }

  WireValue apply_encoding(const EncodingPolicy& policy, WireValue node) {
    return std::visit(
        [&](const auto& ep) -> WireValue {
          using T = std::decay_t<decltype(ep)>;
          if constexpr (std::is_same_v<T, ElementWise>) {
            return node;
          } else if constexpr (std::is_same_v<T, Base64Packed>) {
            if (!node.is<wire::Array>() || !is_packable(node.as<wire::Array>()))
              fail(ErrorCode::Base64OnNonPrimitiveArray, "base64 needs an array of fixed-width primitives");
            const auto& a = node.as<wire::Array>();
            std::vector<std::uint8_t> bytes;
            for (const auto& e : a.elements) {
              const auto& payload = e.as<wire::Prim>().payload;
              bytes.insert(bytes.end(), payload.begin(), payload.end());
            }
            return {wire::ArrayB64{a.element_type, base64_encode(bytes)}};
          } else if constexpr (std::is_same_v<T, ClassByName>) {
            if (!node.is<wire::Prim>() || node.as<wire::Prim>().type != kClassType) return node;
            const auto& payload = node.as<wire::Prim>().payload;
            std::string name(payload.begin(), payload.end());
            wire::ClassRef ref{name, std::nullopt};
            bool known = meta_.destination_knows && meta_.destination_knows(name);
            if (ep.include_bytes_if_missing && !known && heap_.types().contains(name))
              ref.class_bytes = base64_encode(describe_type(heap_.types().get(name)));
            return {std::move(ref)};
          } else if constexpr (std::is_same_v<T, TransformThenEncode>) {
            WireValue transformed = env_.transforms ? env_.transforms->get(ep.transform_id)(node)
                                                    : (fail(ErrorCode::UnknownTransform, ep.transform_id), node);
            return apply_encoding(*ep.inner, std::move(transformed));
          } else {
            fail(ErrorCode::InvalidPolicy, "unevaluated dynamic encoding policy");
          }
        },
        policy.v);
  }

  WireValue remote_ref(const ObjRef& ref, const Plan& p) {
    wire::RemoteRef r{heap_.node().value, ref.id.value, p.view_type, {}, {}};
    if (p.mode == Mode::Caching) {
      for (const auto& f : p.caching.fields) r.cached_fields.emplace_back(f, encode_snapshot(heap_.field(ref, f), heap_));
      if (!p.caching.methods.empty()) {
        auto methods = heap_.types().all_methods(heap_.get(ref).type);
        for (const auto& m : p.caching.methods) {
          auto it = std::find_if(methods.begin(), methods.end(), [&](const MethodDecl& d) { return d.name == m; });
          if (it == methods.end() || !it->params.empty() || !env_.call_method)
            fail(ErrorCode::CachedMethodArity, heap_.get(ref).type + "." + m + " is not a zero-parameter method");
          r.cached_methods.emplace_back(m, encode_snapshot(env_.call_method(ref, m), heap_));
        }
      }
    }
    return {std::move(r)};
  }

  Slot child_slot(const Slot& array_slot) const {
    if (array_slot.depth == 0) return Slot{std::string(kElementField), 1, array_slot.declared_type};
    return array_slot;
  }

  WireValue emit(const Value& v, const Slot& slot) {
    if (v.is_null()) return {wire::Null{}};
    if (v.is_primitive()) {
      WireValue node{wire::Prim{v.primitive().type, v.primitive().payload}};
      if (v.primitive().type != kClassType) return node;
      auto ctx = context(v, std::string(kClassType), slot);
      return apply_encoding(resolve_encoding(ctx), std::move(node));
    }
    if (v.is_array()) {
      auto ctx = context(v, v.type_name(), slot);
      auto policy = resolve_encoding(ctx);
      Slot inner = child_slot(slot);
      if (!inner.declared_type.empty() && is_array_name(inner.declared_type))
        inner.declared_type = std::string(array_element(inner.declared_type));
      wire::Array a{v.array().element_type, {}};
      for (const auto& e : v.array().elements) a.elements.push_back(emit(e, inner));
      return apply_encoding(policy, WireValue{std::move(a)});
    }

    const auto& ref = v.object();
    const Plan& p = plans_.at(ref.id);
    const auto& obj = heap_.get(ref);
    switch (p.mode) {
      case Mode::Proxy:
        return {wire::RemoteRef{obj.proxy->target_node.value, obj.proxy->target_id.value, obj.proxy->view_type, {}, {}}};
      case Mode::Moved:
        return {wire::Moved{obj.move.location->node.value, obj.move.location->id.value}};
      case Mode::Ref:
      case Mode::Caching:
        return apply_encoding(*p.encoding, remote_ref(ref, p));
      case Mode::Value: break;
    }
    if (auto it = tags_.find(ref.id); it != tags_.end()) return {wire::BackRef{it->second}};
    std::uint32_t tag = next_tag_++;
    tags_.emplace(ref.id, tag);
    origins_.emplace(tag, ref);
    if (p.move || p.visit) moves_.push_back({ref, tag, p.visit});

    const auto& desc = heap_.types().get(obj.type);
    wire::Object o{obj.type, tag, {}};
    for (const auto& [name, fv] : obj.fields) {
      const auto* decl = desc.find_field(name);
      o.fields.emplace_back(name, emit(fv, Slot{name, p.depth + 1, decl ? decl->type : std::string()}));
    }
    return apply_encoding(*p.encoding, WireValue{std::move(o)});
  }

  const Value& root_;
  const TransmissionMeta& meta_;
  const EncodeEnv& env_;
  const Heap& heap_;
  const Engine& engine_;
  std::map<ObjectId, Plan> plans_;
  std::map<ObjectId, std::uint32_t> tags_;
  std::map<std::uint32_t, ObjRef> origins_;
  std::vector<PendingMove> moves_;
  std::uint32_t next_tag_ = 0;
};

// --- decoder ------------------------------------------------------------------

class Decoder {
 public:
  Decoder(Heap& heap, TypeRegistry& registry) : heap_(heap), registry_(registry) {}

  Value read(const WireValue& w, std::string_view declared) {
    return std::visit([&](const auto& n) { return read_node(n, declared); }, w.v);
  }

  std::map<std::uint32_t, ObjRef> take_tags() { return std::move(tags_); }

 private:
  Value read_node(const wire::Null&, std::string_view) { return Value::null(); }

  Value read_node(const wire::Prim& p, std::string_view) {
    if (auto width = primitive_width(p.type); width && *width != p.payload.size())
      fail(ErrorCode::MalformedWire, p.type + " payload has " + std::to_string(p.payload.size()) + " bytes");
    if (!primitive_width(p.type) && p.type != "string" && p.type != kClassType)
      fail(ErrorCode::MalformedWire, "prim node of non-primitive type " + p.type);
    return Primitive{p.type, p.payload};
  }

  Value read_node(const wire::Object& o, std::string_view) {
    if (o.tag != tags_.size())
      fail(ErrorCode::TagOrderViolation, "expected tag " + std::to_string(tags_.size()) + ", got " + std::to_string(o.tag));
    const auto& desc = registry_.get(o.type);
    if (desc.fields.size() != o.fields.size())
      fail(ErrorCode::MalformedWire, o.type + " carries " + std::to_string(o.fields.size()) + " fields");
    ObjRef ref = heap_.allocate_default(o.type);
    tags_.emplace(o.tag, ref);
    for (std::size_t i = 0; i < o.fields.size(); ++i) {
      if (o.fields[i].first != desc.fields[i].name)
        fail(ErrorCode::MalformedWire, o.type + " field order differs at " + o.fields[i].first);
      heap_.set_field(ref, desc.fields[i].name, read(o.fields[i].second, desc.fields[i].type));
    }
    return ref;
  }

  Value read_node(const wire::BackRef& b, std::string_view) {
    auto it = tags_.find(b.tag);
    if (it == tags_.end()) fail(ErrorCode::TagOrderViolation, "backref to unseen tag " + std::to_string(b.tag));
    return it->second;
  }

  Value proxy_to(std::uint32_t node, std::uint64_t object, const std::string& view, WireFields fields,
                 WireFields methods) {
    if (NodeId{node} == heap_.node()) return heap_.ref_of(ObjectId{object});
    ProxyData data{NodeId{node}, ObjectId{object}, view, {}, {}};
    for (const auto& [name, w] : fields) data.cached_fields.emplace_back(name, snapshot(w));
    for (const auto& [name, w] : methods) data.cached_methods.emplace_back(name, snapshot(w));
    return heap_.allocate_proxy(std::move(data));
  }

  Value snapshot(const WireValue& w) {
    Decoder scoped(heap_, registry_);
    return scoped.read(w, {});
  }

  Value read_node(const wire::RemoteRef& r, std::string_view) {
    return proxy_to(r.node, r.object, r.view_type, r.cached_fields, r.cached_methods);
  }

  Value read_node(const wire::Moved& m, std::string_view declared) {
    return proxy_to(m.node, m.object, declared.empty() ? std::string("#unknown") : std::string(declared), {}, {});
  }

  Value read_node(const wire::Array& a, std::string_view) {
    ArrayValue out{a.element_type, {}};
    for (const auto& e : a.elements) out.elements.push_back(read(e, a.element_type));
    return out;
  }

  Value read_node(const wire::ArrayB64& a, std::string_view) {
    auto width = primitive_width(a.element_type);
    if (!width || *width == 0) fail(ErrorCode::MalformedWire, "packed array of " + a.element_type);
    auto bytes = base64_decode(a.text);
    if (bytes.size() % *width != 0) fail(ErrorCode::MalformedWire, "packed payload is not a whole number of elements");
    ArrayValue out{a.element_type, {}};
    for (std::size_t i = 0; i < bytes.size(); i += *width)
      out.elements.emplace_back(Primitive{a.element_type, {bytes.begin() + static_cast<long>(i),
                                                           bytes.begin() + static_cast<long>(i + *width)}});
    return out;
  }

  Value read_node(const wire::ClassRef& c, std::string_view) {
    if (!registry_.contains(c.name)) {
      if (!c.class_bytes) fail(ErrorCode::UnknownClassRef, c.name);
      auto bytes = base64_decode(*c.class_bytes);
      auto desc = parse_type_description(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
      if (desc.name != c.name) fail(ErrorCode::MalformedWire, "class bytes describe " + desc.name + ", not " + c.name);
      registry_.register_type(std::move(desc));
    }
    return Value::of_class(c.name);
  }

  Heap& heap_;
  TypeRegistry& registry_;
  std::map<std::uint32_t, ObjRef> tags_;
};

}  // namespace

Encoded encode_transmission(const Value& root, const TransmissionMeta& meta, const EncodeEnv& env) {
  return Encoder(root, meta, env).run();
}

WireValue encode_snapshot(const Value& v, const Heap& heap) { return SnapshotWriter(heap).write(v); }

Decoded decode_transmission(const WireValue& w, Heap& heap, TypeRegistry& registry, std::string_view declared_type) {
  Decoder d(heap, registry);
  Decoded out;
  out.value = d.read(w, declared_type);
  out.tags = d.take_tags();
  return out;
}

}  // namespace pfm
