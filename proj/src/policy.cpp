#include "pfm/policy.hpp"

#include "pfm/error.hpp"

#include <algorithm>

namespace pfm {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Transmission: return "transmission";
    case PolicyKind::Encoding: return "encoding";
    case PolicyKind::Placement: return "placement";
    case PolicyKind::Access: return "access";
  }
  return "?";
}

std::optional<PolicyKind> policy_kind_from(std::string_view name) {
  for (auto k : kAllPolicyKinds)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::string_view to_string(TemporalScope scope) {
  return scope == TemporalScope::Indefinite ? "indefinite" : "current_call";
}

std::optional<TemporalScope> temporal_scope_from(std::string_view name) {
  if (name == "indefinite" || name == "INDEFINITE") return TemporalScope::Indefinite;
  if (name == "current_call" || name == "CURRENT_CALL") return TemporalScope::CurrentCall;
  return std::nullopt;
}

bool ByReferenceWithCaching::is_cached_field(std::string_view f) const {
  return std::find(fields.begin(), fields.end(), f) != fields.end();
}

bool ByReferenceWithCaching::is_cached_method(std::string_view m) const {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

TransmissionPolicy TransmissionPolicy::to_depth(int depth) {
  if (depth < 1 && depth != ByValueToDepth::kFullClosure)
    fail(ErrorCode::InvalidPolicy, "by_value_to_depth needs depth >= 1, got " + std::to_string(depth));
  return {ByValueToDepth{depth}};
}

TransmissionPolicy TransmissionPolicy::caching(std::vector<std::string> fields, std::vector<std::string> methods) {
  return {ByReferenceWithCaching{std::move(fields), std::move(methods)}};
}

TransmissionPolicy TransmissionPolicy::dynamic(std::shared_ptr<const TransmissionDecider> d) {
  if (!d) fail(ErrorCode::InvalidPolicy, "null decider");
  return {Dynamic<TransmissionPolicy, TransmissionContext>{std::move(d)}};
}

bool TransformThenEncode::operator==(const TransformThenEncode& o) const {
  if (transform_id != o.transform_id) return false;
  if (!inner || !o.inner) return inner == o.inner;
  return *inner == *o.inner;
}

EncodingPolicy EncodingPolicy::transform(std::string id, EncodingPolicy inner) {
  int nesting = 1;
  for (const EncodingPolicy* p = &inner; auto* t = std::get_if<TransformThenEncode>(&p->v); p = t->inner.get())
    ++nesting;
  if (nesting > TransformThenEncode::kMaxNesting)
    fail(ErrorCode::InvalidPolicy, "transforms nest deeper than " + std::to_string(TransformThenEncode::kMaxNesting));
  return {TransformThenEncode{std::move(id), std::make_shared<const EncodingPolicy>(std::move(inner))}};
}

EncodingPolicy EncodingPolicy::dynamic(std::shared_ptr<const EncodingDecider> d) {
  if (!d) fail(ErrorCode::InvalidPolicy, "null decider");
  return {Dynamic<EncodingPolicy, TransmissionContext>{std::move(d)}};
}

PlacementPolicy PlacementPolicy::dynamic(std::shared_ptr<const PlacementDecider> d) {
  if (!d) fail(ErrorCode::InvalidPolicy, "null decider");
  return {Dynamic<PlacementPolicy, InstantiationContext>{std::move(d)}};
}

AccessPolicy AccessPolicy::dynamic(std::shared_ptr<const AccessDecider> d) {
  if (!d) fail(ErrorCode::InvalidPolicy, "null decider");
  return {Dynamic<AccessPolicy, AccessContext>{std::move(d)}};
}

PolicyKind kind_of(const AnyPolicy& p) { return static_cast<PolicyKind>(p.index()); }

namespace {

template <class Policy, class Context>
Policy evaluate(const Policy& p, const Context& ctx, std::vector<std::string>* chain) {
  Policy current = p;
  for (int steps = 0; current.is_dynamic(); ++steps) {
    const auto& d = std::get<Dynamic<Policy, Context>>(current.v).decider;
    if (steps == kDynamicChainLimit)
      fail(ErrorCode::DynamicChainOverflow, "decider chain exceeded " + std::to_string(kDynamicChainLimit) +
                                                " steps at " + d->name());
    if (chain) chain->push_back(d->name());
    try {
      current = d->decide(ctx);
    } catch (const Error& e) {
      fail(ErrorCode::DeciderFailure, d->name() + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCode::DeciderFailure, d->name() + ": " + e.what());
    }
  }
  return current;
}

}  // namespace

TransmissionPolicy eval_dynamic(const TransmissionPolicy& p, const TransmissionContext& ctx,
                                std::vector<std::string>* chain) {
  return evaluate(p, ctx, chain);
}

EncodingPolicy eval_dynamic(const EncodingPolicy& p, const TransmissionContext& ctx, std::vector<std::string>* chain) {
  return evaluate(p, ctx, chain);
}

PlacementPolicy eval_dynamic(const PlacementPolicy& p, const InstantiationContext& ctx,
                             std::vector<std::string>* chain) {
  return evaluate(p, ctx, chain);
}

AccessPolicy eval_dynamic(const AccessPolicy& p, const AccessContext& ctx, std::vector<std::string>* chain) {
  return evaluate(p, ctx, chain);
}

namespace {

long parse_count(const std::string& arg, const std::string& decider) {
  try {
    std::size_t used = 0;
    long n = std::stol(arg, &used);
    if (used == arg.size() && n >= 0) return n;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::PolicySyntax, decider + " needs a non-negative integer argument, got '" + arg + "'");
}

}  // namespace

DeciderRegistry::DeciderRegistry() {
  add("by_size", TransmissionFactory([](const std::string& arg) {
        auto limit = static_cast<std::size_t>(parse_count(arg, "by_size"));
        return make_decider<TransmissionPolicy, TransmissionContext>(
            "by_size:" + arg, [limit](const TransmissionContext& c) {
              std::size_t size = c.heap ? closure_size(*c.heap, c.current_object) : 0;
              return size < limit ? TransmissionPolicy::by_val() : TransmissionPolicy::by_ref();
            });
      }));
  add("base64_from", EncodingFactory([](const std::string& arg) {
        auto limit = static_cast<std::size_t>(parse_count(arg, "base64_from"));
        return make_decider<EncodingPolicy, TransmissionContext>(
            "base64_from:" + arg, [limit](const TransmissionContext& c) {
              if (c.current_object.is_array() && c.current_object.array().elements.size() >= limit)
                return EncodingPolicy::base64();
              return EncodingPolicy::element_wise();
            });
      }));
  add("least_loaded", PlacementFactory([](const std::string&) {
        return make_decider<PlacementPolicy, InstantiationContext>("least_loaded", [](const InstantiationContext& c) {
          if (c.census.empty()) return PlacementPolicy::create_local();
          auto best = std::min_element(c.census.begin(), c.census.end(), [](const NodeCensus& a, const NodeCensus& b) {
            return a.objects != b.objects ? a.objects < b.objects : a.node < b.node;
          });
          return PlacementPolicy::create_at(best->name);
        });
      }));
  add("allow_agent_type", AccessFactory([](const std::string& arg) {
        return make_decider<AccessPolicy, AccessContext>("allow_agent_type:" + arg, [arg](const AccessContext& c) {
          if (c.get(Dimension::AgentType) == arg) return AccessPolicy::allow();
          return AccessPolicy::deny("agent type " + c.get(Dimension::AgentType) + " is not " + arg);
        });
      }));
}

AnyPolicy DeciderRegistry::make(PolicyKind kind, const std::string& name, const std::string& arg) const {
  auto lookup = [&](const auto& table) -> const auto& {
    auto it = table.find(name);
    if (it == table.end()) fail(ErrorCode::UnknownDecider, std::string(to_string(kind)) + " decider '" + name + "'");
    return it->second;
  };
  switch (kind) {
    case PolicyKind::Transmission: return TransmissionPolicy::dynamic(lookup(transmission_)(arg));
    case PolicyKind::Encoding: return EncodingPolicy::dynamic(lookup(encoding_)(arg));
    case PolicyKind::Placement: return PlacementPolicy::dynamic(lookup(placement_)(arg));
    case PolicyKind::Access: return AccessPolicy::dynamic(lookup(access_)(arg));
  }
  fail(ErrorCode::UnknownDecider, name);
}

}  // namespace pfm
