#pragma once

#include "pfm/ids.hpp"
#include "pfm/pattern.hpp"
#include "pfm/policy.hpp"
#include "pfm/types.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pfm {

struct Rule {
  RuleHandle handle;
  std::uint64_t seq = 0;
  PolicyKind kind = PolicyKind::Transmission;
  ContextPattern pattern;
  AnyPolicy policy;
  bool match_subtypes = false;
  TemporalScope scope = TemporalScope::Indefinite;
  std::optional<CallId> owner_call;
};

using SubtypeFn = std::function<bool(std::string_view sub, std::string_view super)>;

/// Stage-one applicability of a single element: '*' and '-' accept anything,
/// a literal accepts equal text (or a nominal subtype on object_type /
/// root_type when subtype matching is on), a negation accepts whatever the
/// literal would reject.
bool element_accepts(const PatternElement& e, Dimension d, std::string_view value, bool match_subtypes,
                     const SubtypeFn& is_subtype);

/// Default elimination between two rules only: false iff `candidate` is
/// eliminated when compared against `owner` dimension by dimension.
bool survives_default_elimination(const ContextPattern& candidate, const ContextPattern& owner);

/// Index over the rules of one kind: ten levels in precedence order, each
/// node with always-match, literal, negation and default children.
class RuleTree {
 public:
  RuleTree();
  ~RuleTree();
  RuleTree(RuleTree&&) noexcept;
  RuleTree& operator=(RuleTree&&) noexcept;

  void insert(const Rule* rule);
  /// Removes the leaf entry and prunes nodes left without children.
  void erase(const Rule* rule);
  bool empty() const;

  /// Rules whose every element accepts the context, found by descent with
  /// backtracking; ordered by seq.
  std::vector<const Rule*> applicable(const ContextValues& ctx, const SubtypeFn& is_subtype) const;

  /// Indented rendering, children in class order *, literal, negation, '-'.
  std::string dump(const std::function<std::string(const Rule&)>& describe_leaf) const;

  std::size_t leaf_count() const;

 private:
  struct Node;
  std::unique_ptr<Node> root_;
};

struct Elimination {
  RuleHandle rule;
  Dimension dimension = Dimension::Thread;
  std::string reason;
};

/// Record of one resolution, rendered by the explainer.
struct MatchTrace {
  PolicyKind kind = PolicyKind::Transmission;
  ContextValues context = empty_context();
  std::vector<RuleHandle> applicable;
  std::vector<Elimination> eliminated;
  std::vector<std::string> comparison;
  std::optional<RuleHandle> winner;
  std::vector<std::string> dynamic_chain;
};

template <class Policy>
struct Resolution {
  Policy policy;
  MatchTrace trace;
};

struct RuleInfo {
  RuleHandle handle;
  std::uint64_t seq = 0;
  PolicyKind kind = PolicyKind::Transmission;
  std::string pattern;  // canonical
  std::string policy;   // keyword
  bool match_subtypes = false;
  TemporalScope scope = TemporalScope::Indefinite;
  std::optional<CallId> owner_call;
};

/// The meta-policy manager of one address space.
///
/// Resolution picks, among the applicable rules, the one that survives
/// default elimination (in precedence order, a '-' element yields to any
/// surviving rule that is specific at that dimension), then maximizes the
/// element ranks lexicographically, then has the highest seq. Without an
/// applicable rule resolution throws NoApplicableRule; there is no built-in
/// fallback.
class Engine {
 public:
  explicit Engine(const TypeRegistry* types = nullptr);
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// CURRENT_CALL rules bind to the innermost call being serviced.
  RuleHandle add_rule(PolicyKind kind, std::string_view pattern, AnyPolicy policy, bool match_subtypes,
                      TemporalScope scope);
  RuleHandle add_rule(PolicyKind kind, std::string_view pattern, AnyPolicy policy, bool match_subtypes,
                      TemporalScope scope, std::optional<CallId> owner_call);
  void remove_rule(RuleHandle handle);

  std::vector<RuleInfo> list_rules(PolicyKind kind) const;
  const Rule* find(RuleHandle handle) const;
  RuleInfo describe(const Rule& rule) const;

  /// Selection without dynamic evaluation.
  MatchTrace match(PolicyKind kind, const ContextValues& ctx) const;

  Resolution<TransmissionPolicy> resolve_transmission(const TransmissionContext& ctx) const;
  Resolution<EncodingPolicy> resolve_encoding(const TransmissionContext& ctx) const;
  Resolution<PlacementPolicy> resolve_placement(const InstantiationContext& ctx) const;
  Resolution<AccessPolicy> resolve_access(const AccessContext& ctx) const;

  void begin_servicing(CallId call);
  void end_servicing(CallId call);
  std::optional<CallId> current_call() const;
  /// Drops every CURRENT_CALL rule owned by `call`.
  void expire_call_scoped(CallId call);

  std::string dump_tree(PolicyKind kind) const;

  bool is_subtype(std::string_view sub, std::string_view super) const;

 private:
  void check_cached_methods(const ContextPattern& pattern, const AnyPolicy& policy) const;

  const TypeRegistry* types_;
  std::map<RuleHandle, std::unique_ptr<Rule>> rules_;
  std::array<RuleTree, 4> trees_;
  std::uint64_t next_seq_ = 1;
  std::vector<CallId> servicing_;
};

/// Multi-line rendering of a trace: applicable rules, eliminations,
/// comparison, dynamic chain and the winner.
std::string render_trace(const Engine& engine, const MatchTrace& trace);

}  // namespace pfm
