#include "pfm/engine.hpp"

#include <algorithm>

namespace pfm {

struct RuleTree::Node {
  std::unique_ptr<Node> always;
  std::map<std::string, std::unique_ptr<Node>, std::less<>> literal;
  std::map<std::string, std::unique_ptr<Node>, std::less<>> negation;
  std::unique_ptr<Node> fallback;
  std::vector<const Rule*> rules;  // leaf level

  bool empty() const { return !always && literal.empty() && negation.empty() && !fallback && rules.empty(); }
};

namespace {

bool is_type_dimension(std::size_t level) {
  return level == index_of(Dimension::ObjectType) || level == index_of(Dimension::RootType);
}

}  // namespace

RuleTree::RuleTree() : root_(std::make_unique<Node>()) {}
RuleTree::~RuleTree() = default;
RuleTree::RuleTree(RuleTree&&) noexcept = default;
RuleTree& RuleTree::operator=(RuleTree&&) noexcept = default;

bool RuleTree::empty() const { return root_->empty(); }

void RuleTree::insert(const Rule* rule) {
  Node* node = root_.get();
  for (const auto& e : rule->pattern.elements) {
    std::unique_ptr<Node>* slot = nullptr;
    switch (e.kind) {
      case PatternElement::Kind::AlwaysMatch: slot = &node->always; break;
      case PatternElement::Kind::Default: slot = &node->fallback; break;
      case PatternElement::Kind::Literal: slot = &node->literal[e.text]; break;
      case PatternElement::Kind::Negation: slot = &node->negation[e.text]; break;
    }
    if (!*slot) *slot = std::make_unique<Node>();
    node = slot->get();
  }
  auto pos = std::upper_bound(node->rules.begin(), node->rules.end(), rule,
                              [](const Rule* a, const Rule* b) { return a->seq < b->seq; });
  node->rules.insert(pos, rule);
}

namespace {

template <class NodeT>
bool erase_path(NodeT& node, const Rule* rule, std::size_t level) {
  if (level == kDimensionCount) {
    auto it = std::find(node.rules.begin(), node.rules.end(), rule);
    if (it == node.rules.end()) return false;
    node.rules.erase(it);
    return true;
  }
  const auto& e = rule->pattern.elements[level];
  auto descend = [&](std::unique_ptr<NodeT>& child) {
    if (!child) return false;
    bool removed = erase_path(*child, rule, level + 1);
    if (removed && child->empty()) child.reset();
    return removed;
  };
  auto descend_map = [&](auto& map) {
    auto it = map.find(e.text);
    if (it == map.end()) return false;
    bool removed = descend(it->second);
    if (!it->second) map.erase(it);
    return removed;
  };
  switch (e.kind) {
    case PatternElement::Kind::AlwaysMatch: return descend(node.always);
    case PatternElement::Kind::Default: return descend(node.fallback);
    case PatternElement::Kind::Literal: return descend_map(node.literal);
    case PatternElement::Kind::Negation: return descend_map(node.negation);
  }
  return false;
}

}  // namespace

void RuleTree::erase(const Rule* rule) { erase_path(*root_, rule, 0); }

std::vector<const Rule*> RuleTree::applicable(const ContextValues& ctx, const SubtypeFn& is_subtype) const {
  std::vector<const Rule*> out;

  // A path may rely on subtype matching (a literal matched a strict
  // supertype) or on its absence (a negation matched a strict supertype);
  // the leaf filters its rules by their flag accordingly.
  struct Frame {
    const Node* node;
    std::size_t level;
    bool needs_subtypes;
    bool needs_exact;
  };
  std::vector<Frame> stack{{root_.get(), 0, false, false}};

  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (f.needs_subtypes && f.needs_exact) continue;
    if (f.level == kDimensionCount) {
      for (const Rule* r : f.node->rules) {
        if (f.needs_subtypes && !r->match_subtypes) continue;
        if (f.needs_exact && r->match_subtypes) continue;
        out.push_back(r);
      }
      continue;
    }
    const std::string& value = ctx[f.level];
    bool types = is_type_dimension(f.level);
    std::vector<Frame> next;
    if (f.node->always) next.push_back({f.node->always.get(), f.level + 1, f.needs_subtypes, f.needs_exact});
    if (auto it = f.node->literal.find(value); it != f.node->literal.end())
      next.push_back({it->second.get(), f.level + 1, f.needs_subtypes, f.needs_exact});
    if (types && is_subtype) {
      for (const auto& [text, child] : f.node->literal)
        if (text != value && is_subtype(value, text)) next.push_back({child.get(), f.level + 1, true, f.needs_exact});
    }
    for (const auto& [text, child] : f.node->negation) {
      if (text == value) continue;
      bool strict_super = types && is_subtype && is_subtype(value, text);
      next.push_back({child.get(), f.level + 1, f.needs_subtypes, f.needs_exact || strict_super});
    }
    if (f.node->fallback) next.push_back({f.node->fallback.get(), f.level + 1, f.needs_subtypes, f.needs_exact});
    // visit in child-class order
    for (auto it = next.rbegin(); it != next.rend(); ++it) stack.push_back(*it);
  }

  std::sort(out.begin(), out.end(), [](const Rule* a, const Rule* b) { return a->seq < b->seq; });
  return out;
}

namespace {

template <class NodeT>
void dump_node(const NodeT& node, std::size_t level, const std::function<std::string(const Rule&)>& leaf,
               std::string& out) {
  std::string indent(2 * level, ' ');
  if (level == kDimensionCount) {
    for (const Rule* r : node.rules) out += indent + "=> " + leaf(*r) + "\n";
    return;
  }
  std::string tag(tag_of(kAllDimensions[level]));
  auto child = [&](const std::string& label, const NodeT& c) {
    out += indent + tag + ": " + label + "\n";
    dump_node(c, level + 1, leaf, out);
  };
  if (node.always) child("*", *node.always);
  for (const auto& [text, c] : node.literal) child(text, *c);
  for (const auto& [text, c] : node.negation) child("!" + text, *c);
  if (node.fallback) child("-", *node.fallback);
}

template <class NodeT>
std::size_t count_leaves(const NodeT& node) {
  std::size_t n = node.rules.size();
  if (node.always) n += count_leaves(*node.always);
  for (const auto& [t, c] : node.literal) n += count_leaves(*c);
  for (const auto& [t, c] : node.negation) n += count_leaves(*c);
  if (node.fallback) n += count_leaves(*node.fallback);
  return n;
}

}  // namespace

std::string RuleTree::dump(const std::function<std::string(const Rule&)>& describe_leaf) const {
  if (empty()) return "(empty)\n";
  std::string out;
  dump_node(*root_, 0, describe_leaf, out);
  return out;
}

std::size_t RuleTree::leaf_count() const { return count_leaves(*root_); }

}  // namespace pfm
