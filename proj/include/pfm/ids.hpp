#pragma once

#include <compare>
#include <cstdint>
#include <functional>

namespace pfm {

/// Identifies one simulated address space.
struct NodeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

/// Object identity within a node; never reused.
struct ObjectId {
  std::uint64_t value = 0;
  auto operator<=>(const ObjectId&) const = default;
};

struct CallId {
  std::uint64_t value = 0;
  auto operator<=>(const CallId&) const = default;
};

struct RuleHandle {
  std::uint64_t value = 0;
  auto operator<=>(const RuleHandle&) const = default;
};

}  // namespace pfm
