#pragma once

#include "pfm/codec.hpp"
#include "pfm/engine.hpp"
#include "pfm/heap.hpp"
#include "pfm/policy.hpp"
#include "pfm/types.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pfm {

inline constexpr std::string_view kManagerService = "__manager";
inline constexpr std::string_view kManagerType = "__Manager";

struct AgentInfo {
  std::string agent_type = "RAFDA";
  std::string agent_instance;  // defaults to the node name
};

/// Metadata a client declares with a call. Empty members fall back to the
/// client node's own agent info and the "main" thread.
struct CallOptions {
  std::string agent_type;
  std::string agent_instance;
  std::string thread;
};

enum class CallStatus { Pending, Completed, Denied, Failed };

std::string_view to_string(CallStatus s);

struct CallRecord {
  CallId id;
  NodeId client;
  NodeId server;
  std::string agent_type;
  std::string agent_instance;
  std::string thread;
  std::string service;
  std::string method;
  std::vector<std::string> args;  // canonical wire text
  std::string result;
  CallStatus status = CallStatus::Pending;
  std::string error;
};

struct Service {
  std::string exposed_type;
  ObjRef impl;
};

/// One simulated address space.
struct Node {
  Node(NodeId id, std::string name, AgentInfo agent);
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  NodeId id;
  std::string name;
  AgentInfo agent;
  TypeRegistry types;
  Heap heap;
  Engine engine;
  std::map<std::string, Service, std::less<>> services;
};

class Simulator;

/// What a method body sees while it runs on the server.
struct MethodEnv {
  Simulator& sim;
  NodeId node;
  ObjRef self;
  std::vector<Value> args;
  CallId call;
  CallOptions caller;

  Heap& heap() const;
  const Value& field(std::string_view name) const;
  void set_field(std::string_view name, Value v) const;
};

using MethodBody = std::function<Value(MethodEnv&)>;

class Simulator {
 public:
  Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  NodeId create_node(std::string name, AgentInfo agent = {});
  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  Node& node(std::string_view name);
  std::vector<NodeId> node_ids() const;

  void deploy(NodeId node, std::string service, std::string exposed_type, const ObjRef& impl);

  /// Body for `type.method`; subtypes inherit it. Without a body, getX / x()
  /// read field x and setX(v) writes it.
  void set_body(std::string type, std::string method, MethodBody body);

  /// Synchronous remote call through the full policy pipeline.
  Value invoke(NodeId client, NodeId server, std::string_view service, std::string_view method,
               std::vector<Value> args, const CallOptions& opts = {});
  /// Calls a method on the object behind a proxy held by `client`.
  Value proxy_invoke(NodeId client, const ObjRef& proxy, std::string_view method, std::vector<Value> args,
                     const CallOptions& opts = {});
  /// Reads a member through a proxy: cached entries locally, anything else
  /// remotely (field read or zero-parameter method). Local objects read directly.
  Value proxy_read(NodeId client, const ObjRef& proxy, std::string_view member, const CallOptions& opts = {});
  /// Runs a method body on a local object without any transmission.
  Value local_call(NodeId node, const ObjRef& target, std::string_view method, std::vector<Value> args,
                   const CallOptions& opts = {});

  /// Placement resolved on the requesting node; remote creation yields a proxy.
  Value instantiate(NodeId requester, std::string_view type, const CallOptions& opts = {});

  void set_partition(NodeId a, NodeId b, bool down);
  bool partitioned(NodeId a, NodeId b) const;

  TransformRegistry& transforms() { return transforms_; }
  DeciderRegistry& deciders() { return deciders_; }
  const DeciderRegistry& deciders() const { return deciders_; }

  const std::vector<CallRecord>& calls() const { return calls_; }
  const CallRecord& call(CallId id) const;
  /// Messages that crossed between distinct nodes.
  std::uint64_t network_events() const { return network_events_; }

  void set_tracing(bool on) { tracing_ = on; }
  std::vector<std::string>& trace() { return trace_; }

 private:
  struct Target {
    NodeId node;
    ObjRef ref;
  };

  struct Visit {
    CallId call;
    NodeId home_node;
    NodeId visit_node;
    ObjRef original;
    ObjRef copy;
    std::map<ObjectId, ObjRef> origins;  // visitor copies -> sender objects
  };

  Value call_object(NodeId client, Target target, const std::string& exposed, const std::string& service,
                    const std::string& method, std::vector<Value> args, const CallOptions& opts,
                    const std::optional<std::string>& field_read);
  Target forward(NodeId node, const ObjRef& ref) const;
  Value dispatch(MethodEnv& env, const std::string& method);
  const MethodBody* find_body(const TypeRegistry& types, const std::string& type, const std::string& method) const;
  CallOptions complete(NodeId client, const CallOptions& opts) const;

  Value transmit(NodeId from, NodeId to, const Value& v, const TransmissionMeta& meta, CallRecord& rec,
                 bool is_result, const std::string& what);
  void finalize_moves(NodeId from, NodeId to, const Encoded& enc, const Decoded& dec, CallId call);
  void end_visits(CallId call);
  Value map_back(const Visit& visit, const Value& v);

  void install_manager(Node& n);
  static std::string method_dim(const std::string& exposed, const std::string& method);

  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<std::string, std::map<std::string, MethodBody>> bodies_;
  std::set<std::pair<std::uint32_t, std::uint32_t>> partitions_;
  std::vector<CallRecord> calls_;
  std::vector<Visit> visits_;
  TransformRegistry transforms_;
  DeciderRegistry deciders_;
  std::uint64_t next_call_ = 1;
  std::uint64_t network_events_ = 0;
  bool tracing_ = false;
  std::vector<std::string> trace_;
};

}  // namespace pfm
