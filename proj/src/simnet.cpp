#include "pfm/simnet.hpp"

#include "pfm/error.hpp"

#include <algorithm>
#include <cctype>
#include <deque>

namespace pfm {

std::string_view to_string(CallStatus s) {
  switch (s) {
    case CallStatus::Pending: return "pending";
    case CallStatus::Completed: return "completed";
    case CallStatus::Denied: return "denied";
    case CallStatus::Failed: return "failed";
  }
  return "?";
}

Node::Node(NodeId id_, std::string name_, AgentInfo agent_)
    : id(id_), name(std::move(name_)), agent(std::move(agent_)), heap(id_, types), engine(&types) {
  if (agent.agent_instance.empty()) agent.agent_instance = name;
}

Heap& MethodEnv::heap() const { return sim.node(node).heap; }
const Value& MethodEnv::field(std::string_view name) const { return heap().field(self, name); }
void MethodEnv::set_field(std::string_view name, Value v) const { heap().set_field(self, name, std::move(v)); }

namespace {

TypeDescriptor manager_type() {
  TypeDescriptor d;
  d.name = std::string(kManagerType);
  d.methods = {
      MethodDecl{"set_rule",
                 {{"kind", "string"}, {"pattern", "string"}, {"policy", "string"}, {"subtypes", "boolean"}, {"scope", "string"}},
                 "long"},
      MethodDecl{"remove_rule", {{"handle", "long"}}, "void"},
      MethodDecl{"list_rules", {{"kind", "string"}}, "string"},
  };
  return d;
}

PolicyKind kind_arg(const Value& v) {
  auto k = policy_kind_from(as_text(v.primitive()));
  if (!k) fail(ErrorCode::PolicySyntax, "unknown policy kind " + as_text(v.primitive()));
  return *k;
}

std::string package_or_none(std::string_view type) {
  auto p = package_of(type);
  return p.empty() ? std::string(kNone) : p;
}

bool accessor_field(const TypeDescriptor& d, const std::string& method, std::size_t arity, std::string& field) {
  auto has = [&](std::string f) {
    if (!d.find_field(f)) return false;
    field = std::move(f);
    return true;
  };
  auto property = [](std::string_view rest) {
    std::string f(rest);
    if (!f.empty()) f[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(f[0])));
    return f;
  };
  if (arity == 0 && method.size() > 3 && method.rfind("get", 0) == 0)
    return has(property(method.substr(3))) || has(method.substr(3));
  if (arity == 0) return has(method);
  if (arity == 1 && method.size() > 3 && method.rfind("set", 0) == 0)
    return has(property(method.substr(3))) || has(method.substr(3));
  return false;
}

}  // namespace

Simulator::Simulator() {
  set_body(std::string(kManagerType), "set_rule", [](MethodEnv& env) {
    Node& n = env.sim.node(env.node);
    auto kind = kind_arg(env.args[0]);
    auto policy = parse_policy(kind, as_text(env.args[2].primitive()), env.sim.deciders());
    auto scope_text = as_text(env.args[4].primitive());
    auto scope = temporal_scope_from(scope_text);
    if (!scope) fail(ErrorCode::PolicySyntax, "unknown temporal scope " + scope_text);
    bool subtypes = as_integer(env.args[3].primitive()) != 0;
    auto h = n.engine.add_rule(kind, as_text(env.args[1].primitive()), std::move(policy), subtypes, *scope);
    return Value::of_long(static_cast<std::int64_t>(h.value));
  });
  set_body(std::string(kManagerType), "remove_rule", [](MethodEnv& env) {
    auto h = as_integer(env.args[0].primitive());
    env.sim.node(env.node).engine.remove_rule(RuleHandle{static_cast<std::uint64_t>(h)});
    return Value::null();
  });
  set_body(std::string(kManagerType), "list_rules", [](MethodEnv& env) {
    const Node& n = env.sim.node(env.node);
    std::string out;
    for (const auto& r : n.engine.list_rules(kind_arg(env.args[0]))) {
      out += "#" + std::to_string(r.handle.value) + " " + r.pattern + " -> " + r.policy;
      if (r.match_subtypes) out += " subtypes";
      if (r.scope == TemporalScope::CurrentCall) out += " current_call";
      out += "\n";
    }
    return Value::of_string(out);
  });
}

NodeId Simulator::create_node(std::string name, AgentInfo agent) {
  for (const auto& n : nodes_)
    if (n->name == name) fail(ErrorCode::DuplicateNode, name);
  NodeId id{static_cast<std::uint32_t>(nodes_.size() + 1)};
  nodes_.push_back(std::make_unique<Node>(id, std::move(name), std::move(agent)));
  install_manager(*nodes_.back());
  return id;
}

void Simulator::install_manager(Node& n) {
  n.types.register_type(manager_type());
  ObjRef impl = n.heap.allocate_default(kManagerType);
  n.services.emplace(std::string(kManagerService), Service{std::string(kManagerType), impl});
}

Node& Simulator::node(NodeId id) {
  if (id.value == 0 || id.value > nodes_.size()) fail(ErrorCode::UnknownNode, "node " + std::to_string(id.value));
  return *nodes_[id.value - 1];
}

const Node& Simulator::node(NodeId id) const { return const_cast<Simulator*>(this)->node(id); }

Node& Simulator::node(std::string_view name) {
  for (auto& n : nodes_)
    if (n->name == name) return *n;
  fail(ErrorCode::UnknownNode, std::string(name));
}

std::vector<NodeId> Simulator::node_ids() const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_) out.push_back(n->id);
  return out;
}

void Simulator::deploy(NodeId id, std::string service, std::string exposed, const ObjRef& impl) {
  Node& n = node(id);
  if (n.services.count(service)) fail(ErrorCode::DuplicateService, service + " on " + n.name);
  const auto& obj = n.heap.get(impl);
  if (obj.proxy || obj.move.residency != Residency::Resident)
    fail(ErrorCode::DanglingRef, "service implementation must be resident on " + n.name);
  if (!n.types.is_subtype(obj.type, exposed) && !n.types.structurally_compatible(obj.type, exposed))
    fail(ErrorCode::StructuralMismatch, obj.type + " does not provide " + exposed);
  n.services.emplace(std::move(service), Service{std::move(exposed), impl});
}

void Simulator::set_body(std::string type, std::string method, MethodBody body) {
  bodies_[std::move(type)][std::move(method)] = std::move(body);
}

void Simulator::set_partition(NodeId a, NodeId b, bool down) {
  node(a);
  node(b);
  auto key = std::minmax(a.value, b.value);
  if (down)
    partitions_.insert(key);
  else
    partitions_.erase(key);
}

bool Simulator::partitioned(NodeId a, NodeId b) const { return partitions_.count(std::minmax(a.value, b.value)) > 0; }

const CallRecord& Simulator::call(CallId id) const {
  for (const auto& c : calls_)
    if (c.id == id) return c;
  fail(ErrorCode::UnknownHandle, "call " + std::to_string(id.value));
}

CallOptions Simulator::complete(NodeId client, const CallOptions& opts) const {
  const Node& c = node(client);
  CallOptions out = opts;
  if (out.agent_type.empty()) out.agent_type = c.agent.agent_type;
  if (out.agent_instance.empty()) out.agent_instance = c.agent.agent_instance;
  if (out.thread.empty()) out.thread = "main";
  return out;
}

std::string Simulator::method_dim(const std::string& exposed, const std::string& method) {
  if (method.rfind("#", 0) == 0) return method;
  return exposed + "." + method + "()";
}

Simulator::Target Simulator::forward(NodeId at, const ObjRef& ref) const {
  const Node& n = node(at);
  const auto& obj = n.heap.get(ref);
  Target t{at, n.heap.ref_of(ref.id)};
  if (obj.proxy) {
    t = Target{obj.proxy->target_node, ObjRef{obj.proxy->target_node, obj.proxy->target_id, obj.proxy->view_type}};
  } else if (obj.move.residency != Residency::Resident) {
    t = Target{obj.move.location->node, *obj.move.location};
  } else {
    return t;
  }
  const Node& next = node(t.node);
  if (!next.heap.contains(t.ref)) fail(ErrorCode::MovedObject, "forwarding target vanished");
  const auto& fwd = next.heap.get(t.ref);
  if (fwd.proxy || fwd.move.residency != Residency::Resident)
    fail(ErrorCode::MovedObject, obj.type + " is not reachable within one forwarding step");
  t.ref = next.heap.ref_of(t.ref.id);
  return t;
}

const MethodBody* Simulator::find_body(const TypeRegistry& types, const std::string& type,
                                       const std::string& method) const {
  std::deque<std::string> queue{type};
  std::set<std::string> seen;
  while (!queue.empty()) {
    std::string t = queue.front();
    queue.pop_front();
    if (!seen.insert(t).second) continue;
    if (auto it = bodies_.find(t); it != bodies_.end())
      if (auto m = it->second.find(method); m != it->second.end()) return &m->second;
    if (const auto* d = types.find(t))
      for (const auto& s : d->supertypes) queue.push_back(s);
  }
  return nullptr;
}

Value Simulator::dispatch(MethodEnv& env, const std::string& method) {
  Node& n = node(env.node);
  const auto& obj = n.heap.get(env.self);
  if (const auto* body = find_body(n.types, obj.type, method)) return (*body)(env);
  std::string field;
  if (accessor_field(n.types.get(obj.type), method, env.args.size(), field)) {
    if (env.args.empty()) return env.field(field);
    env.set_field(field, env.args[0]);
    return Value::null();
  }
  fail(ErrorCode::MethodNotFound, obj.type + "." + method + " has no implementation");
}

Value Simulator::local_call(NodeId at, const ObjRef& target, std::string_view method, std::vector<Value> args,
                            const CallOptions& opts) {
  MethodEnv env{*this, at, node(at).heap.ref_of(target.id), std::move(args), CallId{}, complete(at, opts)};
  return dispatch(env, std::string(method));
}

Value Simulator::invoke(NodeId client, NodeId server, std::string_view service, std::string_view method,
                        std::vector<Value> args, const CallOptions& opts) {
  node(client);
  Node& s = node(server);
  auto it = s.services.find(service);
  if (it == s.services.end()) fail(ErrorCode::UnknownService, std::string(service) + " on " + s.name);
  Service svc = it->second;
  return call_object(client, Target{server, svc.impl}, svc.exposed_type, std::string(service), std::string(method),
                     std::move(args), opts, std::nullopt);
}

Value Simulator::proxy_invoke(NodeId client, const ObjRef& proxy, std::string_view method, std::vector<Value> args,
                              const CallOptions& opts) {
  const auto& obj = node(client).heap.get(proxy);
  if (!obj.proxy && obj.move.residency != Residency::Resident) {
    Target t = forward(client, proxy);
    if (t.node == client) return local_call(client, t.ref, method, std::move(args), opts);
    return call_object(client, t, obj.type, std::string(kNone), std::string(method), std::move(args), opts, std::nullopt);
  }
  if (!obj.proxy) return local_call(client, proxy, method, std::move(args), opts);
  Target t{obj.proxy->target_node, ObjRef{obj.proxy->target_node, obj.proxy->target_id, obj.proxy->view_type}};
  return call_object(client, t, obj.proxy->view_type, std::string(kNone), std::string(method), std::move(args), opts,
                     std::nullopt);
}

Value Simulator::proxy_read(NodeId client, const ObjRef& proxy, std::string_view member, const CallOptions& opts) {
  Node& c = node(client);
  const auto& obj = c.heap.get(proxy);
  if (!obj.proxy) {
    if (obj.move.residency != Residency::Resident) {
      Target t = forward(client, proxy);
      if (t.node == client) return c.heap.field(t.ref, member);
      return call_object(client, t, obj.type, std::string(kNone), "#field:" + std::string(member), {}, opts,
                         std::string(member));
    }
    return c.heap.field(proxy, member);
  }
  const ProxyData data = *obj.proxy;
  for (const auto& [name, v] : data.cached_fields)
    if (name == member) return v;
  for (const auto& [name, v] : data.cached_methods)
    if (name == member) return v;
  Target t{data.target_node, ObjRef{data.target_node, data.target_id, data.view_type}};
  const Node& owner = node(t.node);
  bool is_field = false;
  if (owner.heap.contains(t.ref)) {
    Target fwd = forward(t.node, t.ref);
    const auto& target_obj = node(fwd.node).heap.get(fwd.ref);
    is_field = target_obj.find_field(member) != nullptr;
  }
  if (is_field)
    return call_object(client, t, data.view_type, std::string(kNone), "#field:" + std::string(member), {}, opts,
                       std::string(member));
  return call_object(client, t, data.view_type, std::string(kNone), std::string(member), {}, opts, std::nullopt);
}

Value Simulator::transmit(NodeId from, NodeId to, const Value& v, const TransmissionMeta& base, CallRecord& rec,
                          bool is_result, const std::string& what) {
  Node& f = node(from);
  Node& t = node(to);
  TransmissionMeta meta = base;
  meta.destination_knows = [&t](std::string_view name) { return t.types.contains(name); };
  std::vector<std::string> log;
  EncodeEnv env;
  env.engine = &f.engine;
  env.heap = &f.heap;
  env.transforms = &transforms_;
  env.call_method = [this, from](const ObjRef& ref, const std::string& m) { return local_call(from, ref, m, {}); };
  env.log = tracing_ ? &log : nullptr;

  std::string side = is_result ? "server " + f.name + " encoding result of " : "client " + f.name + " encoding " + what + " of ";
  side += rec.service + "/" + rec.method;
  Encoded enc;
  try {
    enc = encode_transmission(v, meta, env);
  } catch (const Error& e) {
    fail(e.code(), side + ": " + e.detail());
  }
  for (auto& line : log) trace_.push_back("call " + std::to_string(rec.id.value) + " " + f.name + ": " + line);
  std::string text = canonical_bytes(enc.wire);
  if (is_result)
    rec.result = text;
  else
    rec.args.push_back(text);

  Decoded dec;
  try {
    dec = decode_transmission(enc.wire, t.heap, t.types, meta.declared_type);
  } catch (const Error& e) {
    fail(e.code(), t.name + " decoding " + (is_result ? std::string("result") : what) + ": " + e.detail());
  }
  finalize_moves(from, to, enc, dec, rec.id);
  return dec.value;
}

void Simulator::finalize_moves(NodeId from, NodeId to, const Encoded& enc, const Decoded& dec, CallId call) {
  if (enc.moves.empty()) return;
  Node& f = node(from);
  Node& t = node(to);
  for (const auto& m : enc.moves) {
    ObjRef copy = dec.tags.at(m.tag);
    if (m.visit) {
      Visit v{call, from, to, m.original, copy, {}};
      for (const auto& [tag, origin] : enc.tag_origins) v.origins.emplace(dec.tags.at(tag).id, origin);
      f.heap.begin_visit(m.original, copy, call);
      visits_.push_back(std::move(v));
      continue;
    }
    auto homes = f.heap.get(m.original).former_homes;
    f.heap.mark_moved(m.original, copy);
    t.heap.add_former_home(copy, m.original);
    for (const auto& h : homes) {
      if (h.node == to && h.id == copy.id) continue;
      node(h.node).heap.retarget(h, copy);
      t.heap.add_former_home(copy, h);
    }
  }
}

Value Simulator::map_back(const Visit& visit, const Value& v) {
  if (v.is_array()) {
    ArrayValue out{v.array().element_type, {}};
    for (const auto& e : v.array().elements) out.elements.push_back(map_back(visit, e));
    return out;
  }
  if (!v.is_object()) return v;
  const auto& ref = v.object();
  if (auto it = visit.origins.find(ref.id); it != visit.origins.end()) return it->second;
  Node& away = node(visit.visit_node);
  Node& home = node(visit.home_node);
  const auto& obj = away.heap.get(ref);
  if (obj.proxy && obj.proxy->target_node == visit.home_node) return home.heap.ref_of(obj.proxy->target_id);
  ProxyData data = obj.proxy ? *obj.proxy : ProxyData{visit.visit_node, ref.id, obj.type, {}, {}};
  data.cached_fields.clear();
  data.cached_methods.clear();
  return home.heap.allocate_proxy(std::move(data));
}

void Simulator::end_visits(CallId call) {
  std::vector<Visit> ending;
  auto split = std::stable_partition(visits_.begin(), visits_.end(), [&](const Visit& v) { return !(v.call == call); });
  ending.assign(std::make_move_iterator(split), std::make_move_iterator(visits_.end()));
  visits_.erase(split, visits_.end());
  for (const auto& v : ending) {
    Node& away = node(v.visit_node);
    Node& home = node(v.home_node);
    // copy state back over the visited closure
    std::deque<ObjRef> queue{v.copy};
    std::set<ObjectId> seen;
    while (!queue.empty()) {
      ObjRef copy = queue.front();
      queue.pop_front();
      if (!seen.insert(copy.id).second) continue;
      auto origin = v.origins.find(copy.id);
      if (origin == v.origins.end()) continue;
      const auto& obj = away.heap.get(copy);
      if (obj.move.residency != Residency::Resident) continue;
      auto fields = obj.fields;
      for (const auto& [name, value] : fields) {
        std::vector<Value> stack{value};
        while (!stack.empty()) {
          Value x = stack.back();
          stack.pop_back();
          if (x.is_object() && x.object().node == v.visit_node) queue.push_back(x.object());
          if (x.is_array())
            for (const auto& e : x.array().elements) stack.push_back(e);
        }
        home.heap.set_field(origin->second, name, map_back(v, value));
      }
    }
    home.heap.end_visit(v.original);
    away.heap.invalidate_visitor(v.copy, v.original);
  }
}

Value Simulator::call_object(NodeId client, Target target, const std::string& exposed, const std::string& service,
                             const std::string& method, std::vector<Value> args, const CallOptions& given,
                             const std::optional<std::string>& field_read) {
  CallOptions opts = complete(client, given);
  const bool manager = service == kManagerService;

  std::size_t idx = calls_.size();
  calls_.push_back(CallRecord{CallId{next_call_++}, client, target.node, opts.agent_type, opts.agent_instance,
                              opts.thread, service, method, {}, {}, CallStatus::Pending, {}});
  const CallId id = calls_[idx].id;
  auto fail_record = [&](CallStatus status, const Error& e) {
    calls_[idx].status = status;
    calls_[idx].error = std::string(to_string(e.code()));
  };

  bool servicing = false;
  NodeId server = target.node;
  try {
    target = forward(target.node, target.ref);
    server = target.node;
    calls_[idx].server = server;
    if (client != server) {
      if (partitioned(client, server))
        fail(ErrorCode::NetworkDown, node(client).name + " cannot reach " + node(server).name);
      ++network_events_;
    }
    Node& s = node(server);
    const auto& target_obj = s.heap.get(target.ref);

    MethodDecl decl;
    if (field_read) {
      const auto* f = s.types.get(target_obj.type).find_field(*field_read);
      if (!f) fail(ErrorCode::UnknownField, target_obj.type + "." + *field_read);
      decl = MethodDecl{method, {}, f->type};
    } else {
      auto methods = s.types.contains(exposed) ? s.types.all_methods(exposed) : s.types.all_methods(target_obj.type);
      auto m = std::find_if(methods.begin(), methods.end(),
                            [&](const MethodDecl& d) { return d.name == method && d.params.size() == args.size(); });
      if (m == methods.end())
        fail(ErrorCode::MethodNotFound, exposed + "." + method + "/" + std::to_string(args.size()));
      decl = *m;
    }

    ContextValues dims = empty_context();
    dims[index_of(Dimension::Thread)] = opts.thread;
    dims[index_of(Dimension::AgentType)] = opts.agent_type;
    dims[index_of(Dimension::AgentInstance)] = opts.agent_instance;
    dims[index_of(Dimension::Method)] = method_dim(exposed, method);
    dims[index_of(Dimension::Service)] = service;

    AccessContext actx;
    actx.dims = dims;
    actx.dims[index_of(Dimension::ObjectType)] = target_obj.type;
    actx.dims[index_of(Dimension::Package)] = package_or_none(target_obj.type);
    actx.requesting_node = client;
    actx.target = target.ref;
    auto access = s.engine.resolve_access(actx);
    if (const auto* deny = std::get_if<Deny>(&access.policy.v))
      fail(ErrorCode::AccessDenied, node(client).name + " may not call " + service + "/" + method + " on " + s.name +
                                        (deny->reason.empty() ? "" : ": " + deny->reason));

    std::vector<Value> decoded;
    for (std::size_t i = 0; i < args.size(); ++i) {
      TransmissionMeta meta;
      meta.dims = dims;
      meta.dims[index_of(Dimension::AgentType)] = s.agent.agent_type;
      meta.dims[index_of(Dimension::AgentInstance)] = s.agent.agent_instance;
      meta.dims[index_of(Dimension::Parameter)] = decl.params[i].name;
      meta.call_id = id;
      meta.direction = Direction::OutgoingArgument;
      meta.declared_type = decl.params[i].type;
      decoded.push_back(transmit(client, server, args[i], meta, calls_[idx], false, "argument " + decl.params[i].name));
    }

    if (!manager) {
      s.engine.begin_servicing(id);
      servicing = true;
    }
    Value result;
    if (field_read) {
      result = s.heap.field(target.ref, *field_read);
    } else {
      MethodEnv env{*this, server, target.ref, std::move(decoded), id, opts};
      result = dispatch(env, method);
    }

    TransmissionMeta meta;
    meta.dims = dims;
    meta.dims[index_of(Dimension::Parameter)] = std::string(kReturnParameter);
    meta.call_id = id;
    meta.direction = Direction::ReturningResult;
    meta.declared_type = decl.return_type;
    Value out = transmit(server, client, result, meta, calls_[idx], true, "result");

    if (servicing) s.engine.end_servicing(id);
    s.engine.expire_call_scoped(id);
    end_visits(id);
    calls_[idx].status = CallStatus::Completed;
    return out;
  } catch (const Error& e) {
    if (servicing) node(server).engine.end_servicing(id);
    node(server).engine.expire_call_scoped(id);
    end_visits(id);
    fail_record(e.code() == ErrorCode::AccessDenied ? CallStatus::Denied : CallStatus::Failed, e);
    throw;
  }
}

Value Simulator::instantiate(NodeId requester, std::string_view type, const CallOptions& given) {
  CallOptions opts = complete(requester, given);
  Node& r = node(requester);
  InstantiationContext ctx;
  ctx.dims[index_of(Dimension::Thread)] = opts.thread;
  ctx.dims[index_of(Dimension::AgentType)] = opts.agent_type;
  ctx.dims[index_of(Dimension::AgentInstance)] = opts.agent_instance;
  ctx.dims[index_of(Dimension::Method)] = "#new";
  ctx.dims[index_of(Dimension::ObjectType)] = std::string(type);
  ctx.dims[index_of(Dimension::Package)] = package_or_none(type);
  ctx.requesting_node = requester;
  for (const auto& n : nodes_) ctx.census.push_back(NodeCensus{n->id, n->name, n->heap.size()});
  auto placement = r.engine.resolve_placement(ctx);
  if (tracing_) trace_.push_back("instantiate " + std::string(type) + " on " + r.name + " -> " + format_policy(placement.policy));

  const auto* at = std::get_if<CreateAt>(&placement.policy.v);
  if (!at || at->node == r.name) return r.heap.allocate_default(type);

  Node& t = node(std::string_view(at->node));
  if (partitioned(requester, t.id)) fail(ErrorCode::NetworkDown, r.name + " cannot reach " + t.name);
  ++network_events_;
  if (!t.types.contains(type)) t.types.register_type(r.types.get(type));

  AccessContext actx;
  actx.dims = ctx.dims;
  actx.requesting_node = requester;
  auto access = t.engine.resolve_access(actx);
  if (const auto* deny = std::get_if<Deny>(&access.policy.v))
    fail(ErrorCode::AccessDenied, r.name + " may not create " + std::string(type) + " on " + t.name +
                                      (deny->reason.empty() ? "" : ": " + deny->reason));
  ObjRef created = t.heap.allocate_default(type);
  return r.heap.allocate_proxy(ProxyData{t.id, created.id, std::string(type), {}, {}});
}

}  // namespace pfm
