#include "mcca/negotiation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mcca::negotiation {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::idle: return "idle";
    case Phase::prepared: return "prepared";
    case Phase::requested: return "requested";
    case Phase::replied: return "replied";
    case Phase::notifying: return "notifying";
    case Phase::committed: return "committed";
    case Phase::aborted: return "aborted";
  }
  return "unknown";
}

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::prep_broadcast: return "prep_broadcast";
    case MessageKind::adjust_request: return "adjust_request";
    case MessageKind::adjust_reply: return "adjust_reply";
    case MessageKind::adjust_notification: return "adjust_notification";
    case MessageKind::adjust_info_broadcast: return "adjust_info_broadcast";
    case MessageKind::route_update: return "route_update";
    case MessageKind::route_accept: return "route_accept";
  }
  return "unknown";
}

bool is_triple_sent(MessageKind kind) {
  return kind == MessageKind::adjust_request || kind == MessageKind::adjust_reply ||
         kind == MessageKind::adjust_notification;
}

std::set<int> Proposal::affected() const {
  std::set<int> out;
  for (const NodeDelta& d : deltas) out.insert(d.node);
  return out;
}

void AdjustableState::apply(const Proposal& proposal) {
  for (const NodeDelta& d : proposal.deltas) {
    for (const ChannelDelta& c : d.channels) channels[mac::make_link(c.link.first, c.link.second)] = c.channel;
    if (d.power) powers[d.node] = *d.power;
    for (const RouteDelta& r : d.routes) routes[r.flow] = r.path;
  }
}

bool NegotiationSession::active() const {
  return phase == Phase::prepared || phase == Phase::requested || phase == Phase::replied ||
         phase == Phase::notifying;
}

std::set<int> NegotiationSession::interference_area() const {
  std::set<int> area = onlookers;
  area.insert(initiator);
  area.insert(participators.begin(), participators.end());
  return area;
}

DeliveryOutcome send_reliable(const ProtocolMessage& /*msg*/, double link_loss_p,
                              std::mt19937_64& rng) {
  if (!(link_loss_p >= 0.0 && link_loss_p <= 1.0))
    throw std::invalid_argument("send_reliable: loss probability must lie in [0,1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DeliveryOutcome out;
  for (int copy = 0; copy < 3; ++copy) {
    ++out.copies_sent;
    if (unit(rng) >= link_loss_p) ++out.copies_delivered;
  }
  out.delivered = out.copies_delivered > 0;
  return out;
}

void write_trace(std::ostream& out, const std::vector<TraceEntry>& trace) {
  out << "time,session,node,event,kind,phase_before,phase_after,copy\n";
  for (const TraceEntry& e : trace) {
    out << e.time << ',' << e.session_id << ',' << e.node << ',' << e.event << ','
        << (e.kind ? to_string(*e.kind) : std::string_view{}) << ',' << to_string(e.phase_before)
        << ',' << to_string(e.phase_after) << ',' << e.copy << '\n';
  }
}

NegotiationManager::NegotiationManager(Config config, ApplyFn apply, FeasibilityFn feasible)
    : config_(config), apply_(std::move(apply)), feasible_(std::move(feasible)), rng_(config.seed) {
  if (!(config_.loss_p >= 0.0 && config_.loss_p <= 1.0))
    throw std::invalid_argument("negotiation: loss_p must lie in [0,1]");
  if (!(config_.hop_delay > 0.0)) throw std::invalid_argument("negotiation: hop_delay must be > 0");
  if (!apply_) throw std::invalid_argument("negotiation: apply callback required");
  if (!feasible_) feasible_ = [](int, const Proposal&) { return true; };
  loss_model_ = [this](const ProtocolMessage&, int) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return unit(rng_) >= config_.loss_p;
  };
}

void NegotiationManager::log(double time, SessionId id, int node, std::string event,
                             std::optional<MessageKind> kind, Phase before, Phase after, int copy) {
  if (!tracing_) return;
  trace_.push_back({time, id, node, std::move(event), kind, before, after, copy});
}

void NegotiationManager::push(Event ev) {
  ev.seq = seq_++;
  queue_.push(std::move(ev));
}

void NegotiationManager::check() {
  if (config_.check_invariants && !exclusiveness_holds()) ++violations_;
}

bool NegotiationManager::exclusiveness_holds() const {
  std::map<int, SessionId> owner;
  for (const auto& [id, s] : sessions_) {
    if (!s.active()) continue;
    for (int n : s.interference_area()) {
      auto [it, inserted] = owner.emplace(n, id);
      if (!inserted && it->second != id) return false;
    }
  }
  return true;
}

void NegotiationManager::send(const ProtocolMessage& msg, double now) {
  const int copies = is_triple_sent(msg.kind) ? 3 : 1;
  for (int copy = 0; copy < copies; ++copy) {
    const bool survives = loss_model_(msg, copy);
    log(now, msg.session_id, msg.sender, survives ? "send" : "send_lost", msg.kind, Phase::idle,
        Phase::idle, copy);
    if (!survives) continue;
    Event ev;
    ev.time = now + static_cast<double>(copy + 1) * config_.hop_delay;
    ev.type = EventType::deliver;
    ev.session = msg.session_id;
    ev.msg = msg;
    ev.copy = copy;
    push(std::move(ev));
  }
}

void NegotiationManager::transition(NegotiationSession& s, Phase next, double now,
                                    std::string event) {
  const Phase before = s.phase;
  s.phase = next;
  log(now, s.session_id, s.initiator, std::move(event), std::nullopt, before, next);
}

void NegotiationManager::release(const NegotiationSession& s) {
  for (int n : s.interference_area()) {
    auto it = locks_.find(n);
    if (it != locks_.end() && it->second == s.session_id) locks_.erase(it);
  }
}

std::optional<SessionId> NegotiationManager::initiate(int initiator, const Proposal& proposal,
                                                      const topology::TopologyGraphs& topo,
                                                      double now) {
  run_until(now);
  return start(initiator, proposal, topo, now, 1, 0);
}

std::optional<SessionId> NegotiationManager::start(int initiator, const Proposal& proposal,
                                                   const topology::TopologyGraphs& topo,
                                                   double now, int attempt, SessionId retry_key) {
  now_ = std::max(now_, now);
  last_topo_ = &topo;
  NegotiationSession s;
  s.initiator = initiator;
  s.proposal = proposal;
  s.attempt = attempt;
  std::set<int> affected = proposal.affected();
  affected.insert(initiator);
  for (int n : affected)
    if (n != initiator) s.participators.insert(n);
  for (int n : affected)
    for (int m : topology::two_hop_neighborhood(topo, n))
      if (!affected.contains(m)) s.onlookers.insert(m);

  for (int n : s.interference_area()) {
    if (locks_.contains(n)) {
      log(now, 0, initiator, "refused_overlap");
      return std::nullopt;
    }
  }

  s.session_id = next_session_++;
  const SessionId id = s.session_id;
  for (int n : s.interference_area()) locks_[n] = id;
  auto& session = sessions_.emplace(id, std::move(s)).first->second;
  if (retry_key != 0) log(now, id, initiator, "retry_of_" + std::to_string(retry_key));
  transition(session, Phase::prepared, now, "initiate");

  // Participators and onlookers hold off their own channel checks.
  std::set<int> notify = session.participators;
  notify.insert(session.onlookers.begin(), session.onlookers.end());
  for (int n : notify)
    send({MessageKind::prep_broadcast, id, initiator, n, std::monostate{}}, now);

  if (session.participators.empty()) {
    finish(session, true, now);
    check();
    return id;
  }

  for (int p : session.participators)
    send({MessageKind::adjust_request, id, initiator, p, session.proposal}, now);
  session.reply_deadline = now + config_.reply_timeout();
  transition(session, Phase::requested, now, "request_sent");
  Event timer;
  timer.time = session.reply_deadline;
  timer.type = EventType::reply_timer;
  timer.session = id;
  push(std::move(timer));
  check();
  return id;
}

void NegotiationManager::on_reply(SessionId id, int from, bool agree, double now) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return;
  NegotiationSession& s = it->second;
  if (!s.participators.contains(from)) {
    log(now, id, from, "warn_reply_from_non_participator", MessageKind::adjust_reply, s.phase,
        s.phase);
    return;
  }
  if (s.phase != Phase::requested) return;
  if (s.replies.contains(from)) return;
  s.replies[from] = agree;
  if (!agree) {
    finish(s, false, now);
    return;
  }
  if (s.replies.size() < s.participators.size()) return;

  transition(s, Phase::replied, now, "all_agreed");
  for (int p : s.participators)
    send({MessageKind::adjust_notification, id, s.initiator, p, std::monostate{}}, now);
  s.notify_deadline = now + config_.notify_timeout();
  transition(s, Phase::notifying, now, "notification_sent");
  Event timer;
  timer.time = s.notify_deadline;
  timer.type = EventType::notify_timer;
  timer.session = id;
  push(std::move(timer));
}

void NegotiationManager::on_timer(SessionId id, double now) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return;
  NegotiationSession& s = it->second;
  if (s.phase == Phase::requested && now >= s.reply_deadline) {
    finish(s, false, now);
  } else if (s.phase == Phase::notifying && now >= s.notify_deadline) {
    finish(s, s.notified == s.participators, now);
  }
}

void NegotiationManager::finish(NegotiationSession& s, bool commit, double now) {
  if (commit) {
    apply_(s.proposal);
    transition(s, Phase::committed, now, "commit");
    ++committed_;
    broadcast_info(s, now);
  } else {
    transition(s, Phase::aborted, now, "abort");
    ++aborted_;
  }
  release(s);
  if (!commit && s.attempt < config_.max_attempts && last_topo_) {
    Event retry;
    retry.time = now + config_.reply_timeout() * std::pow(2.0, s.attempt - 1);
    retry.type = EventType::retry;
    retry.session = s.session_id;
    retry.node = s.initiator;
    retry.attempt = s.attempt + 1;
    retries_[s.session_id] = {s.initiator, s.proposal, last_topo_};
    push(std::move(retry));
  }
}

void NegotiationManager::broadcast_info(const NegotiationSession& s, double now) {
  std::set<int> senders = s.participators;
  senders.insert(s.initiator);
  for (int from : senders)
    for (int to : s.onlookers)
      send({MessageKind::adjust_info_broadcast, s.session_id, from, to, std::monostate{}}, now);
}

void NegotiationManager::deliver(const ProtocolMessage& msg, int copy, double now) {
  const auto key = std::make_tuple(msg.session_id, msg.kind, msg.sender, msg.receiver);
  const bool route_msg =
      msg.kind == MessageKind::route_update || msg.kind == MessageKind::route_accept;
  if (!route_msg && !seen_.insert(key).second) {
    log(now, msg.session_id, msg.receiver, "duplicate", msg.kind, Phase::idle, Phase::idle, copy);
    return;
  }
  log(now, msg.session_id, msg.receiver, "deliver", msg.kind, Phase::idle, Phase::idle, copy);
  on_logical_delivery(msg, now);
}

void NegotiationManager::on_logical_delivery(const ProtocolMessage& msg, double now) {
  switch (msg.kind) {
    case MessageKind::adjust_request: {
      auto it = sessions_.find(msg.session_id);
      if (it == sessions_.end()) return;
      NegotiationSession& s = it->second;
      s.requested.insert(msg.receiver);
      const bool agree = feasible_(msg.receiver, std::get<Proposal>(msg.payload));
      send({MessageKind::adjust_reply, s.session_id, msg.receiver, s.initiator, agree}, now);
      for (int o : s.onlookers)
        send({MessageKind::prep_broadcast, s.session_id, msg.receiver, o, std::monostate{}}, now);
      break;
    }
    case MessageKind::adjust_reply:
      on_reply(msg.session_id, msg.sender, std::get<bool>(msg.payload), now);
      break;
    case MessageKind::adjust_notification: {
      auto it = sessions_.find(msg.session_id);
      if (it != sessions_.end()) it->second.notified.insert(msg.receiver);
      break;
    }
    case MessageKind::route_update: {
      // Receiver is the traffic source; refresh its cache and confirm.
      const int flow = std::get<int>(msg.payload);
      auto node_it = route_changes_.find(msg.sender);
      if (node_it != route_changes_.end()) {
        auto entry = node_it->second.find(flow);
        if (entry != node_it->second.end())
          source_cache_[{msg.receiver, flow}] = entry->second.version;
      }
      send({MessageKind::route_accept, 0, msg.receiver, msg.sender, flow}, now);
      break;
    }
    case MessageKind::route_accept: {
      const int flow = std::get<int>(msg.payload);
      auto node_it = route_changes_.find(msg.receiver);
      if (node_it == route_changes_.end()) break;
      auto entry = node_it->second.find(flow);
      if (entry != node_it->second.end()) entry->second.accepted = true;
      const bool all = std::all_of(node_it->second.begin(), node_it->second.end(),
                                   [](const auto& kv) { return kv.second.accepted; });
      if (all) {
        route_changes_.erase(node_it);
        log(now, 0, msg.receiver, "route_record_cleared");
      }
      break;
    }
    case MessageKind::prep_broadcast:
    case MessageKind::adjust_info_broadcast:
      break;
  }
}

void NegotiationManager::record_route_change(int node, int flow, std::vector<int> path,
                                             int version) {
  RouteEntry& e = route_changes_[node][flow];
  e.path = std::move(path);
  e.version = version;
  e.accepted = false;
  e.retries = 0;
}

TunnelResult NegotiationManager::route_update(int node, const StalePacket& packet, double now) {
  run_until(now);
  now_ = std::max(now_, now);
  TunnelResult out;
  auto node_it = route_changes_.find(node);
  if (node_it == route_changes_.end()) return out;
  auto entry = node_it->second.find(packet.flow);
  if (entry == node_it->second.end() || packet.path_version >= entry->second.version) return out;

  out.tunneled = true;
  out.path = entry->second.path;
  log(now, 0, node, "tunnel");
  if (!entry->second.accepted) {
    entry->second.source = packet.source;
    send({MessageKind::route_update, 0, node, packet.source, packet.flow}, now);
    out.update_sent = true;
    Event retry;
    retry.time = now + config_.reply_timeout();
    retry.type = EventType::route_retry;
    retry.node = node;
    retry.flow = packet.flow;
    push(std::move(retry));
  }
  return out;
}

bool NegotiationManager::has_route_change(int node) const { return route_changes_.contains(node); }

std::optional<int> NegotiationManager::source_route_version(int source, int flow) const {
  auto it = source_cache_.find({source, flow});
  if (it == source_cache_.end()) return std::nullopt;
  return it->second;
}

const NegotiationSession& NegotiationManager::session(SessionId id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw std::out_of_range("unknown negotiation session");
  return it->second;
}

std::optional<double> NegotiationManager::next_event_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().time;
}

void NegotiationManager::dispatch(const Event& ev) {
  switch (ev.type) {
    case EventType::deliver:
      deliver(ev.msg, ev.copy, ev.time);
      break;
    case EventType::reply_timer:
    case EventType::notify_timer: {
      // A timer only acts on the phase that armed it.
      auto it = sessions_.find(ev.session);
      if (it == sessions_.end()) break;
      const Phase armed = ev.type == EventType::reply_timer ? Phase::requested : Phase::notifying;
      if (it->second.phase == armed) on_timer(ev.session, ev.time);
      break;
    }
    case EventType::retry: {
      auto it = retries_.find(ev.session);
      if (it == retries_.end()) break;
      PendingRetry pending = it->second;
      retries_.erase(it);
      auto started = start(pending.initiator, pending.proposal, *pending.topo, ev.time, ev.attempt,
                           ev.session);
      if (!started && ev.attempt < config_.max_attempts) {
        Event again = ev;
        again.time = ev.time + config_.reply_timeout() * std::pow(2.0, ev.attempt - 1);
        again.attempt = ev.attempt + 1;
        retries_[ev.session] = pending;
        push(std::move(again));
      }
      break;
    }
    case EventType::route_retry: {
      auto node_it = route_changes_.find(ev.node);
      if (node_it == route_changes_.end()) break;
      auto entry = node_it->second.find(ev.flow);
      if (entry == node_it->second.end() || entry->second.accepted) break;
      if (entry->second.retries >= config_.route_retry_limit) break;
      ++entry->second.retries;
      send({MessageKind::route_update, 0, ev.node, entry->second.source, ev.flow}, ev.time);
      Event again = ev;
      again.time = ev.time + config_.reply_timeout();
      push(std::move(again));
      break;
    }
  }
}

void NegotiationManager::run_until(double t) {
  while (!queue_.empty() && queue_.top().time <= t) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = std::max(now_, ev.time);
    dispatch(ev);
    check();
  }
  now_ = std::max(now_, t);
}

void NegotiationManager::run_until_idle() {
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = std::max(now_, ev.time);
    dispatch(ev);
    check();
  }
}

}  // namespace mcca::negotiation
