#pragma once

#include "mcca/channel_mac.hpp"
#include "mcca/topology.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

namespace mcca::negotiation {

using SessionId = std::uint64_t;

enum class Phase { idle, prepared, requested, replied, notifying, committed, aborted };

enum class MessageKind {
  prep_broadcast,
  adjust_request,
  adjust_reply,
  adjust_notification,
  adjust_info_broadcast,
  route_update,
  route_accept,
};

std::string_view to_string(Phase phase);
std::string_view to_string(MessageKind kind);

/// Request, reply and notification go out three times back to back.
bool is_triple_sent(MessageKind kind);

struct ChannelDelta {
  mac::Link link;
  int channel = 0;
  friend bool operator==(const ChannelDelta&, const ChannelDelta&) = default;
};

struct RouteDelta {
  int flow = 0;
  std::vector<int> path;
  friend bool operator==(const RouteDelta&, const RouteDelta&) = default;
};

/// Changes one affected node takes on when the adjustment commits.
struct NodeDelta {
  int node = 0;
  std::vector<ChannelDelta> channels;
  std::optional<double> power;
  std::vector<RouteDelta> routes;
  friend bool operator==(const NodeDelta&, const NodeDelta&) = default;
};

struct Proposal {
  std::vector<NodeDelta> deltas;

  std::set<int> affected() const;
  friend bool operator==(const Proposal&, const Proposal&) = default;
};

/// Channel / power / route state an adjustment acts on. apply() changes every
/// delta in one call.
struct AdjustableState {
  std::map<mac::Link, int> channels;
  std::map<int, double> powers;
  std::map<int, std::vector<int>> routes;

  void apply(const Proposal& proposal);
  friend bool operator==(const AdjustableState&, const AdjustableState&) = default;
};

struct ProtocolMessage {
  MessageKind kind = MessageKind::prep_broadcast;
  SessionId session_id = 0;
  int sender = 0;
  int receiver = 0;
  std::variant<std::monostate, Proposal, bool, int> payload;
};

struct NegotiationSession {
  SessionId session_id = 0;
  int initiator = 0;
  std::set<int> participators;
  std::set<int> onlookers;
  Phase phase = Phase::idle;
  double reply_deadline = 0.0;
  double notify_deadline = 0.0;
  Proposal proposal;
  std::map<int, bool> replies;
  std::set<int> requested;  // participators that logically received the request
  std::set<int> notified;   // participators that logically received the notification
  int attempt = 1;

  bool active() const;
  /// Affected nodes plus onlookers.
  std::set<int> interference_area() const;
};

struct DeliveryOutcome {
  int copies_sent = 0;
  int copies_delivered = 0;
  bool delivered = false;
};

/// Sends three copies; the message gets through iff at least one survives.
DeliveryOutcome send_reliable(const ProtocolMessage& msg, double link_loss_p,
                              std::mt19937_64& rng);

struct TraceEntry {
  double time = 0.0;
  SessionId session_id = 0;
  int node = 0;
  std::string event;
  std::optional<MessageKind> kind;
  Phase phase_before = Phase::idle;
  Phase phase_after = Phase::idle;
  int copy = -1;
};

/// time,session,node,event,kind,phase_before,phase_after,copy
void write_trace(std::ostream& out, const std::vector<TraceEntry>& trace);

struct Config {
  double hop_delay = 0.01;  // one physical copy over one hop [s]
  double loss_p = 0.0;      // per-copy loss probability
  int max_attempts = 3;     // initiator attempts including the first
  int route_retry_limit = 8;
  std::uint64_t seed = 1;
  bool check_invariants = false;

  /// Time for all three copies over one hop.
  double max_delivery_delay() const { return 3.0 * hop_delay; }
  double reply_timeout() const { return 3.0 * max_delivery_delay(); }
  double notify_timeout() const { return max_delivery_delay(); }
};

/// Decides delivery of physical copy `copy` (0..2) of a message.
using LossModel = std::function<bool(const ProtocolMessage& msg, int copy)>;
using FeasibilityFn = std::function<bool(int participator, const Proposal& proposal)>;
using ApplyFn = std::function<void(const Proposal& proposal)>;

struct StalePacket {
  int flow = 0;
  int source = 0;
  int path_version = 0;
};

struct TunnelResult {
  bool tunneled = false;
  bool update_sent = false;
  std::vector<int> path;
};

/// Runs adjustment negotiations and route-change bookkeeping on a private
/// event queue. All handlers are deterministic functions of (state, event).
class NegotiationManager {
 public:
  NegotiationManager(Config config, ApplyFn apply, FeasibilityFn feasible = {});

  void set_loss_model(LossModel model) { loss_model_ = std::move(model); }

  /// Starts a session, or returns nullopt when the new interference area
  /// overlaps an active session.
  std::optional<SessionId> initiate(int initiator, const Proposal& proposal,
                                    const topology::TopologyGraphs& topo, double now);

  /// Reply handler; replies from non-participators are ignored and traced.
  void on_reply(SessionId id, int from, bool agree, double now);
  /// Timer handler for the pending reply / notification deadline.
  void on_timer(SessionId id, double now);

  /// Installs a committed route change at `node`.
  void record_route_change(int node, int flow, std::vector<int> path, int version);
  /// Handles a packet carrying an outdated path at `node`: tunnels it and
  /// asks the source to refresh its cache.
  TunnelResult route_update(int node, const StalePacket& packet, double now);
  bool has_route_change(int node) const;
  std::optional<int> source_route_version(int source, int flow) const;

  void run_until(double t);
  void run_until_idle();
  std::optional<double> next_event_time() const;
  double now() const { return now_; }

  const NegotiationSession& session(SessionId id) const;
  const std::map<SessionId, NegotiationSession>& sessions() const { return sessions_; }
  const std::vector<TraceEntry>& trace() const { return trace_; }
  void clear_trace() { trace_.clear(); }
  void set_tracing(bool on) { tracing_ = on; }

  /// No two active sessions share a node of their interference areas.
  bool exclusiveness_holds() const;
  std::size_t invariant_violations() const { return violations_; }

  std::size_t committed_count() const { return committed_; }
  std::size_t aborted_count() const { return aborted_; }

 private:
  enum class EventType { deliver, reply_timer, notify_timer, retry, route_retry };

  struct Event {
    double time = 0.0;
    std::uint64_t seq = 0;
    EventType type = EventType::deliver;
    SessionId session = 0;
    ProtocolMessage msg;
    int copy = 0;
    int node = 0;
    int flow = 0;
    int attempt = 0;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
    }
  };

  struct RouteEntry {
    std::vector<int> path;
    int version = 0;
    int source = -1;
    bool accepted = false;
    int retries = 0;
  };

  struct PendingRetry {
    int initiator = 0;
    Proposal proposal;
    const topology::TopologyGraphs* topo = nullptr;
  };

  void push(Event ev);
  void dispatch(const Event& ev);
  void send(const ProtocolMessage& msg, double now);
  void deliver(const ProtocolMessage& msg, int copy, double now);
  void on_logical_delivery(const ProtocolMessage& msg, double now);
  void transition(NegotiationSession& s, Phase next, double now, std::string event);
  void finish(NegotiationSession& s, bool commit, double now);
  void broadcast_info(const NegotiationSession& s, double now);
  void release(const NegotiationSession& s);
  void log(double time, SessionId id, int node, std::string event,
           std::optional<MessageKind> kind = std::nullopt, Phase before = Phase::idle,
           Phase after = Phase::idle, int copy = -1);
  void check();

  std::optional<SessionId> start(int initiator, const Proposal& proposal,
                                 const topology::TopologyGraphs& topo, double now, int attempt,
                                 SessionId retry_key);

  Config config_;
  ApplyFn apply_;
  FeasibilityFn feasible_;
  LossModel loss_model_;
  std::mt19937_64 rng_;

  double now_ = 0.0;
  std::uint64_t seq_ = 0;
  SessionId next_session_ = 1;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<SessionId, NegotiationSession> sessions_;
  std::map<int, SessionId> locks_;
  std::set<std::tuple<SessionId, MessageKind, int, int>> seen_;
  std::map<SessionId, PendingRetry> retries_;
  const topology::TopologyGraphs* last_topo_ = nullptr;

  std::map<int, std::map<int, RouteEntry>> route_changes_;  // node -> flow -> entry
  std::map<std::pair<int, int>, int> source_cache_;          // (source, flow) -> version

  std::vector<TraceEntry> trace_;
  bool tracing_ = true;
  std::size_t violations_ = 0;
  std::size_t committed_ = 0;
  std::size_t aborted_ = 0;
};

}  // namespace mcca::negotiation
