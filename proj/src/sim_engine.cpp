#include "mcca/sim_engine.hpp"

#include "mcca/capacity.hpp"
#include "mcca/channel_mac.hpp"
#include "mcca/flow_admission.hpp"
#include "mcca/power_game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

namespace mcca::sim {

using topology::Point;
using topology::Role;

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::mcca_clss: return "mcca_clss";
    case Mode::baseline_no_coop: return "baseline_no_coop";
    case Mode::strategy_game_only: return "strategy_game_only";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::mcca_clss, Mode::baseline_no_coop, Mode::strategy_game_only})
    if (name == to_string(m)) return m;
  throw std::invalid_argument("unknown mode: " + std::string(name));
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::flow_end: return "flow_end";
    case EventKind::mobility_tick: return "mobility_tick";
    case EventKind::timer_expiry: return "timer_expiry";
    case EventKind::flow_arrival: return "flow_arrival";
    case EventKind::mac_attempt: return "mac_attempt";
    case EventKind::metric_sample: return "metric_sample";
  }
  return "unknown";
}

bool event_before(const Event& a, const Event& b) {
  return std::tuple(a.time, static_cast<int>(a.kind), a.subject, a.seq) <
         std::tuple(b.time, static_cast<int>(b.kind), b.subject, b.seq);
}

namespace {

void require(bool ok, const char* key, const char* reason) {
  if (!ok) throw std::invalid_argument(std::string(key) + ": " + reason);
}

}  // namespace

void SimConfig::validate() const {
  scenario.validate();
  energy.validate();
  require(scenario.node_count >= 0, "scenario.node_count", "must be >= 0");
  require(channel_count >= 1, "mac.channel_count", "must be >= 1");
  require(link_capacity > 0.0, "flow.link_capacity", "must be > 0");
  require(flow_count >= 0, "flow.count", "must be >= 0");
  require(flow_demand > 0.0 && flow_demand <= link_capacity, "flow.demand",
          "must lie in (0, link_capacity]");
  require(mean_session > 0.0, "flow.mean_session", "must be > 0");
  require(mean_idle > 0.0, "flow.mean_idle", "must be > 0");
  require(background_rate >= 0.0, "flow.background_rate", "must be >= 0");
  require(idle_power >= 0.0, "energy.idle_power", "must be >= 0");
  require(tau > 0.0, "game.tau", "must be > 0");
  require(q_max > 0.0, "game.q_max", "must be > 0");
  require(k_local >= 1.0, "energy.k_local", "must be >= 1");
  require(k_longhaul >= 1.0, "energy.k_longhaul", "must be >= 1");
  require(relay_range > 0.0, "scenario.relay_range", "must be > 0");
  require(game_eps > 0.0, "game.eps", "must be > 0");
  require(game_max_iter >= 1, "game.max_iter", "must be >= 1");
  require(game_noise >= 0.0, "game.noise", "must be >= 0");
  require(shared_node_coupling >= 0.0, "game.shared_node_coupling", "must be >= 0");
  require(receiver_cap >= 1, "protocol.receiver_cap", "must be >= 1");
  require(mac_success_p >= 0.0 && mac_success_p <= 1.0, "mac.success_p", "must lie in [0,1]");
  require(quality_floor >= 0.0, "mac.quality_floor", "must be >= 0");
  require(loss_p >= 0.0 && loss_p <= 1.0, "protocol.loss_p", "must lie in [0,1]");
  require(hop_delay > 0.0, "protocol.hop_delay", "must be > 0");
  require(max_attempts >= 1, "protocol.max_attempts", "must be >= 1");
  require(mobility_step >= 0.0, "sim.mobility_step", "must be >= 0");
  require(mobility_tick > 0.0, "sim.mobility_tick", "must be > 0");
  require(sample_interval > 0.0, "sim.sample_interval", "must be > 0");
  require(rebuild_interval > 0.0, "sim.rebuild_interval", "must be > 0");
  require(sim_time > 0.0, "sim.time", "must be > 0");
}

void write_timeseries_csv(std::ostream& out, const std::vector<MetricsFrame>& frames) {
  out << "time,node_count,relative_energy,blocking_prob_pct,addressing_ratio,mean_hops,"
         "max_tolerated_hops,attempts,blocked,injected_bits,delivered_bits,in_flight_bits,"
         "dropped_bits,tx_energy,baseline_energy,idle_energy,negotiations_committed,"
         "negotiations_aborted,max_link_load\n";
  const auto old_precision = out.precision(17);
  for (const MetricsFrame& f : frames) {
    out << f.time << ',' << f.node_count << ',' << f.relative_energy << ',' << f.blocking_prob
        << ',' << f.addressing_ratio << ',' << f.mean_hops << ',' << f.max_tolerated_hops << ','
        << f.attempts << ',' << f.blocked << ',' << f.injected_bits << ',' << f.delivered_bits
        << ',' << f.in_flight_bits << ',' << f.dropped_bits << ',' << f.tx_energy << ','
        << f.baseline_energy << ',' << f.idle_energy << ',' << f.negotiations_committed << ','
        << f.negotiations_aborted << ',' << f.max_link_load << '\n';
  }
  out.precision(old_precision);
}

namespace {

constexpr double kEps = 1e-9;
constexpr double kMinDistance = 1.0;  // reference distance for link budgets [m]

double e_single(const energy::EnergyParams& base, double d, double k) {
  energy::EnergyParams p = base;
  p.j_coop = 1;
  return energy::energy_longhaul(p, {{std::max(d, kMinDistance)}, {k}, 0.0});
}

double e_coop(const energy::EnergyParams& base, double ds, double dp, double spread, double k) {
  energy::EnergyParams p = base;
  p.j_coop = 2;
  const energy::LinkGeometry geom{
      {std::max(ds, kMinDistance), std::max(dp, kMinDistance)}, {k, k}, spread};
  return energy::total_energy_per_bit(p, geom);
}

enum class OptionKind { tree, direct, coop };

struct Allocation {
  OptionKind kind = OptionKind::direct;
  double fraction = 0.0;        // share of the demand
  double energy_per_bit = 0.0;
  int hops = 0;
  std::vector<int> path;        // tree: source ... head
  int partner = -1;             // coop only
  friend bool operator==(const Allocation&, const Allocation&) = default;
};

struct Session {
  int slot = 0;
  int source = 0;
  int bs = 0;
  double demand = 0.0;
  double end_time = 0.0;
  double baseline_per_bit = 0.0;
  double in_flight = 0.0;
  int path_version = 0;
  double next_mac = 0.0;
  std::vector<Allocation> allocs;
};

bool same_route(const std::vector<Allocation>& a, const std::vector<Allocation>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].kind != b[i].kind || a[i].path != b[i].path || a[i].partner != b[i].partner)
      return false;
  return true;
}

struct TreeLink {
  int child = 0;
  int parent = 0;
  double length = 0.0;
  double hop = 0.0;  // sub-hop length after relay placement
  int hops = 1;
  double background = 0.0;
  int cluster = 0;
};

class Engine {
 public:
  Engine(const SimConfig& cfg, Mode mode, double sim_time, std::uint64_t seed)
      : cfg_(cfg),
        mode_(mode),
        sim_time_(sim_time),
        table_(cfg.channel_count),
        mobility_rng_(stream(seed, 1)),
        flow_rng_(stream(seed, 2)),
        mac_rng_(stream(seed, 3)) {
    cfg_.validate();
    if (!(sim_time > 0.0)) throw std::invalid_argument("sim_time: must be > 0");
    cfg_.scenario.seed = seed;
    layout_ = topology::generate_scenario(cfg_.scenario);
    sensors_ = static_cast<int>(layout_.nodes.size() - layout_.cells.size());
    frame_.node_count = sensors_;

    std::vector<Point> pts;
    for (const auto& n : layout_.nodes)
      if (n.role != Role::base_station) pts.push_back(n.position);
    connected_ = topology::check_connectivity(pts, cfg_.relay_range / 2.0).connected;

    negotiation::Config nc;
    nc.hop_delay = cfg_.hop_delay;
    nc.loss_p = cfg_.loss_p;
    nc.max_attempts = cfg_.max_attempts;
    nc.seed = stream(seed, 4)();
    manager_ = std::make_unique<negotiation::NegotiationManager>(
        nc, [this](const negotiation::Proposal& p) { apply_proposal(p); },
        [this](int who, const negotiation::Proposal& p) { return agrees(who, p); });
    manager_->set_tracing(cfg_.trace);

    const double mu = game::maximize_utilities(
                          {game::QuadraticUtility{1.0, 1.0}, game::QuadraticUtility{1.0, 1.0}},
                          {game::QuadraticUtility{1.0, 1.0}, game::QuadraticUtility{1.0, 1.0}})
                          .p_s;
    price_ = mu * cfg_.q_max;
  }

  RunResult run() {
    rebuild(0.0);
    next_rebuild_ = cfg_.rebuild_interval;
    for (int s = 0; s < cfg_.flow_count; ++s) push(exp_draw(cfg_.mean_idle), EventKind::flow_arrival, s);
    push(cfg_.mobility_tick, EventKind::mobility_tick, 0);
    push(0.0, EventKind::metric_sample, 0);

    while (!queue_.empty()) {
      const Event ev = queue_.top();
      if (ev.time > sim_time_ + kEps) break;
      queue_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::flow_end: on_flow_end(ev); break;
        case EventKind::mobility_tick: on_tick(); break;
        case EventKind::timer_expiry: on_timer(); break;
        case EventKind::flow_arrival: on_arrival(ev.subject); break;
        case EventKind::mac_attempt: on_mac(ev); break;
        case EventKind::metric_sample: on_sample(); break;
      }
    }
    now_ = sim_time_;
    if (series_.empty() || series_.back().time + kEps < sim_time_) series_.push_back(snapshot());
    RunResult out;
    out.final = series_.back();
    out.series = std::move(series_);
    out.connected = connected_;
    out.trace = manager_->trace();
    return out;
  }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const { return event_before(b, a); }
  };

  static std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq);
  }

  void push(double time, EventKind kind, int subject) {
    queue_.push({time, kind, subject, seq_++});
  }

  double exp_draw(double mean) {
    std::exponential_distribution<double> d(1.0 / mean);
    return d(flow_rng_);
  }

  const Point& pos(int id) const { return layout_.nodes[static_cast<std::size_t>(id)].position; }
  bool is_bs(int id) const { return id < static_cast<int>(layout_.cells.size()); }

  // ---- topology, channels, game ----

  void rebuild(double now) {
    clusters_ = topology::form_clusters(layout_.nodes, layout_.cells);
    if (mode_ == Mode::baseline_no_coop) {
      // Direct access only: no tree, channels or power game to maintain.
      readmit(now);
      return;
    }
    const std::size_t n = layout_.nodes.size();
    parent_.assign(n, -1);
    tree_.clear();

    topo_.g = topology::Graph(n);
    topo_.g2 = topology::Graph(n);
    topo_.g1 = topology::Graph(n);
    build_disk_graph();

    std::vector<std::vector<int>> order_by_cluster;
    for (const auto& c : clusters_) {
      std::vector<int> ids{c.head};
      ids.insert(ids.end(), c.members.begin(), c.members.end());
      std::vector<Point> pts;
      for (int id : ids) pts.push_back(pos(id));
      const auto mst = topology::build_mst(pts);
      std::vector<std::vector<int>> adj(ids.size());
      for (const auto& e : mst) {
        adj[static_cast<std::size_t>(e.a)].push_back(e.b);
        adj[static_cast<std::size_t>(e.b)].push_back(e.a);
      }
      std::vector<int> order{0};
      std::vector<bool> seen(ids.size(), false);
      seen[0] = true;
      for (std::size_t i = 0; i < order.size(); ++i) {
        const int v = order[i];
        for (int w : adj[static_cast<std::size_t>(v)]) {
          if (seen[static_cast<std::size_t>(w)]) continue;
          seen[static_cast<std::size_t>(w)] = true;
          parent_[static_cast<std::size_t>(ids[static_cast<std::size_t>(w)])] =
              ids[static_cast<std::size_t>(v)];
          order.push_back(w);
        }
      }
      std::vector<int> bfs;
      for (int i : order) bfs.push_back(ids[static_cast<std::size_t>(i)]);
      order_by_cluster.push_back(std::move(bfs));
    }

    // Background load: every sensor sends up the tree to its head.
    std::vector<double> subtree(n, 0.0);
    for (std::size_t c = 0; c < clusters_.size(); ++c) {
      const auto& bfs = order_by_cluster[c];
      for (auto it = bfs.rbegin(); it != bfs.rend(); ++it) {
        subtree[static_cast<std::size_t>(*it)] += 1.0;
        const int p = parent_[static_cast<std::size_t>(*it)];
        if (p >= 0) subtree[static_cast<std::size_t>(p)] += subtree[static_cast<std::size_t>(*it)];
      }
      for (int v : bfs) {
        const int p = parent_[static_cast<std::size_t>(v)];
        if (p < 0) continue;
        TreeLink t;
        t.child = v;
        t.parent = p;
        t.length = topology::distance(pos(v), pos(p));
        t.hops = static_cast<int>(topology::place_relays(pos(v), pos(p), cfg_.relay_range).size()) + 1;
        t.hop = t.length / t.hops;
        t.background = cfg_.background_rate * subtree[static_cast<std::size_t>(v)];
        t.cluster = static_cast<int>(c);
        tree_.emplace(v, t);
        topo_.g.add_edge(v, p);
      }
    }

    // Links that left the tree give their channel back.
    std::vector<mac::Link> stale;
    for (const auto& [link, c] : table_.assignment()) {
      const bool kept = (tree_.contains(link.first) && parent_[static_cast<std::size_t>(link.first)] == link.second) ||
                        (tree_.contains(link.second) && parent_[static_cast<std::size_t>(link.second)] == link.first);
      if (!kept) stale.push_back(link);
    }
    for (const auto& l : stale) table_.unassign(l);

    // New links inherit the channel of the next hop towards the head.
    for (const auto& bfs : order_by_cluster) {
      for (int v : bfs) {
        const int p = parent_[static_cast<std::size_t>(v)];
        if (p < 0) continue;
        const mac::Link link = mac::make_link(v, p);
        if (table_.channel_of(link)) {
          topo_.g2.add_edge(v, p);
          continue;
        }
        std::optional<mac::Link> peer;
        const int pp = parent_[static_cast<std::size_t>(p)];
        if (pp >= 0) peer = mac::make_link(p, pp);
        mac::assign_from_neighbor(table_, topo_, link, peer);
      }
    }

    refresh(now);

    if (mode_ == Mode::mcca_clss) start_adjustments(now);
  }

  void build_disk_graph() {
    std::vector<int> ids;
    for (const auto& nd : layout_.nodes)
      if (nd.role != Role::base_station) ids.push_back(nd.id);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      return std::tie(pos(a).x, a) < std::tie(pos(b).x, b);
    });
    const double r = cfg_.relay_range;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size() && pos(ids[j]).x - pos(ids[i]).x <= r; ++j)
        if (topology::distance(pos(ids[i]), pos(ids[j])) <= r) topo_.g.add_edge(ids[i], ids[j]);
  }

  void refresh(double now) {
    table_.refresh_contention(topo_);
    solve_games();
    readmit(now);
  }

  void solve_games() {
    qstar_.clear();
    std::map<std::pair<int, int>, std::vector<int>> groups;  // (cluster, channel) -> children
    for (const auto& [child, t] : tree_) {
      const auto c = table_.channel_of(mac::make_link(child, t.parent));
      if (c) groups[{t.cluster, *c}].push_back(child);
    }
    const double rho = cfg_.shared_node_coupling;
    const bool square = cfg_.k_local == 2.0;
    for (const auto& [key, kids] : groups) {
      const auto m = static_cast<Eigen::Index>(kids.size());
      std::vector<const TreeLink*> links;
      for (int child : kids) links.push_back(&tree_.at(child));
      game::PowerGame g;
      g.m = Eigen::MatrixXd::Identity(m, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const TreeLink& li = *links[static_cast<std::size_t>(i)];
        const Point& rx = pos(li.parent);
        const double hop = std::max(li.hop, kMinDistance);
        for (Eigen::Index j = 0; j < m; ++j) {
          if (i == j) continue;
          const TreeLink& lj = *links[static_cast<std::size_t>(j)];
          const bool shared = li.child == lj.child || li.child == lj.parent ||
                              li.parent == lj.child || li.parent == lj.parent;
          if (shared) {
            g.m(i, j) = rho;
            continue;
          }
          const Point& tx = pos(lj.child);
          const double dx = tx.x - rx.x;
          const double dy = tx.y - rx.y;
          const double d2 = std::max(dx * dx + dy * dy, kMinDistance * kMinDistance);
          const double ratio2 = hop * hop / d2;
          const double gain = square ? ratio2 : std::pow(ratio2, cfg_.k_local / 2.0);
          g.m(i, j) = rho * std::min(1.0, gain);
        }
      }
      g.mu = Eigen::VectorXd::Constant(m, price_);
      g.t = Eigen::VectorXd::Ones(m);
      g.sigma2 = Eigen::VectorXd::Constant(m, cfg_.game_noise);
      g.q_max = Eigen::VectorXd::Constant(m, cfg_.q_max);
      g.q = Eigen::VectorXd::Zero(m);
      const auto conv = game::iterate_to_convergence(g, cfg_.game_eps, cfg_.game_max_iter);
      for (Eigen::Index i = 0; i < m; ++i) {
        const int child = kids[static_cast<std::size_t>(i)];
        qstar_[child] = conv.q(i);
        layout_.nodes[static_cast<std::size_t>(child)].tx_power = conv.q(i);
      }
    }
  }

  bool tree_link_usable(int child) const {
    auto it = qstar_.find(child);
    if (it == qstar_.end()) return false;
    const TreeLink& t = tree_.at(child);
    return it->second + kEps >= cfg_.tau * t.hop * t.hop;
  }

  double tree_capacity(int child) const {
    const TreeLink& t = tree_.at(child);
    const auto c = table_.channel_of(mac::make_link(child, t.parent));
    if (!c) return 0.0;
    const int contenders = std::max(1, table_.contention(child, *c));
    return cfg_.link_capacity / contenders;
  }

  double tree_residual(int child) const {
    const double cap = tree_capacity(child);
    const double bg = std::min(tree_.at(child).background, cap);
    auto it = tree_use_.find(child);
    return std::max(0.0, cap - bg - (it == tree_use_.end() ? 0.0 : it->second));
  }

  double uplink_capacity() const { return cfg_.link_capacity * cfg_.channel_count; }

  double uplink_residual(int head) const {
    const double bg = std::min(cluster_size(head) * cfg_.background_rate, uplink_capacity());
    auto it = uplink_use_.find(head);
    return std::max(0.0, uplink_capacity() - bg - (it == uplink_use_.end() ? 0.0 : it->second));
  }

  double cluster_size(int head) const {
    for (const auto& c : clusters_)
      if (c.head == head) return static_cast<double>(c.members.size() + 1);
    return 0.0;
  }

  bool in_reach(double d, int j) const { return cfg_.tau * d * d / j <= cfg_.q_max + kEps; }

  // ---- admission ----

  struct Option {
    Allocation alloc;
    double capacity = 0.0;
  };

  std::vector<Option> options_for(int source, int bs) const {
    std::vector<Option> out;
    const double d_bs = topology::distance(pos(source), pos(bs));

    if (mode_ != Mode::baseline_no_coop) {
      std::vector<int> path{source};
      bool ok = true;
      double cap = std::numeric_limits<double>::infinity();
      double e = 0.0;
      int hops = 0;
      int v = source;
      while (ok && parent_[static_cast<std::size_t>(v)] >= 0) {
        if (!tree_link_usable(v)) ok = false;
        const TreeLink& t = tree_.at(v);
        cap = std::min(cap, tree_residual(v));
        e += t.hops * e_single(cfg_.energy, t.hop, cfg_.k_local);
        hops += t.hops;
        v = t.parent;
        path.push_back(v);
      }
      const int head = v;
      const auto& hn = layout_.nodes[static_cast<std::size_t>(head)];
      const double d_up = topology::distance(pos(head), pos(bs));
      if (ok && hn.role == Role::cluster_head && hn.cell == bs && in_reach(d_up, 1)) {
        cap = std::min(cap, uplink_residual(head));
        e += e_single(cfg_.energy, d_up, cfg_.k_longhaul);
        Option o;
        o.alloc.kind = OptionKind::tree;
        o.alloc.energy_per_bit = e;
        o.alloc.hops = hops + 1;
        o.alloc.path = std::move(path);
        o.capacity = cap;
        if (cap > kEps) out.push_back(std::move(o));
      }
    }

    if (in_reach(d_bs, 1)) {
      Option o;
      o.alloc.kind = OptionKind::direct;
      o.alloc.energy_per_bit = e_single(cfg_.energy, d_bs, cfg_.k_longhaul);
      o.alloc.hops = 1;
      auto it = direct_use_.find(source);
      o.capacity = cfg_.link_capacity - (it == direct_use_.end() ? 0.0 : it->second);
      if (o.capacity > kEps) out.push_back(std::move(o));
    }

    if (mode_ == Mode::mcca_clss) {
      if (auto partner = pick_partner(source)) {
        const double d_p = topology::distance(pos(*partner), pos(bs));
        if (in_reach(std::max(d_bs, d_p), 2)) {
          Option o;
          o.alloc.kind = OptionKind::coop;
          o.alloc.partner = *partner;
          o.alloc.energy_per_bit =
              e_coop(cfg_.energy, d_bs, d_p, topology::distance(pos(source), pos(*partner)),
                     cfg_.k_longhaul);
          o.alloc.hops = 2;
          auto it = coop_use_.find(source);
          o.capacity = cfg_.link_capacity - (it == coop_use_.end() ? 0.0 : it->second);
          if (o.capacity > kEps) out.push_back(std::move(o));
        }
      }
    }
    return out;
  }

  /// Nearest cluster-mate within relay range whose relay buffer has room.
  std::optional<int> pick_partner(int source) const {
    const auto& sn = layout_.nodes[static_cast<std::size_t>(source)];
    if (!sn.cluster_id) return std::nullopt;
    std::optional<int> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int w : topo_.g.neighbors(source)) {
      const auto& wn = layout_.nodes[static_cast<std::size_t>(w)];
      if (wn.cluster_id != sn.cluster_id || wn.relay_buffer.full()) continue;
      const double d = topology::distance(pos(source), pos(w));
      if (d < best_d) {
        best_d = d;
        best = w;
      }
    }
    return best;
  }

  /// Admits via the max-flow check over the edge-disjoint options, then fills
  /// the cheapest options first.
  bool admit(Session& s) {
    s.allocs.clear();
    s.baseline_per_bit =
        e_single(cfg_.energy, topology::distance(pos(s.source), pos(s.bs)), cfg_.k_longhaul);
    auto opts = options_for(s.source, s.bs);
    CapacityGraph graph(2);
    for (const Option& o : opts) {
      if (o.alloc.kind != OptionKind::tree || o.alloc.path.size() < 3) {
        graph.add_link(0, 1, o.capacity);
        continue;
      }
      int prev = 0;
      for (std::size_t i = 1; i + 1 < o.alloc.path.size(); ++i) {
        const int v = graph.add_vertex();
        graph.add_link(prev, v, tree_residual(o.alloc.path[i - 1]));
        prev = v;
      }
      graph.add_link(prev, 1, std::min(o.capacity, uplink_residual(o.alloc.path.back())));
    }
    if (!admit_flow(graph, 0, 1, s.demand).admitted) return false;

    std::stable_sort(opts.begin(), opts.end(), [](const Option& a, const Option& b) {
      return a.alloc.energy_per_bit < b.alloc.energy_per_bit;
    });
    double remaining = s.demand;
    for (Option& o : opts) {
      if (remaining <= kEps) break;
      const double amount = std::min(o.capacity, remaining);
      o.alloc.fraction = amount == s.demand ? 1.0 : amount / s.demand;
      remaining -= amount;
      s.allocs.push_back(std::move(o.alloc));
    }
    reserve(s, +1.0);
    return true;
  }

  void reserve(const Session& s, double sign) {
    for (const Allocation& a : s.allocs) {
      const double amount = sign * a.fraction * s.demand;
      switch (a.kind) {
        case OptionKind::tree:
          for (std::size_t i = 0; i + 1 < a.path.size(); ++i) {
            tree_use_[a.path[i]] += amount;
            const mac::Link l = mac::make_link(a.path[i], a.path[i + 1]);
            table_.set_flows(l, std::max(0, table_.flows(l) + (sign > 0 ? 1 : -1)));
          }
          uplink_use_[a.path.back()] += amount;
          break;
        case OptionKind::direct: direct_use_[s.source] += amount; break;
        case OptionKind::coop: {
          coop_use_[s.source] += amount;
          auto& buf = layout_.nodes[static_cast<std::size_t>(a.partner)].relay_buffer;
          if (sign > 0) {
            buf.push(s.source);
          } else {
            buf.clear();
            for (const auto& [slot, other] : sessions_)
              if (&other != &s)
                for (const Allocation& oa : other.allocs)
                  if (oa.kind == OptionKind::coop && oa.partner == a.partner) buf.push(other.source);
          }
          break;
        }
      }
    }
    if (sign > 0) track_link_load(s);
  }

  void track_link_load(const Session& s) {
    for (const Allocation& a : s.allocs) {
      if (a.kind != OptionKind::tree) continue;
      for (std::size_t i = 0; i + 1 < a.path.size(); ++i) {
        const int child = a.path[i];
        const double cap = tree_capacity(child);
        const double load = std::min(tree_.at(child).background, cap) + tree_use_[child];
        frame_.max_link_load = std::max(frame_.max_link_load, load);
      }
    }
  }

  void record_hops(const Session& s) {
    double h = 0.0;
    for (const Allocation& a : s.allocs) {
      h += a.fraction * a.hops;
      frame_.max_tolerated_hops = std::max(frame_.max_tolerated_hops, a.hops);
    }
    hop_sum_ += h;
    ++hop_count_;
  }

  void readmit(double now) {
    tree_use_.clear();
    uplink_use_.clear();
    direct_use_.clear();
    coop_use_.clear();
    for (auto& nd : layout_.nodes) nd.relay_buffer.clear();
    for (const auto& [link, c] : table_.assignment()) table_.set_flows(link, 0);

    std::vector<int> dropped;
    for (auto& [slot, s] : sessions_) {
      const auto before = s.allocs;
      s.bs = layout_.nodes[static_cast<std::size_t>(s.source)].cell;
      if (!admit(s)) {
        dropped.push_back(slot);
        continue;
      }
      if (!same_route(s.allocs, before)) reroute(s, before, now);
    }
    for (int slot : dropped) {
      Session& s = sessions_.at(slot);
      frame_.dropped_bits += s.in_flight;
      s.in_flight = 0.0;
      s.allocs.clear();
      sessions_.erase(slot);
      push(now + exp_draw(cfg_.mean_idle), EventKind::flow_arrival, slot);
    }
    rebuild_g1();
  }

  /// Packets already in the air follow the old route. With negotiation the
  /// node holding the route change tunnels them; otherwise they are lost.
  void reroute(Session& s, const std::vector<Allocation>& before, double now) {
    ++s.path_version;
    if (mode_ != Mode::mcca_clss || s.in_flight <= 0.0) {
      frame_.dropped_bits += s.in_flight;
      s.in_flight = 0.0;
      return;
    }
    const int holder = before.empty() || before.front().path.size() < 2 ? s.source
                                                                          : before.front().path[1];
    std::vector<int> path = s.allocs.front().path;
    if (path.empty()) path = {s.source, s.bs};
    manager_->record_route_change(holder, s.slot, path, s.path_version);
    const auto res = manager_->route_update(holder, {s.slot, s.source, s.path_version - 1}, now);
    if (!res.tunneled) {
      frame_.dropped_bits += s.in_flight;
      s.in_flight = 0.0;
    }
    schedule_timer();
  }

  void rebuild_g1() {
    topo_.g1 = topology::Graph(layout_.nodes.size());
    for (const auto& [child, t] : tree_) {
      auto it = tree_use_.find(child);
      if ((it != tree_use_.end() && it->second > kEps) || t.background > 0.0)
        topo_.g1.add_edge(child, t.parent);
    }
  }

  // ---- channel adjustment ----

  void start_adjustments(double now) {
    const double nr = cfg_.receiver_cap;
    std::set<int> locked;
    for (const auto& [id, sess] : manager_->sessions())
      if (sess.active())
        for (int v : sess.interference_area()) locked.insert(v);
    for (int node = 0; node < static_cast<int>(layout_.nodes.size()); ++node) {
      if (locked.contains(node) || table_.node_channels(node).empty()) continue;
      const double thr = cfg_.overload_threshold > 0.0 ? cfg_.overload_threshold
                                                       : mac::default_overload_threshold(table_, node);
      const auto over = mac::detect_overload(table_, node, thr);
      if (!over) continue;

      std::set<int> area = topology::two_hop_neighborhood(topo_, node);
      area.insert(node);
      std::vector<mac::Candidate> cands;
      for (const mac::Link& l : table_.links_on(*over)) {
        if (static_cast<int>(cands.size()) >= cfg_.receiver_cap) break;
        if (!area.contains(l.first) && !area.contains(l.second)) continue;
        const int ends[] = {l.first, l.second};
        auto profile = mac::contention_profile(table_, topo_, ends);
        profile[static_cast<std::size_t>(*over)] = std::numeric_limits<int>::max();
        const int target =
            static_cast<int>(std::min_element(profile.begin(), profile.end()) - profile.begin());
        mac::Candidate c;
        c.id = static_cast<int>(cands.size());
        c.link = l;
        c.target_channel = target;
        c.load = table_.load(target);
        cands.push_back(c);
      }
      const auto rule = table_.load(*over) < nr ? mac::SelectionRule::min_load
                                                : mac::SelectionRule::max_rate;
      if (rule == mac::SelectionRule::max_rate)
        for (auto& c : cands) c.rcoop = candidate_rate(c.link);
      const auto pick = mac::select_candidate(table_, topo_, node, *over, cands, rule);
      if (!pick) continue;
      negotiation::Proposal prop;
      for (int end : {pick->link.first, pick->link.second})
        prop.deltas.push_back({end, {{pick->link, pick->target_channel}}, std::nullopt, {}});
      if (auto id = manager_->initiate(node, prop, topo_, now))
        for (int v : manager_->session(*id).interference_area()) locked.insert(v);
    }
    schedule_timer();
  }

  /// Cooperative rate of the two-hop channel around a tree link.
  double candidate_rate(const mac::Link& l) const {
    const double d = std::max(topology::distance(pos(l.first), pos(l.second)), kMinDistance);
    const double gain = std::pow(cfg_.relay_range / d, cfg_.k_local / 2.0);
    capacity::CoopChannel ch;
    ch.m1 = Eigen::MatrixXd::Constant(1, 1, gain);
    ch.m2 = Eigen::MatrixXd::Constant(1, 1, gain / 2.0);
    ch.beta = 0.5;
    ch.power_budget = cfg_.q_max;
    ch.ns = Eigen::MatrixXd::Identity(2, 2);
    ch.nr = Eigen::MatrixXd::Identity(2, 2);
    capacity::OptimizerOptions opts;
    opts.tolerance = 1e-6;
    return capacity::maximize_r_coop(ch, opts).rate;
  }

  bool agrees(int who, const negotiation::Proposal& p) const {
    for (const auto& d : p.deltas)
      for (const auto& c : d.channels) {
        const auto cur = table_.channel_of(c.link);
        if (!cur) return false;
        if (mac::contention_count(table_, topo_, who, c.channel) >=
            mac::contention_count(table_, topo_, who, *cur))
          return false;
      }
    return true;
  }

  void apply_proposal(const negotiation::Proposal& p) {
    for (const auto& d : p.deltas)
      for (const auto& c : d.channels)
        if (table_.channel_of(c.link) && table_.channel_of(c.link) != c.channel) {
          table_.assign(c.link, c.channel);
        }
  }

  void schedule_timer() {
    if (auto t = manager_->next_event_time()) {
      const double at = std::max(*t, now_);
      if (!timer_at_ || at < *timer_at_) {
        timer_at_ = at;
        push(at, EventKind::timer_expiry, 0);
      }
    }
  }

  void on_timer() {
    if (!timer_at_ || std::abs(*timer_at_ - now_) > kEps) return;
    timer_at_.reset();
    manager_->run_until(now_);
    schedule_timer();
  }

  // ---- traffic ----

  void on_arrival(int slot) {
    if (sessions_.contains(slot)) return;
    ++frame_.attempts;
    std::uniform_int_distribution<int> pick(0, std::max(sensors_ - 1, 0));
    if (sensors_ == 0) {
      ++frame_.blocked;
      push(now_ + exp_draw(cfg_.mean_idle), EventKind::flow_arrival, slot);
      return;
    }
    const int source = static_cast<int>(layout_.cells.size()) + pick(flow_rng_);
    Session s;
    s.slot = slot;
    s.source = source;
    s.bs = layout_.nodes[static_cast<std::size_t>(source)].cell;
    s.demand = cfg_.flow_demand;
    const double hold = exp_draw(cfg_.mean_session);
    if (!admit(s)) {
      ++frame_.blocked;
      push(now_ + exp_draw(cfg_.mean_idle), EventKind::flow_arrival, slot);
      return;
    }
    record_hops(s);
    s.end_time = now_ + hold;
    s.next_mac = now_ + cfg_.sample_interval;
    sessions_.emplace(slot, std::move(s));
    rebuild_g1();
    push(now_ + hold, EventKind::flow_end, slot);
    push(now_ + cfg_.sample_interval, EventKind::mac_attempt, slot);
  }

  void deliver(Session& s) {
    if (s.in_flight <= 0.0) return;
    frame_.delivered_bits += s.in_flight;
    for (const Allocation& a : s.allocs) frame_.tx_energy += s.in_flight * a.fraction * a.energy_per_bit;
    frame_.baseline_energy += s.in_flight * s.baseline_per_bit;
    s.in_flight = 0.0;
  }

  void on_flow_end(const Event& ev) {
    auto it = sessions_.find(ev.subject);
    if (it == sessions_.end() || std::abs(it->second.end_time - ev.time) > kEps) return;
    deliver(it->second);
    reserve(it->second, -1.0);
    sessions_.erase(it);
    rebuild_g1();
    push(now_ + exp_draw(cfg_.mean_idle), EventKind::flow_arrival, ev.subject);
  }

  void on_tick() {
    for (auto& nd : layout_.nodes) {
      if (nd.role == Role::base_station) continue;
      topology::mobility_step(nd, layout_.arms, cfg_.mobility_step, mobility_rng_);
      const int cell = topology::hard_handoff(nd.position, layout_.cells);
      if (cell == nd.cell) continue;
      nd.cell = cell;
      // Break-before-make: whatever the node had in the air is lost.
      for (auto& [slot, s] : sessions_)
        if (s.source == nd.id) {
          frame_.dropped_bits += s.in_flight;
          s.in_flight = 0.0;
        }
    }
    for (auto& [slot, s] : sessions_) {
      deliver(s);
      const double bits = s.demand * cfg_.mobility_tick;
      s.in_flight = bits;
      frame_.injected_bits += bits;
    }
    frame_.idle_energy += cfg_.idle_power * sensors_ * cfg_.mobility_tick;
    if (now_ + cfg_.mobility_tick <= sim_time_ + kEps)
      push(now_ + cfg_.mobility_tick, EventKind::mobility_tick, 0);
  }

  void on_mac(const Event& ev) {
    auto it = sessions_.find(ev.subject);
    if (it == sessions_.end() || std::abs(it->second.next_mac - ev.time) > kEps) return;
    Session& s = it->second;
    s.next_mac = now_ + cfg_.sample_interval;
    mac::RtsFrame rts;
    rts.sender = s.source;
    std::vector<double> quality;
    auto add = [&](int rx, double q) {
      if (static_cast<int>(rts.receiver_list.size()) >= cfg_.receiver_cap) return;
      if (std::find(rts.receiver_list.begin(), rts.receiver_list.end(), rx) != rts.receiver_list.end())
        return;
      rts.receiver_list.push_back(rx);
      quality.push_back(q);
    };
    auto floor_q = [&](double d) { return cfg_.tau * std::max(d, kMinDistance) * std::max(d, kMinDistance); };
    for (const Allocation& a : s.allocs) {
      switch (a.kind) {
        case OptionKind::tree:
          if (a.path.size() >= 2) {
            const int child = a.path[0];
            auto q = qstar_.find(child);
            add(a.path[1], (q == qstar_.end() ? 0.0 : q->second) / floor_q(tree_.at(child).hop));
          } else {
            add(s.bs, cfg_.q_max / floor_q(topology::distance(pos(s.source), pos(s.bs))));
          }
          break;
        case OptionKind::direct:
          add(s.bs, cfg_.q_max / floor_q(topology::distance(pos(s.source), pos(s.bs))));
          break;
        case OptionKind::coop:
          add(a.partner, cfg_.q_max / floor_q(topology::distance(pos(s.source), pos(a.partner))));
          break;
      }
    }
    if (mode_ == Mode::mcca_clss) {
      // Multicast RTS: other tree neighbours act as backup receivers.
      for (int w : topo_.g2.neighbors(s.source)) {
        const int child = parent_[static_cast<std::size_t>(w)] == s.source ? w : s.source;
        auto q = qstar_.find(child);
        if (q == qstar_.end() || !tree_.contains(child)) continue;
        add(w, q->second / floor_q(tree_.at(child).hop));
      }
    }
    ++frame_.mac_attempts;
    if (!rts.receiver_list.empty()) {
      rts.candidate_count = static_cast<int>(rts.receiver_list.size());
      const std::vector<double> p(rts.receiver_list.size(), cfg_.mac_success_p);
      if (mac::mac_exchange(rts, quality, cfg_.quality_floor, p, mac_rng_).winner)
        ++frame_.mac_successes;
    }
    push(now_ + cfg_.sample_interval, EventKind::mac_attempt, ev.subject);
  }

  MetricsFrame snapshot() const {
    MetricsFrame f = frame_;
    f.time = now_;
    f.in_flight_bits = 0.0;
    for (const auto& [slot, s] : sessions_) f.in_flight_bits += s.in_flight;
    const double num = f.tx_energy + f.idle_energy;
    const double den = f.baseline_energy + f.idle_energy;
    f.relative_energy = den > 0.0 ? num / den : 1.0;
    f.blocking_prob = f.attempts ? 100.0 * static_cast<double>(f.blocked) / static_cast<double>(f.attempts) : 0.0;
    f.addressing_ratio = f.mac_attempts ? static_cast<double>(f.mac_successes) / static_cast<double>(f.mac_attempts) : 1.0;
    f.mean_hops = hop_count_ ? hop_sum_ / static_cast<double>(hop_count_) : 0.0;
    f.negotiations_committed = manager_->committed_count();
    f.negotiations_aborted = manager_->aborted_count();
    return f;
  }

  void on_sample() {
    series_.push_back(snapshot());
    if (now_ + cfg_.sample_interval <= sim_time_ + kEps) {
      if (now_ + kEps >= next_rebuild_) {
        rebuild(now_);
        next_rebuild_ = now_ + cfg_.rebuild_interval;
      }
      push(now_ + cfg_.sample_interval, EventKind::metric_sample, 0);
    }
  }

  SimConfig cfg_;
  Mode mode_;
  double sim_time_;
  topology::ScenarioLayout layout_;
  int sensors_ = 0;
  bool connected_ = true;

  std::vector<topology::Cluster> clusters_;
  std::vector<int> parent_;
  std::map<int, TreeLink> tree_;  // keyed by child
  std::map<int, double> qstar_;   // keyed by child
  topology::TopologyGraphs topo_;
  mac::ChannelTable table_;
  double price_ = 0.5;

  std::map<int, double> tree_use_;
  std::map<int, double> uplink_use_;
  std::map<int, double> direct_use_;
  std::map<int, double> coop_use_;

  std::map<int, Session> sessions_;
  std::unique_ptr<negotiation::NegotiationManager> manager_;
  std::optional<double> timer_at_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double next_rebuild_ = 0.0;

  std::mt19937_64 mobility_rng_;
  std::mt19937_64 flow_rng_;
  std::mt19937_64 mac_rng_;

  MetricsFrame frame_;
  double hop_sum_ = 0.0;
  std::uint64_t hop_count_ = 0;
  std::vector<MetricsFrame> series_;
};

}  // namespace

double direct_energy_per_bit(const SimConfig& config, double distance) {
  return e_single(config.energy, distance, config.k_longhaul);
}

RunResult run(const SimConfig& config, Mode mode, double sim_time, std::uint64_t seed) {
  Engine engine(config, mode, sim_time, seed);
  return engine.run();
}

}  // namespace mcca::sim
