#include "mcca/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mcca::topology {

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string_view to_string(Role role) {
  switch (role) {
    case Role::member: return "member";
    case Role::cluster_head: return "cluster_head";
    case Role::cognitive_relay: return "cognitive_relay";
    case Role::base_station: return "base_station";
  }
  return "unknown";
}

bool RelayBuffer::push(int requester) {
  if (full()) return false;
  queue_.push_back(requester);
  return true;
}

std::optional<int> RelayBuffer::pop() {
  if (queue_.empty()) return std::nullopt;
  int front = queue_.front();
  queue_.pop_front();
  return front;
}

Point Arm::at(double offset) const {
  const double len = length();
  if (len == 0.0) return start;
  const double t = std::clamp(offset / len, 0.0, 1.0);
  return {start.x + t * (end.x - start.x), start.y + t * (end.y - start.y)};
}

void Scenario::validate() const {
  if (!(cell_radius > 0.0)) throw std::invalid_argument("scenario.cell_radius: must be > 0");
  if (width < 4.0 * cell_radius || height < 2.0 * cell_radius)
    throw std::invalid_argument(
        "scenario.width/height: terrain too small for the seven-cell dual-cross layout");
  if (!(spacing > 0.0)) throw std::invalid_argument("scenario.spacing: must be > 0");
  if (node_count < 1) throw std::invalid_argument("scenario.node_count: must be >= 1");
}

std::vector<Arm> Scenario::arms() const {
  const double mid_y = height / 2.0;
  return {
      {{0.0, mid_y}, {width / 2.0, mid_y}},
      {{width / 4.0, 0.0}, {width / 4.0, height}},
      {{width / 2.0, mid_y}, {width, mid_y}},
      {{3.0 * width / 4.0, 0.0}, {3.0 * width / 4.0, height}},
  };
}

std::vector<Cell> Scenario::cells() const {
  const double w = width;
  const double h = height;
  const std::vector<Point> centres = {
      {w / 4.0, h / 2.0},       {3.0 * w / 4.0, h / 2.0}, {w / 2.0, h / 2.0},
      {w / 4.0, h / 8.0},       {w / 4.0, 7.0 * h / 8.0}, {3.0 * w / 4.0, h / 8.0},
      {3.0 * w / 4.0, 7.0 * h / 8.0},
  };
  std::vector<Cell> out;
  for (std::size_t i = 0; i < centres.size(); ++i)
    out.push_back({static_cast<int>(i), centres[i], cell_radius});
  return out;
}

ScenarioLayout generate_scenario(const Scenario& cfg) {
  cfg.validate();
  ScenarioLayout layout;
  layout.cells = cfg.cells();
  layout.arms = cfg.arms();

  for (const Cell& cell : layout.cells) {
    NodeState bs;
    bs.id = static_cast<int>(layout.nodes.size());
    bs.position = cell.center;
    bs.role = Role::base_station;
    bs.cell = cell.id;
    layout.nodes.push_back(std::move(bs));
  }

  // Sites at k*D on every arm; a node picks a site uniformly over all sites.
  std::vector<std::int64_t> sites_per_arm;
  std::int64_t total_sites = 0;
  for (const Arm& arm : layout.arms) {
    const auto n = static_cast<std::int64_t>(std::floor(arm.length() / cfg.spacing)) + 1;
    sites_per_arm.push_back(n);
    total_sites += n;
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::int64_t> pick(0, total_sites - 1);
  for (int i = 0; i < cfg.node_count; ++i) {
    std::int64_t site = pick(rng);
    int arm = 0;
    while (site >= sites_per_arm[static_cast<std::size_t>(arm)]) {
      site -= sites_per_arm[static_cast<std::size_t>(arm)];
      ++arm;
    }
    NodeState node;
    node.id = static_cast<int>(layout.nodes.size());
    node.track = ArmPosition{arm, static_cast<double>(site) * cfg.spacing};
    node.position = layout.arms[static_cast<std::size_t>(arm)].at(node.track->offset);
    node.cell = hard_handoff(node.position, layout.cells);
    layout.nodes.push_back(std::move(node));
  }
  return layout;
}

void refresh_e_max(Cluster& cluster, std::span<const NodeState> nodes) {
  const Point head = nodes[static_cast<std::size_t>(cluster.head)].position;
  double e = 0.0;
  for (int m : cluster.members) e = std::max(e, distance(head, nodes[static_cast<std::size_t>(m)].position));
  cluster.e_max = e;
}

std::vector<Cluster> form_clusters(std::vector<NodeState>& nodes, const std::vector<Cell>& cells) {
  std::vector<Cluster> clusters;
  std::vector<int> head_of_cell(cells.size(), -1);
  for (NodeState& n : nodes) {
    if (n.role == Role::base_station) continue;
    n.cell = hard_handoff(n.position, cells);
    n.cluster_id.reset();
    if (n.role == Role::cluster_head) n.role = Role::member;
  }
  for (const Cell& cell : cells) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const NodeState& n : nodes) {
      if (n.role != Role::member || n.cell != cell.id) continue;
      const double d = distance(n.position, cell.center);
      if (d < best_d) {
        best_d = d;
        best = n.id;
      }
    }
    if (best < 0) continue;
    Cluster c;
    c.id = static_cast<int>(clusters.size());
    c.cell = cell.id;
    c.head = best;
    nodes[static_cast<std::size_t>(best)].role = Role::cluster_head;
    nodes[static_cast<std::size_t>(best)].cluster_id = c.id;
    head_of_cell[static_cast<std::size_t>(cell.id)] = c.id;
    clusters.push_back(std::move(c));
  }
  for (NodeState& n : nodes) {
    if (n.role != Role::member) continue;
    const int cid = head_of_cell[static_cast<std::size_t>(n.cell)];
    n.cluster_id = cid;
    clusters[static_cast<std::size_t>(cid)].members.insert(n.id);
  }
  for (Cluster& c : clusters) refresh_e_max(c, nodes);
  return clusters;
}

std::vector<Edge> build_mst(std::span<const Point> points) {
  const std::size_t n = points.size();
  std::vector<Edge> tree;
  if (n < 2) return tree;
  tree.reserve(n - 1);
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  best[0] = 0.0;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v)
      if (!in_tree[v] && (u == n || best[v] < best[u])) u = v;
    in_tree[u] = true;
    if (parent[u] >= 0) {
      const int a = std::min(parent[u], static_cast<int>(u));
      const int b = std::max(parent[u], static_cast<int>(u));
      tree.push_back({a, b, best[u]});
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const double d = distance(points[u], points[v]);
      if (d < best[v]) {
        best[v] = d;
        parent[v] = static_cast<int>(u);
      }
    }
  }
  return tree;
}

std::vector<Point> place_relays(const Point& a, const Point& b, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("place_relays: range must be > 0");
  const double d = distance(a, b);
  if (d == 0.0) return {};
  auto lerp = [&](double t) { return Point{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}; };
  if (d < r) return {lerp(0.5)};
  return {lerp(1.0 / 3.0), lerp(2.0 / 3.0)};
}

void Graph::check(int v) const {
  if (v < 0 || static_cast<std::size_t>(v) >= adj_.size())
    throw std::out_of_range("graph: unknown vertex " + std::to_string(v));
}

void Graph::add_edge(int a, int b) {
  check(a);
  check(b);
  if (a == b) return;
  adj_[static_cast<std::size_t>(a)].insert(b);
  adj_[static_cast<std::size_t>(b)].insert(a);
}

void Graph::remove_edge(int a, int b) {
  check(a);
  check(b);
  adj_[static_cast<std::size_t>(a)].erase(b);
  adj_[static_cast<std::size_t>(b)].erase(a);
}

bool Graph::has_edge(int a, int b) const {
  check(a);
  check(b);
  return adj_[static_cast<std::size_t>(a)].contains(b);
}

const std::set<int>& Graph::neighbors(int v) const {
  check(v);
  return adj_[static_cast<std::size_t>(v)];
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t a = 0; a < adj_.size(); ++a)
    for (int b : adj_[a])
      if (static_cast<int>(a) < b) out.emplace_back(static_cast<int>(a), b);
  return out;
}

std::size_t Graph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& s : adj_) twice += s.size();
  return twice / 2;
}

bool Graph::is_subgraph_of(const Graph& other) const {
  if (adj_.size() > other.adj_.size()) return false;
  for (std::size_t a = 0; a < adj_.size(); ++a)
    for (int b : adj_[a])
      if (!other.adj_[a].contains(b)) return false;
  return true;
}

std::set<int> two_hop_neighborhood(const TopologyGraphs& graphs, int node) {
  std::set<int> out;
  for (int n1 : graphs.g2.neighbors(node)) {
    out.insert(n1);
    for (int n2 : graphs.g2.neighbors(n1)) out.insert(n2);
  }
  out.erase(node);
  return out;
}

DisjointSet::DisjointSet(std::size_t n) : parent_(n), rank_(n, 0), components_(n) {
  std::iota(parent_.begin(), parent_.end(), 0);
}

int DisjointSet::find(int x) {
  while (parent_[static_cast<std::size_t>(x)] != x) {
    auto& p = parent_[static_cast<std::size_t>(x)];
    p = parent_[static_cast<std::size_t>(p)];
    x = p;
  }
  return x;
}

bool DisjointSet::unite(int a, int b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  auto ua = static_cast<std::size_t>(a);
  auto ub = static_cast<std::size_t>(b);
  if (rank_[ua] < rank_[ub]) std::swap(ua, ub);
  parent_[ub] = static_cast<int>(ua);
  if (rank_[ua] == rank_[ub]) ++rank_[ua];
  --components_;
  return true;
}

Connectivity check_connectivity(std::span<const Point> points, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("check_connectivity: radius must be > 0");
  // Sort by x so the pair scan can stop once the x-gap exceeds the reach.
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return points[a].x < points[b].x; });
  const double reach = 2.0 * radius;
  DisjointSet ds(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const Point& p = points[order[i]];
      const Point& q = points[order[j]];
      if (q.x - p.x > reach) break;
      if (distance(p, q) <= reach) ds.unite(static_cast<int>(order[i]), static_cast<int>(order[j]));
    }
  }
  return {ds.components() <= 1, ds.components()};
}

int hard_handoff(const Point& position, const std::vector<Cell>& cells) {
  if (cells.empty()) throw std::invalid_argument("hard_handoff: no cells");
  int best = cells.front().id;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const Cell& c : cells) {
    const double dx = position.x - c.center.x;
    const double dy = position.y - c.center.y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2 || (d2 == best_d2 && c.id < best)) {
      best_d2 = d2;
      best = c.id;
    }
  }
  return best;
}

void mobility_step(NodeState& node, const std::vector<Arm>& arms, double step,
                   std::mt19937_64& rng) {
  if (node.role == Role::base_station || !node.track) return;
  const Arm& arm = arms.at(static_cast<std::size_t>(node.track->arm));
  const double len = arm.length();
  std::bernoulli_distribution forward(0.5);
  double offset = node.track->offset + (forward(rng) ? step : -step);
  if (offset < 0.0) offset = -offset;
  if (offset > len) offset = 2.0 * len - offset;
  node.track->offset = std::clamp(offset, 0.0, len);
  node.position = arm.at(node.track->offset);
}

void write_nodes_csv(std::ostream& out, std::span<const NodeState> nodes) {
  out << "id,x,y,role,cell\n";
  for (const NodeState& n : nodes)
    out << n.id << ',' << n.position.x << ',' << n.position.y << ',' << to_string(n.role) << ','
        << n.cell << '\n';
}

}  // namespace mcca::topology
