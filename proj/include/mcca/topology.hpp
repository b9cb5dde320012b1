#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace mcca::topology {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

double distance(const Point& a, const Point& b);

enum class Role { member, cluster_head, cognitive_relay, base_station };

std::string_view to_string(Role role);

/// Bounded FIFO of pending cooperation requests (requesting node ids).
class RelayBuffer {
 public:
  explicit RelayBuffer(std::size_t capacity = 4) : capacity_(capacity) {}

  bool push(int requester);
  std::optional<int> pop();
  bool full() const { return queue_.size() >= capacity_; }
  std::size_t size() const { return queue_.size(); }
  std::size_t capacity() const { return capacity_; }
  void clear() { queue_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<int> queue_;
};

/// Location along one cross arm; members only move along their arm.
struct ArmPosition {
  int arm = 0;
  double offset = 0.0;
};

struct NodeState {
  int id = 0;
  Point position;
  Role role = Role::member;
  std::optional<int> cluster_id;
  int cell = -1;
  double tx_power = 0.0;
  std::set<int> channels;
  RelayBuffer relay_buffer;
  std::optional<ArmPosition> track;
};

struct Cell {
  int id = 0;
  Point center;
  double radius = 3000.0;
};

struct Arm {
  Point start;
  Point end;

  double length() const { return distance(start, end); }
  Point at(double offset) const;
};

struct Scenario {
  double width = 12000.0;
  double height = 6000.0;
  double cell_radius = 3000.0;
  double spacing = 10.0;  // D: nodes sit at multiples of D along each arm
  std::uint64_t seed = 1;
  int node_count = 400;

  /// Throws std::invalid_argument when the terrain cannot hold the layout.
  void validate() const;
  /// Two crosses: each has one horizontal and one vertical arm.
  std::vector<Arm> arms() const;
  /// Seven cells centred on the crosses; base stations sit at the centres.
  std::vector<Cell> cells() const;
};

struct ScenarioLayout {
  std::vector<NodeState> nodes;  // base stations first (ids 0..6), then sensors
  std::vector<Cell> cells;
  std::vector<Arm> arms;
};

ScenarioLayout generate_scenario(const Scenario& cfg);

struct Cluster {
  int id = 0;
  int cell = 0;
  int head = 0;
  std::set<int> members;
  double e_max = 0.0;
};

/// Recomputes e_max as the largest member-to-head distance.
void refresh_e_max(Cluster& cluster, std::span<const NodeState> nodes);

/// One cluster per populated cell: the sensor nearest the base station is the
/// head, the remaining sensors attached to that cell are its members.
std::vector<Cluster> form_clusters(std::vector<NodeState>& nodes, const std::vector<Cell>& cells);

struct Edge {
  int a = 0;
  int b = 0;
  double weight = 0.0;
};

/// Minimum spanning tree of the complete Euclidean graph (Prim, O(n^2)).
/// Indices refer to positions in `points`.
std::vector<Edge> build_mst(std::span<const Point> points);

/// Cognitive relays for one tree edge: none for a zero-length edge, one at the
/// midpoint below range r, two at the 1/3 and 2/3 points from r upwards.
std::vector<Point> place_relays(const Point& a, const Point& b, double r);

/// Undirected simple graph over dense vertex ids.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t vertices) : adj_(vertices) {}

  std::size_t vertex_count() const { return adj_.size(); }
  void resize(std::size_t vertices) { adj_.resize(vertices); }
  void add_edge(int a, int b);
  void remove_edge(int a, int b);
  bool has_edge(int a, int b) const;
  const std::set<int>& neighbors(int v) const;
  std::vector<std::pair<int, int>> edges() const;
  std::size_t edge_count() const;
  bool is_subgraph_of(const Graph& other) const;

 private:
  void check(int v) const;
  std::vector<std::set<int>> adj_;
};

/// g: connectivity graph; g2: channel-assignment graph; g1: links in use.
struct TopologyGraphs {
  Graph g;
  Graph g2;
  Graph g1;

  /// E' within E'' within E.
  bool hierarchy_holds() const { return g1.is_subgraph_of(g2) && g2.is_subgraph_of(g); }
};

/// Vertices within two hops of `node` in g2, excluding `node`.
std::set<int> two_hop_neighborhood(const TopologyGraphs& graphs, int node);

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n);
  int find(int x);
  bool unite(int a, int b);
  std::size_t components() const { return components_; }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
  std::size_t components_;
};

struct Connectivity {
  bool connected = true;
  std::size_t components = 0;
};

/// Boolean-model connectivity: radius-disks overlap when centres are within
/// 2 * radius of each other.
Connectivity check_connectivity(std::span<const Point> points, double radius);

/// Nearest cell centre; exact ties go to the lowest cell id.
int hard_handoff(const Point& position, const std::vector<Cell>& cells);

/// Random walk of +/- step along the node's own arm, reflecting at arm ends.
void mobility_step(NodeState& node, const std::vector<Arm>& arms, double step,
                   std::mt19937_64& rng);

/// id,x,y,role,cell
void write_nodes_csv(std::ostream& out, std::span<const NodeState> nodes);

}  // namespace mcca::topology
