#pragma once

#include <vector>

namespace mcca::sim {

/// Multigraph of undirected capacitated links. Each link can carry flow in
/// either direction up to its capacity.
class CapacityGraph {
 public:
  explicit CapacityGraph(int vertices = 0);

  int add_vertex();
  /// Returns the link index.
  int add_link(int a, int b, double capacity);

  int vertex_count() const { return static_cast<int>(adj_.size()); }
  int link_count() const { return static_cast<int>(links_.size()); }
  double capacity(int link) const { return links_.at(static_cast<std::size_t>(link)).capacity; }

  struct LinkEnds {
    int a = 0;
    int b = 0;
    double capacity = 0.0;
  };
  const std::vector<LinkEnds>& links() const { return links_; }
  /// Link indices incident to v.
  const std::vector<int>& incident(int v) const { return adj_.at(static_cast<std::size_t>(v)); }

 private:
  std::vector<LinkEnds> links_;
  std::vector<std::vector<int>> adj_;
};

struct PathFlow {
  std::vector<int> links;     // link indices from source to sink
  std::vector<int> vertices;  // source ... sink
  double amount = 0.0;
};

struct Admission {
  bool admitted = false;
  double max_flow = 0.0;  // capped at the demand
  std::vector<PathFlow> split;
};

/// Admits `demand` from src to dst iff the max flow reaches it; the split is a
/// path decomposition of a feasible flow of exactly `demand`.
Admission admit_flow(const CapacityGraph& graph, int src, int dst, double demand);

}  // namespace mcca::sim
