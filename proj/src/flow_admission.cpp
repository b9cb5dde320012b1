#include "mcca/flow_admission.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace mcca::sim {

namespace {

constexpr double kEps = 1e-9;

}  // namespace

CapacityGraph::CapacityGraph(int vertices) : adj_(static_cast<std::size_t>(std::max(vertices, 0))) {}

int CapacityGraph::add_vertex() {
  adj_.emplace_back();
  return static_cast<int>(adj_.size()) - 1;
}

int CapacityGraph::add_link(int a, int b, double capacity) {
  if (a < 0 || b < 0 || a >= vertex_count() || b >= vertex_count())
    throw std::out_of_range("capacity graph: unknown vertex");
  if (capacity < 0.0) throw std::invalid_argument("capacity graph: negative capacity");
  links_.push_back({a, b, capacity});
  const int id = static_cast<int>(links_.size()) - 1;
  adj_[static_cast<std::size_t>(a)].push_back(id);
  if (a != b) adj_[static_cast<std::size_t>(b)].push_back(id);
  return id;
}

Admission admit_flow(const CapacityGraph& graph, int src, int dst, double demand) {
  if (src < 0 || dst < 0 || src >= graph.vertex_count() || dst >= graph.vertex_count())
    throw std::out_of_range("admit_flow: unknown endpoint");
  if (demand < 0.0) throw std::invalid_argument("admit_flow: negative demand");
  Admission out;
  if (src == dst || demand <= kEps) {
    out.admitted = true;
    out.max_flow = demand;
    return out;
  }

  const auto& links = graph.links();
  // flow[l] > 0 means a -> b, < 0 means b -> a.
  std::vector<double> flow(links.size(), 0.0);
  auto residual = [&](int l, int from) {
    const auto& e = links[static_cast<std::size_t>(l)];
    return from == e.a ? e.capacity - flow[static_cast<std::size_t>(l)]
                       : e.capacity + flow[static_cast<std::size_t>(l)];
  };
  auto other = [&](int l, int v) {
    const auto& e = links[static_cast<std::size_t>(l)];
    return v == e.a ? e.b : e.a;
  };

  double total = 0.0;
  // Edmonds-Karp: shortest augmenting paths until the demand is met.
  while (total < demand - kEps) {
    std::vector<int> via(static_cast<std::size_t>(graph.vertex_count()), -1);
    std::vector<bool> seen(static_cast<std::size_t>(graph.vertex_count()), false);
    std::queue<int> frontier;
    frontier.push(src);
    seen[static_cast<std::size_t>(src)] = true;
    while (!frontier.empty() && !seen[static_cast<std::size_t>(dst)]) {
      const int v = frontier.front();
      frontier.pop();
      for (int l : graph.incident(v)) {
        const int w = other(l, v);
        if (seen[static_cast<std::size_t>(w)] || residual(l, v) <= kEps) continue;
        seen[static_cast<std::size_t>(w)] = true;
        via[static_cast<std::size_t>(w)] = l;
        frontier.push(w);
      }
    }
    if (!seen[static_cast<std::size_t>(dst)]) break;
    double push = demand - total;
    for (int v = dst; v != src;) {
      const int l = via[static_cast<std::size_t>(v)];
      const int u = other(l, v);
      push = std::min(push, residual(l, u));
      v = u;
    }
    for (int v = dst; v != src;) {
      const int l = via[static_cast<std::size_t>(v)];
      const int u = other(l, v);
      flow[static_cast<std::size_t>(l)] += (u == links[static_cast<std::size_t>(l)].a) ? push : -push;
      v = u;
    }
    total += push;
  }

  out.max_flow = total;
  out.admitted = total >= demand - kEps;
  if (!out.admitted) return out;

  // Decompose the flow into source-to-sink paths.
  std::vector<double> remaining = flow;
  for (int guard = 0; guard < static_cast<int>(links.size()) + 1; ++guard) {
    PathFlow path;
    path.vertices.push_back(src);
    std::vector<bool> on_path(static_cast<std::size_t>(graph.vertex_count()), false);
    on_path[static_cast<std::size_t>(src)] = true;
    int v = src;
    bool cycle = false;
    while (v != dst) {
      int next_link = -1;
      for (int l : graph.incident(v)) {
        const auto& e = links[static_cast<std::size_t>(l)];
        const double f = remaining[static_cast<std::size_t>(l)];
        if ((v == e.a && f > kEps) || (v == e.b && e.a != e.b && f < -kEps)) {
          next_link = l;
          break;
        }
      }
      if (next_link < 0) break;
      path.links.push_back(next_link);
      v = other(next_link, v);
      path.vertices.push_back(v);
      if (on_path[static_cast<std::size_t>(v)]) {
        cycle = true;
        break;
      }
      on_path[static_cast<std::size_t>(v)] = true;
    }
    if (v != dst || cycle) {
      // Cancel a circulation if one was walked into; otherwise nothing is left.
      if (!cycle) break;
      const int start = v;
      auto first = std::find(path.vertices.begin(), path.vertices.end(), start);
      const auto offset = static_cast<std::size_t>(first - path.vertices.begin());
      double amount = std::numeric_limits<double>::infinity();
      for (std::size_t i = offset; i < path.links.size(); ++i)
        amount = std::min(amount, std::abs(remaining[static_cast<std::size_t>(path.links[i])]));
      for (std::size_t i = offset; i < path.links.size(); ++i) {
        const int l = path.links[i];
        const int from = path.vertices[i];
        remaining[static_cast<std::size_t>(l)] +=
            from == links[static_cast<std::size_t>(l)].a ? -amount : amount;
      }
      continue;
    }
    double amount = std::numeric_limits<double>::infinity();
    for (int l : path.links) amount = std::min(amount, std::abs(remaining[static_cast<std::size_t>(l)]));
    for (std::size_t i = 0; i < path.links.size(); ++i) {
      const int l = path.links[i];
      const int from = path.vertices[i];
      remaining[static_cast<std::size_t>(l)] +=
          from == links[static_cast<std::size_t>(l)].a ? -amount : amount;
    }
    path.amount = amount;
    out.split.push_back(std::move(path));
  }
  return out;
}

}  // namespace mcca::sim
