#pragma once

#include "mcca/topology.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

namespace mcca::mac {

/// Undirected link, endpoints stored in ascending order.
using Link = std::pair<int, int>;

Link make_link(int a, int b);

/// Link -> channel assignment, per-channel flow load and cached two-hop
/// contention per (node, channel).
class ChannelTable {
 public:
  explicit ChannelTable(int channel_count = 128);

  int channel_count() const { return channel_count_; }

  void assign(Link link, int channel);
  void unassign(Link link);
  std::optional<int> channel_of(Link link) const;
  const std::map<Link, int>& assignment() const { return assignment_; }
  const std::set<Link>& links_on(int channel) const;
  /// Assigned links with `node` as an endpoint.
  std::vector<Link> incident(int node) const;
  /// Channels of the links incident to `node`.
  std::set<int> node_channels(int node) const;

  void set_flows(Link link, int flows);
  int flows(Link link) const;
  /// Active flows summed over the links on channel c.
  int load(int channel) const;
  /// load() agrees with a recount from the assignment.
  bool load_consistent() const;

  /// Recomputes the contention cache for every node that has links.
  void refresh_contention(const topology::TopologyGraphs& topo);
  int contention(int node, int channel) const;

 private:
  void check_channel(int channel) const;

  int channel_count_;
  std::map<Link, int> assignment_;
  std::vector<std::set<Link>> by_channel_;
  std::map<int, std::set<Link>> incident_;
  std::map<Link, int> link_flows_;
  std::vector<int> load_;
  std::map<std::pair<int, int>, int> contention_;
};

/// Links on channel c with at least one endpoint within two hops of `node`
/// (node included).
int contention_count(const ChannelTable& table, const topology::TopologyGraphs& topo, int node,
                     int channel);

/// Per-channel contention for the area around `nodes` (each link counted once).
std::vector<int> contention_profile(const ChannelTable& table,
                                    const topology::TopologyGraphs& topo,
                                    std::span<const int> nodes);

/// ceil(1.5 x mean cached contention over the node's channels); +inf when
/// the node has no channels.
double default_overload_threshold(const ChannelTable& table, int node);

/// Most contended channel the node uses when that contention exceeds the
/// threshold; ties go to the lowest channel index.
std::optional<int> detect_overload(const ChannelTable& table, int node, double threshold);

struct Candidate {
  int id = 0;
  Link link;
  int target_channel = 0;
  double rcoop = 0.0;
  double load = 0.0;
};

enum class SelectionRule { max_rate, min_load };

/// Feasible candidates move a link off the overloaded channel so that the
/// node's contention there strictly drops. Picks the best by `rule`; ties
/// go to the earliest candidate.
std::optional<Candidate> select_candidate(const ChannelTable& table,
                                          const topology::TopologyGraphs& topo, int node,
                                          int overloaded_channel,
                                          std::span<const Candidate> candidates,
                                          SelectionRule rule = SelectionRule::max_rate);

/// Multicast RTS: receiver order is the CTS priority.
struct RtsFrame {
  int sender = 0;
  std::vector<int> receiver_list;
  int candidate_count = 0;
  std::uint64_t payload = 0;

  void validate(std::size_t max_receivers = 8) const;
};

struct MacOutcome {
  std::optional<int> winner;
  int priority_index = -1;
};

/// The highest-priority candidate with quality >= floor whose independent
/// success draw passes replies CTS first; the others yield.
MacOutcome mac_exchange(const RtsFrame& rts, std::span<const double> channel_quality,
                        double quality_floor, std::span<const double> success_prob,
                        std::mt19937_64& rng);

/// Assigns `link` the channel of `peer_link` when that is assigned, otherwise
/// the least contended channel around the link's endpoints. Adds the link to
/// g2; the link must already be in g.
int assign_from_neighbor(ChannelTable& table, topology::TopologyGraphs& topo, Link link,
                         std::optional<Link> peer_link);

struct LoadSample {
  double time = 0.0;
  std::vector<int> loads;
};

LoadSample sample_loads(const ChannelTable& table, double time);

/// time,channel,load
void write_load_csv(std::ostream& out, std::span<const LoadSample> samples);

}  // namespace mcca::mac
