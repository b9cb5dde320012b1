#include "mcca/channel_mac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mcca::mac {

using topology::TopologyGraphs;

Link make_link(int a, int b) { return a < b ? Link{a, b} : Link{b, a}; }

ChannelTable::ChannelTable(int channel_count)
    : channel_count_(channel_count),
      by_channel_(static_cast<std::size_t>(std::max(channel_count, 0))),
      load_(static_cast<std::size_t>(std::max(channel_count, 0)), 0) {
  if (channel_count < 1) throw std::invalid_argument("channel_count: must be >= 1");
}

void ChannelTable::check_channel(int channel) const {
  if (channel < 0 || channel >= channel_count_)
    throw std::out_of_range("channel index " + std::to_string(channel) + " out of range");
}

void ChannelTable::assign(Link link, int channel) {
  check_channel(channel);
  link = make_link(link.first, link.second);
  unassign(link);
  assignment_[link] = channel;
  by_channel_[static_cast<std::size_t>(channel)].insert(link);
  incident_[link.first].insert(link);
  incident_[link.second].insert(link);
  load_[static_cast<std::size_t>(channel)] += flows(link);
}

void ChannelTable::unassign(Link link) {
  link = make_link(link.first, link.second);
  auto it = assignment_.find(link);
  if (it == assignment_.end()) return;
  const auto c = static_cast<std::size_t>(it->second);
  by_channel_[c].erase(link);
  load_[c] -= flows(link);
  for (int end : {link.first, link.second}) {
    auto inc = incident_.find(end);
    if (inc != incident_.end()) {
      inc->second.erase(link);
      if (inc->second.empty()) incident_.erase(inc);
    }
  }
  assignment_.erase(it);
}

std::optional<int> ChannelTable::channel_of(Link link) const {
  auto it = assignment_.find(make_link(link.first, link.second));
  if (it == assignment_.end()) return std::nullopt;
  return it->second;
}

const std::set<Link>& ChannelTable::links_on(int channel) const {
  check_channel(channel);
  return by_channel_[static_cast<std::size_t>(channel)];
}

std::vector<Link> ChannelTable::incident(int node) const {
  auto it = incident_.find(node);
  if (it == incident_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::set<int> ChannelTable::node_channels(int node) const {
  std::set<int> out;
  auto it = incident_.find(node);
  if (it == incident_.end()) return out;
  for (const Link& l : it->second) out.insert(assignment_.at(l));
  return out;
}

void ChannelTable::set_flows(Link link, int count) {
  if (count < 0) throw std::invalid_argument("set_flows: count must be >= 0");
  link = make_link(link.first, link.second);
  const int before = flows(link);
  if (count == 0)
    link_flows_.erase(link);
  else
    link_flows_[link] = count;
  if (auto c = channel_of(link)) load_[static_cast<std::size_t>(*c)] += count - before;
}

int ChannelTable::flows(Link link) const {
  auto it = link_flows_.find(make_link(link.first, link.second));
  return it == link_flows_.end() ? 0 : it->second;
}

int ChannelTable::load(int channel) const {
  check_channel(channel);
  return load_[static_cast<std::size_t>(channel)];
}

bool ChannelTable::load_consistent() const {
  std::vector<int> recount(load_.size(), 0);
  for (const auto& [link, c] : assignment_) recount[static_cast<std::size_t>(c)] += flows(link);
  return recount == load_;
}

void ChannelTable::refresh_contention(const TopologyGraphs& topo) {
  contention_.clear();
  for (const auto& [node, links] : incident_) {
    const int one[] = {node};
    const std::vector<int> profile = contention_profile(*this, topo, one);
    for (const Link& l : links) {
      const int c = assignment_.at(l);
      contention_[{node, c}] = profile[static_cast<std::size_t>(c)];
    }
  }
}

int ChannelTable::contention(int node, int channel) const {
  auto it = contention_.find({node, channel});
  return it == contention_.end() ? 0 : it->second;
}

int contention_count(const ChannelTable& table, const TopologyGraphs& topo, int node,
                     int channel) {
  std::set<int> area = topology::two_hop_neighborhood(topo, node);
  area.insert(node);
  int count = 0;
  for (const Link& l : table.links_on(channel))
    if (area.contains(l.first) || area.contains(l.second)) ++count;
  return count;
}

std::vector<int> contention_profile(const ChannelTable& table, const TopologyGraphs& topo,
                                    std::span<const int> nodes) {
  std::set<int> area;
  for (int n : nodes) {
    area.insert(n);
    for (int m : topology::two_hop_neighborhood(topo, n)) area.insert(m);
  }
  std::set<Link> seen;
  std::vector<int> profile(static_cast<std::size_t>(table.channel_count()), 0);
  for (int n : area)
    for (const Link& l : table.incident(n))
      if (seen.insert(l).second) ++profile[static_cast<std::size_t>(*table.channel_of(l))];
  return profile;
}

double default_overload_threshold(const ChannelTable& table, int node) {
  const std::set<int> channels = table.node_channels(node);
  if (channels.empty()) return std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (int c : channels) sum += table.contention(node, c);
  return std::ceil(1.5 * sum / static_cast<double>(channels.size()));
}

std::optional<int> detect_overload(const ChannelTable& table, int node, double threshold) {
  std::optional<int> worst;
  int worst_load = 0;
  for (int c : table.node_channels(node)) {  // ascending, so ties keep the lowest index
    const int load = table.contention(node, c);
    if (load > threshold && (!worst || load > worst_load)) {
      worst = c;
      worst_load = load;
    }
  }
  return worst;
}

std::optional<Candidate> select_candidate(const ChannelTable& table, const TopologyGraphs& topo,
                                          int node, int overloaded_channel,
                                          std::span<const Candidate> candidates,
                                          SelectionRule rule) {
  std::set<int> area = topology::two_hop_neighborhood(topo, node);
  area.insert(node);
  std::optional<Candidate> best;
  for (const Candidate& cand : candidates) {
    const Link link = make_link(cand.link.first, cand.link.second);
    if (table.channel_of(link) != overloaded_channel) continue;
    if (cand.target_channel == overloaded_channel || cand.target_channel < 0 ||
        cand.target_channel >= table.channel_count())
      continue;
    // Moving the link lowers the count on the overloaded channel only if the
    // link is inside the node's contention area.
    if (!area.contains(link.first) && !area.contains(link.second)) continue;
    if (!best) {
      best = cand;
      continue;
    }
    const bool better = rule == SelectionRule::max_rate ? cand.rcoop > best->rcoop
                                                        : cand.load < best->load;
    if (better) best = cand;
  }
  return best;
}

void RtsFrame::validate(std::size_t max_receivers) const {
  if (receiver_list.empty()) throw std::invalid_argument("rts: receiver list is empty");
  if (receiver_list.size() > max_receivers)
    throw std::invalid_argument("rts: receiver list exceeds the configured cap");
  std::set<int> unique(receiver_list.begin(), receiver_list.end());
  if (unique.size() != receiver_list.size())
    throw std::invalid_argument("rts: duplicate receiver");
}

MacOutcome mac_exchange(const RtsFrame& rts, std::span<const double> channel_quality,
                        double quality_floor, std::span<const double> success_prob,
                        std::mt19937_64& rng) {
  rts.validate(std::numeric_limits<std::size_t>::max());
  const std::size_t n = rts.receiver_list.size();
  if (channel_quality.size() != n || success_prob.size() != n)
    throw std::invalid_argument("mac_exchange: per-candidate inputs must match the list");
  for (double p : success_prob)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mac_exchange: p must lie in [0,1]");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (channel_quality[i] < quality_floor) continue;
    if (unit(rng) < success_prob[i]) return {rts.receiver_list[i], static_cast<int>(i)};
  }
  return {};
}

int assign_from_neighbor(ChannelTable& table, TopologyGraphs& topo, Link link,
                         std::optional<Link> peer_link) {
  link = make_link(link.first, link.second);
  if (!topo.g.has_edge(link.first, link.second))
    throw std::invalid_argument("assign_from_neighbor: link is not in the connectivity graph");
  std::optional<int> channel;
  if (peer_link) channel = table.channel_of(*peer_link);
  if (!channel) {
    const int ends[] = {link.first, link.second};
    const std::vector<int> profile = contention_profile(table, topo, ends);
    channel = static_cast<int>(std::min_element(profile.begin(), profile.end()) - profile.begin());
  }
  table.assign(link, *channel);
  topo.g2.add_edge(link.first, link.second);
  return *channel;
}

LoadSample sample_loads(const ChannelTable& table, double time) {
  LoadSample s{time, {}};
  s.loads.reserve(static_cast<std::size_t>(table.channel_count()));
  for (int c = 0; c < table.channel_count(); ++c) s.loads.push_back(table.load(c));
  return s;
}

void write_load_csv(std::ostream& out, std::span<const LoadSample> samples) {
  out << "time,channel,load\n";
  for (const LoadSample& s : samples)
    for (std::size_t c = 0; c < s.loads.size(); ++c)
      out << s.time << ',' << c << ',' << s.loads[c] << '\n';
}

}  // namespace mcca::mac
