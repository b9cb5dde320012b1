#pragma once

// Scripted negotiation runs shared by the unit and acceptance tests.

#include "mcca/negotiation.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace harness {

namespace neg = mcca::negotiation;
using mcca::topology::Graph;
using mcca::topology::TopologyGraphs;

inline TopologyGraphs isolated(int n) {
  TopologyGraphs t;
  t.g = t.g2 = t.g1 = Graph(static_cast<std::size_t>(n));
  return t;
}

/// Proposal moving link (a, b) to `channel`, touching both endpoints.
inline neg::Proposal move_link(int a, int b, int channel) {
  neg::Proposal p;
  for (int end : {a, b}) p.deltas.push_back({end, {{mcca::mac::make_link(a, b), channel}}, std::nullopt, {}});
  return p;
}

struct FateOutcome {
  bool committed = false;
  std::size_t applies = 0;
  neg::Phase phase = neg::Phase::idle;
};

/// Initiator 0, participators 1 and 2, one attempt. Bit layout of `fate`
/// (set = copy lost): request copies to p at 3(p-1)+c, reply copies from p
/// at 6+3(p-1)+c, notification copies to p at 12+3(p-1)+c.
inline FateOutcome run_fate(std::uint32_t fate) {
  neg::Config cfg;
  cfg.max_attempts = 1;
  FateOutcome out;
  neg::NegotiationManager m(cfg, [&](const neg::Proposal&) { ++out.applies; });
  m.set_tracing(false);
  m.set_loss_model([fate](const neg::ProtocolMessage& msg, int copy) {
    int base = -1;
    int who = -1;
    switch (msg.kind) {
      case neg::MessageKind::adjust_request: base = 0; who = msg.receiver; break;
      case neg::MessageKind::adjust_reply: base = 6; who = msg.sender; break;
      case neg::MessageKind::adjust_notification: base = 12; who = msg.receiver; break;
      default: return true;
    }
    const int bit = base + 3 * (who - 1) + copy;
    return ((fate >> bit) & 1u) == 0;
  });
  const TopologyGraphs topo = isolated(3);
  neg::Proposal p;
  p.deltas.push_back({1, {{{1, 2}, 4}}, std::nullopt, {}});
  p.deltas.push_back({2, {{{1, 2}, 4}}, std::nullopt, {}});
  const auto id = m.initiate(0, p, topo, 0.0);
  m.run_until_idle();
  out.phase = m.session(*id).phase;
  out.committed = out.phase == neg::Phase::committed;
  return out;
}

/// Commit iff each participator logically receives the request, gets a reply
/// back and receives the notification.
inline bool expected_commit(std::uint32_t fate) {
  auto any_copy = [fate](int base) { return ((fate >> base) & 7u) != 7u; };
  for (int p = 0; p < 2; ++p)
    if (!any_copy(3 * p) || !any_copy(6 + 3 * p) || !any_copy(12 + 3 * p)) return false;
  return true;
}

struct SafetyReport {
  std::size_t sessions = 0;
  std::size_t committed = 0;
  std::size_t aborted = 0;
  std::size_t exclusiveness_violations = 0;
  std::size_t atomicity_violations = 0;
  std::size_t abort_violations = 0;
};

/// Batches of overlapping random proposals on a 16-node ring-with-chords,
/// each batch at its own loss probability in [0, 0.5].
inline SafetyReport run_safety(int target_sessions, std::uint64_t seed) {
  SafetyReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(rep.sessions) < target_sessions) {
    const int n = 16;
    TopologyGraphs topo = isolated(n);
    for (int i = 0; i < n; ++i) {
      topo.g.add_edge(i, (i + 1) % n);
      topo.g2.add_edge(i, (i + 1) % n);
    }
    std::uniform_int_distribution<int> node(0, n - 1);
    for (int k = 0; k < 4; ++k) {
      const int a = node(rng);
      const int b = node(rng);
      if (a != b) {
        topo.g.add_edge(a, b);
        topo.g2.add_edge(a, b);
      }
    }

    neg::Config cfg;
    cfg.loss_p = 0.5 * unit(rng);
    cfg.seed = rng();
    cfg.check_invariants = true;
    cfg.max_attempts = 2;

    neg::AdjustableState state;
    std::vector<neg::Proposal> applied;
    const double disagree_p = 0.1 * unit(rng);
    std::mt19937_64 vote_rng(rng());
    neg::NegotiationManager m(
        cfg,
        [&](const neg::Proposal& p) {
          applied.push_back(p);
          state.apply(p);
        },
        [&](int, const neg::Proposal&) { return unit(vote_rng) >= disagree_p; });
    m.set_tracing(false);

    double now = 0.0;
    std::uniform_int_distribution<int> channel(0, 15);
    for (int k = 0; k < 12; ++k) {
      const int init = node(rng);
      const auto& nb = topo.g2.neighbors(init);
      std::vector<int> peers(nb.begin(), nb.end());
      const int peer = peers[static_cast<std::size_t>(node(rng)) % peers.size()];
      m.initiate(init, move_link(init, peer, channel(rng)), topo, now);
      now += 0.02 * unit(rng);
      if (!m.exclusiveness_holds()) ++rep.exclusiveness_violations;
    }
    m.run_until_idle();

    rep.exclusiveness_violations += m.invariant_violations();
    // Every commit applied its whole proposal exactly once, and nothing else was applied.
    std::vector<neg::Proposal> committed;
    for (const auto& [id, s] : m.sessions()) {
      ++rep.sessions;
      if (s.phase == neg::Phase::committed) {
        ++rep.committed;
        committed.push_back(s.proposal);
      } else if (s.phase == neg::Phase::aborted) {
        ++rep.aborted;
      }
    }
    if (applied.size() != committed.size()) ++rep.atomicity_violations;
    neg::AdjustableState replay;
    for (const auto& [id, s] : m.sessions())
      if (s.phase == neg::Phase::committed) replay.apply(s.proposal);
    if (!(replay == state)) ++rep.atomicity_violations;
    // Aborted sessions leave no trace: applied proposals are all from commits.
    for (const auto& p : applied) {
      bool found = false;
      for (const auto& c : committed) found = found || c == p;
      if (!found) ++rep.abort_violations;
    }
  }
  return rep;
}

}  // namespace harness
