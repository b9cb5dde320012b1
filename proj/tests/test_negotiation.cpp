#include "doctest.h"
#include "negotiation_harness.hpp"

#include <algorithm>
#include <sstream>

using namespace mcca::negotiation;
using harness::isolated;
using harness::move_link;

namespace {

std::size_t count_events(const std::vector<TraceEntry>& trace, const std::string& event,
                         MessageKind kind, int node = -1) {
  return static_cast<std::size_t>(std::count_if(trace.begin(), trace.end(), [&](const TraceEntry& e) {
    return e.event == event && e.kind == kind && (node < 0 || e.node == node);
  }));
}

}  // namespace

TEST_SUITE("negotiation") {
  TEST_CASE("self-local proposal commits immediately") {
    int applied = 0;
    NegotiationManager m({}, [&](const Proposal&) { ++applied; });
    const auto topo = isolated(2);
    Proposal p;
    p.deltas.push_back({0, {}, 0.25, {}});
    const auto id = m.initiate(0, p, topo, 0.0);
    REQUIRE(id);
    CHECK(m.session(*id).phase == Phase::committed);
    CHECK(applied == 1);
  }

  TEST_CASE("overlapping session is refused") {
    NegotiationManager m({}, [](const Proposal&) {});
    auto topo = isolated(6);
    topo.g.add_edge(1, 2);
    topo.g2.add_edge(1, 2);
    CHECK(m.initiate(0, move_link(0, 1, 3), topo, 0.0));
    CHECK_FALSE(m.initiate(2, move_link(2, 3, 4), topo, 0.001));
    CHECK(m.initiate(4, move_link(4, 5, 4), topo, 0.001));
    CHECK(m.exclusiveness_holds());
  }

  TEST_CASE("lossless session with three participators") {
    AdjustableState state;
    NegotiationManager m({}, [&](const Proposal& p) { state.apply(p); });
    const auto topo = isolated(4);
    Proposal p;
    for (int n = 1; n <= 3; ++n) p.deltas.push_back({n, {{{0, n}, 9}}, std::nullopt, {}});
    const auto id = m.initiate(0, p, topo, 0.0);
    CHECK(m.session(*id).phase == Phase::requested);
    m.run_until_idle();
    CHECK(m.session(*id).phase == Phase::committed);
    for (int n = 1; n <= 3; ++n) {
      CHECK(count_events(m.trace(), "deliver", MessageKind::adjust_request, n) == 1);
      CHECK(count_events(m.trace(), "duplicate", MessageKind::adjust_request, n) == 2);
      CHECK(state.channels.at(mcca::mac::make_link(0, n)) == 9);
    }
    // Every reply arrives three times but is counted once.
    CHECK(count_events(m.trace(), "deliver", MessageKind::adjust_reply) == 3);
    CHECK(count_events(m.trace(), "duplicate", MessageKind::adjust_reply) == 6);
    CHECK(m.session(*id).replies.size() == 3);
  }

  TEST_CASE("reply handling") {
    const auto topo = isolated(3);
    NegotiationManager m({}, [](const Proposal&) {});
    const auto id = m.initiate(0, move_link(1, 2, 1), topo, 0.0);
    m.on_reply(*id, 1, true, 0.001);
    CHECK(m.session(*id).phase == Phase::requested);
    m.on_reply(*id, 1, true, 0.001);
    CHECK(m.session(*id).replies.size() == 1);
    m.on_reply(*id, 7, true, 0.001);
    CHECK(std::any_of(m.trace().begin(), m.trace().end(), [](const TraceEntry& e) {
      return e.event == "warn_reply_from_non_participator";
    }));
    m.on_reply(*id, 2, true, 0.002);
    CHECK(m.session(*id).phase == Phase::notifying);

    NegotiationManager no({}, [](const Proposal&) {}, [](int who, const Proposal&) { return who != 2; });
    const auto nid = no.initiate(0, move_link(1, 2, 1), topo, 0.0);
    no.run_until_idle();
    CHECK(no.session(*nid).phase == Phase::aborted);
  }

  TEST_CASE("timers") {
    const auto topo = isolated(3);
    Config cfg;
    cfg.max_attempts = 1;
    int applied = 0;
    NegotiationManager m(cfg, [&](const Proposal&) { ++applied; });
    m.set_loss_model([](const ProtocolMessage& msg, int) { return msg.kind != MessageKind::adjust_reply; });
    const auto id = m.initiate(0, move_link(1, 2, 1), topo, 0.0);
    m.run_until_idle();
    CHECK(m.session(*id).phase == Phase::aborted);
    CHECK(applied == 0);

    NegotiationManager ok(cfg, [&](const Proposal&) { ++applied; });
    const auto oid = ok.initiate(0, move_link(1, 2, 1), topo, 0.0);
    // Both replies are in after two hops; the notification timer is still running.
    ok.run_until(2.5 * cfg.hop_delay);
    CHECK(ok.session(*oid).phase == Phase::notifying);
    ok.run_until_idle();
    CHECK(ok.session(*oid).phase == Phase::committed);
    CHECK(applied == 1);
  }

  TEST_CASE("onlookers hear about the commit") {
    auto topo = isolated(4);
    topo.g.add_edge(2, 3);
    topo.g2.add_edge(2, 3);
    NegotiationManager m({}, [](const Proposal&) {});
    const auto id = m.initiate(0, move_link(1, 2, 1), topo, 0.0);
    CHECK(m.session(*id).onlookers == std::set<int>{3});
    m.run_until_idle();
    CHECK(count_events(m.trace(), "deliver", MessageKind::adjust_info_broadcast, 3) >= 1);
    std::ostringstream out;
    write_trace(out, m.trace());
    CHECK(out.str().rfind("time,session,node,event,kind,phase_before,phase_after,copy\n", 0) == 0);
  }

  TEST_CASE("aborted sessions are retried up to the attempt cap") {
    const auto topo = isolated(3);
    Config cfg;
    cfg.max_attempts = 3;
    NegotiationManager m(cfg, [](const Proposal&) {});
    m.set_loss_model([](const ProtocolMessage& msg, int) { return msg.kind != MessageKind::adjust_request; });
    m.initiate(0, move_link(1, 2, 1), topo, 0.0);
    m.run_until_idle();
    CHECK(m.sessions().size() == 3);
    CHECK(m.aborted_count() == 3);
  }

  TEST_CASE("triple send") {
    std::mt19937_64 rng(9);
    const ProtocolMessage msg{MessageKind::adjust_request, 1, 0, 1, std::monostate{}};
    for (int i = 0; i < 100; ++i) {
      CHECK(send_reliable(msg, 0.0, rng).delivered);
      CHECK_FALSE(send_reliable(msg, 1.0, rng).delivered);
    }
    int failures = 0;
    const int trials = 100000;
    for (int i = 0; i < trials; ++i) failures += !send_reliable(msg, 0.5, rng).delivered;
    CHECK(std::abs(failures / double(trials) - 0.125) <= 0.002);
    CHECK(is_triple_sent(MessageKind::adjust_notification));
    CHECK_FALSE(is_triple_sent(MessageKind::prep_broadcast));
  }

  TEST_CASE("two-participator outcomes match message-fate enumeration") {
    // Every 37th fate vector; the acceptance run covers all of them.
    for (std::uint32_t fate = 0; fate < (1u << 18); fate += 37) {
      const auto out = harness::run_fate(fate);
      CHECK(out.committed == harness::expected_commit(fate));
      CHECK(out.applies == (out.committed ? 1u : 0u));
    }
  }

  TEST_CASE("route update") {
    NegotiationManager m({}, [](const Proposal&) {});
    CHECK_FALSE(m.route_update(3, {1, 0, 0}, 0.0).tunneled);

    m.record_route_change(3, 1, {0, 3, 9}, 1);
    const auto r = m.route_update(3, {1, 0, 0}, 0.0);
    CHECK(r.tunneled);
    CHECK(r.update_sent);
    CHECK(r.path == std::vector<int>{0, 3, 9});
    m.run_until_idle();
    CHECK_FALSE(m.has_route_change(3));
    CHECK(m.source_route_version(0, 1) == 1);
    CHECK(count_events(m.trace(), "deliver", MessageKind::route_update) == 1);
    CHECK(count_events(m.trace(), "deliver", MessageKind::route_accept) == 1);
  }

  TEST_CASE("a lost accept keeps the record until a retry succeeds") {
    NegotiationManager m({}, [](const Proposal&) {});
    int accepts_for_flow2 = 0;
    m.set_loss_model([&](const ProtocolMessage& msg, int) {
      if (msg.kind == MessageKind::route_accept && std::get<int>(msg.payload) == 2)
        return ++accepts_for_flow2 > 1;
      return true;
    });
    for (int flow = 1; flow <= 3; ++flow) m.record_route_change(5, flow, {flow, 5, 0}, 1);
    for (int flow = 1; flow <= 3; ++flow) CHECK(m.route_update(5, {flow, flow, 0}, 0.0).tunneled);
    m.run_until(Config{}.reply_timeout() * 0.5);
    CHECK(m.has_route_change(5));
    // Still tunnelling while the record is held.
    CHECK(m.route_update(5, {2, 2, 0}, m.now()).tunneled);
    m.run_until_idle();
    CHECK_FALSE(m.has_route_change(5));
    CHECK(accepts_for_flow2 >= 2);
    CHECK(std::count_if(m.trace().begin(), m.trace().end(),
                        [](const TraceEntry& e) { return e.event == "route_record_cleared"; }) == 1);
  }

  TEST_CASE("loss-injected sessions keep their invariants") {
    const auto rep = harness::run_safety(200, 31);
    CHECK(rep.sessions >= 200);
    CHECK(rep.exclusiveness_violations == 0);
    CHECK(rep.atomicity_violations == 0);
    CHECK(rep.abort_violations == 0);
    CHECK(rep.committed > 0);
    CHECK(rep.aborted > 0);
  }
}
