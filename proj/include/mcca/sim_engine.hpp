#pragma once

#include "mcca/energy_model.hpp"
#include "mcca/negotiation.hpp"
#include "mcca/topology.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace mcca::sim {

enum class Mode { mcca_clss, baseline_no_coop, strategy_game_only };

std::string_view to_string(Mode mode);
/// Throws std::invalid_argument for an unknown name.
Mode parse_mode(std::string_view name);

/// Processing order for events at the same instant.
enum class EventKind { flow_end, mobility_tick, timer_expiry, flow_arrival, mac_attempt, metric_sample };

std::string_view to_string(EventKind kind);

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::metric_sample;
  int subject = 0;
  std::uint64_t seq = 0;  // insertion order, last resort
};

/// Strict weak order used by the engine queue: time, kind rank, subject, seq.
bool event_before(const Event& a, const Event& b);

struct SimConfig {
  topology::Scenario scenario;
  energy::EnergyParams energy = [] {
    energy::EnergyParams p;
    p.g1 = 1e-13;
    return p;
  }();

  int channel_count = 128;
  double link_capacity = 256e3;   // raw capacity per link [bit/s]
  int flow_count = 64;            // concurrent session slots
  double flow_demand = 16e3;      // [bit/s]
  double mean_session = 64.0;     // [s]
  double mean_idle = 64.0;        // [s]
  double background_rate = 1e3;   // per member, up the cluster tree [bit/s]
  double idle_power = 1e-5;       // per sensor [W]

  double tau = 1e-6;              // SNR floor coefficient: q >= tau d^2
  double q_max = 1.0;             // [W]
  double k_local = 2.0;
  double k_longhaul = 3.0;
  double relay_range = 300.0;     // r for relay placement and the g radius [m]

  double game_eps = 1e-8;
  int game_max_iter = 1000;
  double game_noise = 0.05;       // sigma^2 per player
  double shared_node_coupling = 0.3;

  double overload_threshold = 2.0;  // <= 0 selects the per-node default
  int receiver_cap = 8;
  double mac_success_p = 0.7;
  double quality_floor = 1.0;

  double loss_p = 0.05;
  double hop_delay = 0.01;
  int max_attempts = 3;

  double mobility_step = 2.0;     // [m] per tick
  double mobility_tick = 1.0;     // [s]
  double sample_interval = 16.0;  // [s]
  double rebuild_interval = 32.0; // clusters, trees, channels and games [s]
  double sim_time = 4096.0;       // [s]

  bool trace = false;

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
};

struct MetricsFrame {
  double time = 0.0;
  int node_count = 0;
  double relative_energy = 1.0;
  double blocking_prob = 0.0;     // [%]
  double addressing_ratio = 1.0;
  double mean_hops = 0.0;
  int max_tolerated_hops = 0;

  std::uint64_t attempts = 0;
  std::uint64_t blocked = 0;
  std::uint64_t mac_attempts = 0;
  std::uint64_t mac_successes = 0;

  double injected_bits = 0.0;
  double delivered_bits = 0.0;
  double in_flight_bits = 0.0;
  double dropped_bits = 0.0;

  double tx_energy = 0.0;        // [J]
  double baseline_energy = 0.0;  // same bits sent directly with J = 1 [J]
  double idle_energy = 0.0;      // [J]

  std::uint64_t negotiations_committed = 0;
  std::uint64_t negotiations_aborted = 0;
  double max_link_load = 0.0;    // largest allocated demand on a link [bit/s]
};

/// time,node_count,relative_energy,blocking_prob_pct,addressing_ratio,mean_hops,...
void write_timeseries_csv(std::ostream& out, const std::vector<MetricsFrame>& frames);

struct RunResult {
  MetricsFrame final;
  std::vector<MetricsFrame> series;
  bool connected = true;            // Boolean-model check at start
  std::vector<negotiation::TraceEntry> trace;
};

RunResult run(const SimConfig& config, Mode mode, double sim_time, std::uint64_t seed);

/// Single-session helper: per-bit energy of a direct J = 1 transmission.
double direct_energy_per_bit(const SimConfig& config, double distance);

}  // namespace mcca::sim
