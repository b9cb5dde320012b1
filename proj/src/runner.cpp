#include "mcca/runner.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace mcca::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int mode_rank(sim::Mode m) {
  switch (m) {
    case sim::Mode::mcca_clss: return 0;
    case sim::Mode::strategy_game_only: return 1;
    case sim::Mode::baseline_no_coop: return 2;
  }
  return 3;
}

std::string run_stem(const PointResult& r) {
  return std::string(sim::to_string(r.mode)) + "_n" + fmt(r.sweep_value) + "_s" +
         std::to_string(r.seed);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.exceptions(std::ios::badbit | std::ios::failbit);
  return out;
}

}  // namespace

std::vector<PointResult> run_points(const RunConfig& config, int jobs) {
  const std::vector<RunPoint> points = expand_sweep(config);
  std::vector<PointResult> results;
  for (const RunPoint& p : points)
    for (sim::Mode m : config.modes)
      for (std::uint64_t s : config.seeds) {
        PointResult r;
        r.sweep_value = p.sweep_value;
        r.mode = m;
        r.seed = s;
        results.push_back(std::move(r));
      }
  std::sort(results.begin(), results.end(), [](const PointResult& a, const PointResult& b) {
    return std::tuple(a.sweep_value, mode_rank(a.mode), a.seed) <
           std::tuple(b.sweep_value, mode_rank(b.mode), b.seed);
  });
  std::map<double, const sim::SimConfig*> by_value;
  for (const RunPoint& p : points) by_value.emplace(p.sweep_value, &p.sim);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < results.size(); i = next++) {
      PointResult& r = results[i];
      sim::SimConfig cfg = *by_value.at(r.sweep_value);
      cfg.trace = config.trace;
      try {
        r.result = sim::run(cfg, r.mode, cfg.sim_time, r.seed);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(results.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return results;
}

void write_summary_csv(std::ostream& out, const std::vector<PointResult>& results) {
  out << "node_count,mode,relative_energy,blocking_prob_pct,addressing_ratio,mean_hops,seed\n";
  for (const PointResult& r : results) {
    if (!r.error.empty()) continue;
    const sim::MetricsFrame& f = r.result.final;
    out << f.node_count << ',' << sim::to_string(r.mode) << ',' << fmt(f.relative_energy) << ','
        << fmt(f.blocking_prob) << ',' << fmt(f.addressing_ratio) << ',' << fmt(f.mean_hops)
        << ',' << r.seed << '\n';
  }
}

void write_compare_csv(std::ostream& out, const std::vector<PointResult>& results) {
  std::map<std::pair<double, std::uint64_t>, std::pair<const PointResult*, const PointResult*>> pairs;
  for (const PointResult& r : results) {
    if (!r.error.empty()) continue;
    auto& slot = pairs[{r.sweep_value, r.seed}];
    if (r.mode == sim::Mode::mcca_clss) slot.first = &r;
    if (r.mode == sim::Mode::baseline_no_coop) slot.second = &r;
  }
  auto ratio = [](double a, double b) { return b == 0.0 ? (a == 0.0 ? 1.0 : 0.0) : a / b; };
  out << "node_count,seed,mcca_relative_energy,baseline_relative_energy,energy_ratio,"
         "mcca_blocking_prob_pct,baseline_blocking_prob_pct,blocking_ratio\n";
  for (const auto& [key, pr] : pairs) {
    if (!pr.first || !pr.second) continue;
    const sim::MetricsFrame& a = pr.first->result.final;
    const sim::MetricsFrame& b = pr.second->result.final;
    out << a.node_count << ',' << key.second << ',' << fmt(a.relative_energy) << ','
        << fmt(b.relative_energy) << ',' << fmt(ratio(a.relative_energy, b.relative_energy)) << ','
        << fmt(a.blocking_prob) << ',' << fmt(b.blocking_prob) << ','
        << fmt(ratio(a.blocking_prob, b.blocking_prob)) << '\n';
  }
}

int run_command(const RunConfig& config, int jobs, std::ostream& log) {
  config.validate();
  const fs::path root = config.output_dir;
  fs::create_directories(root);

  const std::vector<PointResult> results = run_points(config, jobs);

  {
    std::ofstream out = open_out(root / "effective.cfg");
    dump_config(out, config);
  }
  {
    std::ofstream out = open_out(root / "summary.csv");
    write_summary_csv(out, results);
  }
  if (config.compare) {
    std::ofstream out = open_out(root / "compare.csv");
    write_compare_csv(out, results);
  }
  if (config.timeseries) {
    fs::create_directories(root / "timeseries");
    for (const PointResult& r : results) {
      if (!r.error.empty()) continue;
      std::ofstream out = open_out(root / "timeseries" / (run_stem(r) + ".csv"));
      sim::write_timeseries_csv(out, r.result.series);
    }
  }
  if (config.trace) {
    fs::create_directories(root / "trace");
    for (const PointResult& r : results) {
      if (!r.error.empty()) continue;
      std::ofstream out = open_out(root / "trace" / (run_stem(r) + ".csv"));
      negotiation::write_trace(out, r.result.trace);
    }
  }

  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  int failures = 0;
  for (const PointResult& r : results) {
    nlohmann::ordered_json j;
    j["sweep_variable"] = config.sweep_variable;
    j["sweep_value"] = r.sweep_value;
    j["mode"] = sim::to_string(r.mode);
    j["seed"] = r.seed;
    if (!r.error.empty()) {
      ++failures;
      j["error"] = r.error;
      log << "error: " << run_stem(r) << ": " << r.error << '\n';
    } else {
      const sim::MetricsFrame& f = r.result.final;
      j["connected"] = r.result.connected;
      j["node_count"] = f.node_count;
      j["relative_energy"] = f.relative_energy;
      j["blocking_prob_pct"] = f.blocking_prob;
      j["addressing_ratio"] = f.addressing_ratio;
      j["mean_hops"] = f.mean_hops;
      j["max_tolerated_hops"] = f.max_tolerated_hops;
      j["attempts"] = f.attempts;
      j["blocked"] = f.blocked;
      j["injected_bits"] = f.injected_bits;
      j["delivered_bits"] = f.delivered_bits;
      j["dropped_bits"] = f.dropped_bits;
      j["negotiations_committed"] = f.negotiations_committed;
      j["negotiations_aborted"] = f.negotiations_aborted;
    }
    runs.push_back(std::move(j));
  }
  {
    nlohmann::ordered_json summary;
    summary["runs"] = std::move(runs);
    summary["failures"] = failures;
    std::ofstream out = open_out(root / "summary.json");
    out << summary.dump(2) << '\n';
  }
  log << results.size() - static_cast<std::size_t>(failures) << " of " << results.size()
      << " runs completed, artifacts in " << root.string() << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace mcca::cli
