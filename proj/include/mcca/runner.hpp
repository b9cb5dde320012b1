#pragma once

#include "mcca/config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mcca::cli {

struct PointResult {
  double sweep_value = 0.0;
  sim::Mode mode = sim::Mode::mcca_clss;
  std::uint64_t seed = 0;
  sim::RunResult result;
  std::string error;  // non-empty when the engine threw
};

/// Runs every (sweep point, mode, seed) combination on up to `jobs` threads.
/// Results come back sorted by sweep value, then mode, then seed, whatever
/// the completion order.
std::vector<PointResult> run_points(const RunConfig& config, int jobs);

/// node_count,mode,relative_energy,blocking_prob_pct,addressing_ratio,mean_hops,seed
void write_summary_csv(std::ostream& out, const std::vector<PointResult>& results);

/// One row per (sweep value, seed) that has both an mcca_clss and a
/// baseline_no_coop result; ratio columns are mcca / baseline.
void write_compare_csv(std::ostream& out, const std::vector<PointResult>& results);

/// Runs the config and writes artifacts under config.output_dir:
/// summary.csv, summary.json, effective.cfg, compare.csv when requested,
/// timeseries/ and trace/ per run. Returns 0 on success, 1 when any point
/// failed. I/O failures throw std::runtime_error.
int run_command(const RunConfig& config, int jobs, std::ostream& log);

}  // namespace mcca::cli
