#pragma once

#include "mcca/sim_engine.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mcca::cli {

/// Everything a batch invocation needs. Parsed from a flat `key = value`
/// file with dotted namespaces; absent keys keep their defaults.
struct RunConfig {
  sim::SimConfig sim;

  std::vector<sim::Mode> modes{sim::Mode::mcca_clss};
  std::vector<std::uint64_t> seeds{1};

  std::string sweep_variable = "scenario.node_count";
  std::vector<double> sweep_values;  // empty: a single point at the configured value

  std::string output_dir = "out";
  bool timeseries = true;
  bool trace = false;
  bool compare = false;

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
};

/// Raised for malformed input; the message carries the line number.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every accepted key, in dump order.
std::vector<std::string> config_keys();

/// Reads `key = value` lines; '#' starts a comment. Unknown keys, duplicate
/// keys and unparsable values are rejected.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Sets one key from its textual form.
void set_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_value(const RunConfig& config, std::string_view key);

/// Writes every key; parse_config on the output yields an identical config.
void dump_config(std::ostream& out, const RunConfig& config);

/// MCCA_<KEY> with '.' spelled "__", e.g. MCCA_SCENARIO__NODE_COUNT.
std::string env_name(std::string_view key);
/// Applies overrides for every key whose variable is set. `lookup` defaults
/// to std::getenv.
void apply_env(RunConfig& config,
               const std::function<const char*(const char*)>& lookup = {});

/// "a:b:step" (inclusive) or a comma list.
std::vector<double> parse_sweep(std::string_view text);
std::vector<std::uint64_t> parse_seeds(std::string_view text);
std::vector<sim::Mode> parse_modes(std::string_view text);

struct RunPoint {
  double sweep_value = 0.0;
  sim::SimConfig sim;
};

/// One SimConfig per sweep value, each validated.
std::vector<RunPoint> expand_sweep(const RunConfig& config);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace mcca::cli
