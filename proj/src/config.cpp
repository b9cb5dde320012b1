#include "mcca/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace mcca::cli {

namespace {

using Slot = std::variant<double*, int*, std::uint64_t*, bool*, std::string*>;

struct Field {
  const char* key;
  Slot slot;
};

/// The single source of truth for the schema.
std::vector<Field> fields(RunConfig& c) {
  auto& s = c.sim;
  auto& e = s.energy;
  auto& sc = s.scenario;
  return {
      {"scenario.width", &sc.width},
      {"scenario.height", &sc.height},
      {"scenario.cell_radius", &sc.cell_radius},
      {"scenario.spacing", &sc.spacing},
      {"scenario.node_count", &sc.node_count},
      {"scenario.relay_range", &s.relay_range},
      {"energy.alpha", &e.alpha},
      {"energy.n_f", &e.n_f},
      {"energy.sigma2", &e.sigma2},
      {"energy.link_margin", &e.link_margin},
      {"energy.p_ct", &e.p_ct},
      {"energy.p_cr", &e.p_cr},
      {"energy.bandwidth", &e.bandwidth},
      {"energy.n0", &e.n0},
      {"energy.p_b", &e.p_b},
      {"energy.lambda", &e.lambda},
      {"energy.h_t", &e.h_t},
      {"energy.h_r", &e.h_r},
      {"energy.g1", &e.g1},
      {"energy.j_coop", &e.j_coop},
      {"energy.k_local", &s.k_local},
      {"energy.k_longhaul", &s.k_longhaul},
      {"energy.idle_power", &s.idle_power},
      {"game.eps", &s.game_eps},
      {"game.max_iter", &s.game_max_iter},
      {"game.q_max", &s.q_max},
      {"game.tau", &s.tau},
      {"game.noise", &s.game_noise},
      {"game.shared_node_coupling", &s.shared_node_coupling},
      {"protocol.hop_delay", &s.hop_delay},
      {"protocol.loss_p", &s.loss_p},
      {"protocol.max_attempts", &s.max_attempts},
      {"protocol.overload_threshold", &s.overload_threshold},
      {"protocol.receiver_cap", &s.receiver_cap},
      {"mac.channel_count", &s.channel_count},
      {"mac.success_p", &s.mac_success_p},
      {"mac.quality_floor", &s.quality_floor},
      {"flow.count", &s.flow_count},
      {"flow.demand", &s.flow_demand},
      {"flow.link_capacity", &s.link_capacity},
      {"flow.mean_session", &s.mean_session},
      {"flow.mean_idle", &s.mean_idle},
      {"flow.background_rate", &s.background_rate},
      {"sim.time", &s.sim_time},
      {"sim.mobility_step", &s.mobility_step},
      {"sim.mobility_tick", &s.mobility_tick},
      {"sim.sample_interval", &s.sample_interval},
      {"sim.rebuild_interval", &s.rebuild_interval},
      {"sweep.variable", &c.sweep_variable},
      {"output.dir", &c.output_dir},
      {"output.timeseries", &c.timeseries},
      {"output.trace", &c.trace},
      {"output.compare", &c.compare},
  };
}

// Keys whose values are lists; stored parsed, so they are handled apart.
constexpr const char* kListKeys[] = {"run.modes", "run.seeds", "sweep.values"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v))
    throw std::invalid_argument(std::string(key) + ": expected a number, got '" + t + "'");
  return v;
}

template <class Int>
Int parse_int(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
    throw std::invalid_argument(std::string(key) + ": expected an integer, got '" + t + "'");
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw std::invalid_argument(std::string(key) + ": expected true or false, got '" + t + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& items, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  try {
    sim.energy.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("energy.") + e.what());
  }
  sim.validate();
  if (modes.empty()) throw std::invalid_argument("run.modes: at least one mode required");
  if (seeds.empty()) throw std::invalid_argument("run.seeds: at least one seed required");
  if (output_dir.empty()) throw std::invalid_argument("output.dir: must not be empty");
  const auto keys = config_keys();
  if (std::find(keys.begin(), keys.end(), sweep_variable) == keys.end() ||
      sweep_variable.rfind("output.", 0) == 0 || sweep_variable.rfind("sweep.", 0) == 0 ||
      sweep_variable.rfind("run.", 0) == 0)
    throw std::invalid_argument("sweep.variable: '" + sweep_variable + "' is not a numeric key");
  if (compare) {
    const bool both = std::count(modes.begin(), modes.end(), sim::Mode::mcca_clss) &&
                      std::count(modes.begin(), modes.end(), sim::Mode::baseline_no_coop);
    if (!both)
      throw std::invalid_argument(
          "output.compare: run.modes must include mcca_clss and baseline_no_coop");
  }
}

std::vector<std::string> config_keys() {
  RunConfig scratch;
  std::vector<std::string> out;
  for (const Field& f : fields(scratch)) out.emplace_back(f.key);
  for (const char* k : kListKeys) out.emplace_back(k);
  return out;
}

void set_value(RunConfig& config, std::string_view key, std::string_view value) {
  if (key == "run.modes") {
    config.modes = parse_modes(value);
    return;
  }
  if (key == "run.seeds") {
    config.seeds = parse_seeds(value);
    return;
  }
  if (key == "sweep.values") {
    config.sweep_values = parse_sweep(value);
    return;
  }
  for (Field& f : fields(config)) {
    if (key != f.key) continue;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>)
            *p = parse_double(key, value);
          else if constexpr (std::is_same_v<T, int>)
            *p = parse_int<int>(key, value);
          else if constexpr (std::is_same_v<T, std::uint64_t>)
            *p = parse_int<std::uint64_t>(key, value);
          else if constexpr (std::is_same_v<T, bool>)
            *p = parse_bool(key, value);
          else
            *p = trim(value);
        },
        f.slot);
    return;
  }
  throw std::invalid_argument("unknown key: " + std::string(key));
}

std::string get_value(const RunConfig& config, std::string_view key) {
  if (key == "run.modes")
    return join(config.modes, [](sim::Mode m) { return std::string(sim::to_string(m)); });
  if (key == "run.seeds")
    return join(config.seeds, [](std::uint64_t s) { return std::to_string(s); });
  if (key == "sweep.values") return join(config.sweep_values, format_double);
  RunConfig& c = const_cast<RunConfig&>(config);
  for (const Field& f : fields(c)) {
    if (key != f.key) continue;
    return std::visit(
        [](auto* p) -> std::string {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>)
            return format_double(*p);
          else if constexpr (std::is_same_v<T, bool>)
            return *p ? "true" : "false";
          else if constexpr (std::is_same_v<T, std::string>)
            return *p;
          else
            return std::to_string(*p);
        },
        f.slot);
  }
  throw std::invalid_argument("unknown key: " + std::string(key));
}

RunConfig parse_config(std::istream& in) {
  RunConfig config;
  std::set<std::string> seen;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(number) + ": duplicate key " + key);
    try {
      set_value(config, key, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in);
}

void dump_config(std::ostream& out, const RunConfig& config) {
  for (const std::string& key : config_keys()) out << key << " = " << get_value(config, key) << '\n';
}

std::string env_name(std::string_view key) {
  std::string out = "MCCA_";
  for (char ch : key) {
    if (ch == '.')
      out += "__";
    else
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return out;
}

void apply_env(RunConfig& config, const std::function<const char*(const char*)>& lookup) {
  auto get = lookup ? lookup : [](const char* name) -> const char* { return std::getenv(name); };
  for (const std::string& key : config_keys()) {
    const std::string name = env_name(key);
    if (const char* v = get(name.c_str())) {
      try {
        set_value(config, key, v);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(name + ": " + e.what());
      }
    }
  }
  config.validate();
}

std::vector<double> parse_sweep(std::string_view text) {
  const std::string s = trim(text);
  if (s.empty()) return {};
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::istringstream in(s);
    std::string p;
    while (std::getline(in, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw std::invalid_argument("sweep.values: expected start:stop:step");
    const double a = parse_double("sweep.values", parts[0]);
    const double b = parse_double("sweep.values", parts[1]);
    const double step = parse_double("sweep.values", parts[2]);
    if (!(step > 0.0) || b < a) throw std::invalid_argument("sweep.values: need step > 0 and stop >= start");
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
  }
  std::vector<double> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_double("sweep.values", item));
  return out;
}

std::vector<std::uint64_t> parse_seeds(std::string_view text) {
  const std::string s = trim(text);
  if (auto colon = s.find(':'); colon != std::string::npos) {
    const auto a = parse_int<std::uint64_t>("run.seeds", s.substr(0, colon));
    const auto b = parse_int<std::uint64_t>("run.seeds", s.substr(colon + 1));
    if (b < a) throw std::invalid_argument("run.seeds: range end before start");
    std::vector<std::uint64_t> out;
    for (auto v = a; v <= b; ++v) out.push_back(v);
    return out;
  }
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_int<std::uint64_t>("run.seeds", item));
  return out;
}

std::vector<sim::Mode> parse_modes(std::string_view text) {
  std::vector<sim::Mode> out;
  for (const std::string& item : split_list(text)) {
    if (item == "all") {
      out = {sim::Mode::mcca_clss, sim::Mode::strategy_game_only, sim::Mode::baseline_no_coop};
      continue;
    }
    try {
      out.push_back(sim::parse_mode(item));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("run.modes: unknown mode '" + item + "'");
    }
  }
  return out;
}

std::vector<RunPoint> expand_sweep(const RunConfig& config) {
  config.validate();
  std::vector<RunPoint> out;
  if (config.sweep_values.empty()) {
    RunConfig copy = config;
    out.push_back({parse_double(copy.sweep_variable, get_value(copy, copy.sweep_variable)), copy.sim});
    return out;
  }
  for (double v : config.sweep_values) {
    RunConfig copy = config;
    set_value(copy, copy.sweep_variable, format_double(v));
    try {
      copy.sim.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sweep value " + format_double(v) + ": " + e.what());
    }
    out.push_back({v, copy.sim});
  }
  return out;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  for (const std::string& key : config_keys())
    if (get_value(a, key) != get_value(b, key)) return false;
  return true;
}

}  // namespace mcca::cli
