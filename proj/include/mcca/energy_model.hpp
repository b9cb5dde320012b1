#pragma once

#include <functional>
#include <vector>

namespace mcca::energy {

/// Radio and link-budget constants shared by the local (intra-cluster) and
/// long-haul cooperative energy expressions. SI units throughout.
struct EnergyParams {
  double alpha = 0.4706;       // RF amplifier inefficiency factor
  double n_f = 10.0;           // receiver noise figure (linear)
  double sigma2 = 1.0;         // channel gain factor at the 2 m reference
  double link_margin = 10.0;   // M_i (linear)
  double p_ct = 0.0982;        // transmitter circuit power [W]
  double p_cr = 0.1125;        // receiver circuit power [W]
  double bandwidth = 1.0e4;    // [Hz]
  double n0 = 4.0e-21;         // single-sided noise PSD [W/Hz]
  double p_b = 1.0e-3;         // target bit error rate
  double lambda = 0.125;       // carrier wavelength [m]
  double h_t = 1.0;            // transmit antenna gain
  double h_r = 1.0;            // receive antenna gain
  double g1 = 1.0;             // induced-scenario gain constant
  int j_coop = 2;              // cooperating nodes J

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;
};

struct LinkGeometry {
  std::vector<double> distances;            // d_jt per cooperating node [m]
  std::vector<double> path_loss_exponents;  // k_jt per cooperating node
  double e_max = 0.0;                       // max member-to-head distance [m]
};

/// Path-gain function G(d, k) used by cluster_head_power.
using GainFn = std::function<double(double distance, double exponent)>;

/// d^k, the default path gain.
double power_law_gain(double distance, double exponent);

/// Per-bit energy of the local broadcast among the J cooperating nodes.
/// (p_ct + J p_cr)/B + 2(1+alpha) n_f sigma2 (-ln p_b) g1 e_max^2 M.
double energy_local(const EnergyParams& params, const LinkGeometry& geom);

/// Per-bit energy of the cooperative long-haul MIMO transmission.
double energy_longhaul(const EnergyParams& params, const LinkGeometry& geom);

/// One cooperative round: energy_local + energy_longhaul.
double total_energy_per_bit(const EnergyParams& params, const LinkGeometry& geom);

/// Transmit power a cooperating node needs towards the cluster head:
/// G(d, k) n0 B / p_b^(1/J).
double cluster_head_power(const EnergyParams& params, double distance, double exponent,
                          const GainFn& gain_fn = power_law_gain);

/// SNR floor tau * R^2 for covering range R.
double min_transmit_power(double tau, double range);

}  // namespace mcca::energy
