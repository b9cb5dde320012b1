#include "mcca/energy_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mcca::energy {

namespace {

void require(bool ok, const char* field, const char* reason) {
  if (!ok) throw std::invalid_argument(std::string(field) + ": " + reason);
}

}  // namespace

void EnergyParams::validate() const {
  require(alpha > 0.0, "alpha", "must be > 0");
  require(n_f >= 1.0, "n_f", "must be >= 1");
  require(sigma2 > 0.0, "sigma2", "must be > 0");
  require(link_margin >= 1.0, "link_margin", "must be >= 1");
  require(p_ct > 0.0, "p_ct", "must be > 0");
  require(p_cr > 0.0, "p_cr", "must be > 0");
  require(bandwidth > 0.0, "bandwidth", "must be > 0");
  require(n0 > 0.0, "n0", "must be > 0");
  require(p_b > 0.0 && p_b < 1.0, "p_b", "must lie in (0,1)");
  require(lambda > 0.0, "lambda", "must be > 0");
  require(h_t > 0.0, "h_t", "must be > 0");
  require(h_r > 0.0, "h_r", "must be > 0");
  require(g1 > 0.0, "g1", "must be > 0");
  require(j_coop >= 1, "j_coop", "must be >= 1");
}

double power_law_gain(double distance, double exponent) {
  return std::pow(distance, exponent);
}

double energy_local(const EnergyParams& params, const LinkGeometry& geom) {
  params.validate();
  require(geom.e_max >= 0.0, "e_max", "must be >= 0");
  const double j = params.j_coop;
  const double circuit = (params.p_ct + j * params.p_cr) / params.bandwidth;
  // ln(p_b) < 0, so -ln(p_b) keeps the amplifier term positive.
  const double amplifier = 2.0 * (1.0 + params.alpha) * params.n_f * params.sigma2 *
                           (-std::log(params.p_b)) * params.g1 * geom.e_max * geom.e_max *
                           params.link_margin;
  return circuit + amplifier;
}

double energy_longhaul(const EnergyParams& params, const LinkGeometry& geom) {
  params.validate();
  const auto j = static_cast<std::size_t>(params.j_coop);
  require(geom.distances.size() == j, "distances", "length must equal j_coop");
  require(geom.path_loss_exponents.size() == j, "path_loss_exponents",
          "length must equal j_coop");

  const double pi = std::numbers::pi;
  const double budget_den = params.lambda * params.lambda * params.h_t * params.h_r;
  double path_sum = 0.0;
  for (std::size_t i = 0; i < j; ++i) {
    require(geom.distances[i] > 0.0, "distances", "every d_jt must be > 0");
    require(geom.path_loss_exponents[i] >= 1.0, "path_loss_exponents", "every k_jt must be >= 1");
    path_sum += 16.0 * pi * pi * std::pow(geom.distances[i], geom.path_loss_exponents[i]) / budget_den;
  }
  const double circuit = (static_cast<double>(j) * params.p_ct + params.p_cr) / params.bandwidth;
  const double noise = params.n0 / std::pow(params.p_b, 1.0 / static_cast<double>(j));
  return circuit + (1.0 + params.alpha) * noise * path_sum * params.sigma2 * params.link_margin *
                       params.n_f;
}

double total_energy_per_bit(const EnergyParams& params, const LinkGeometry& geom) {
  return energy_local(params, geom) + energy_longhaul(params, geom);
}

double cluster_head_power(const EnergyParams& params, double distance, double exponent,
                          const GainFn& gain_fn) {
  params.validate();
  require(distance > 0.0, "distance", "must be > 0");
  const GainFn& gain = gain_fn ? gain_fn : GainFn(power_law_gain);
  return gain(distance, exponent) * params.n0 * params.bandwidth /
         std::pow(params.p_b, 1.0 / static_cast<double>(params.j_coop));
}

double min_transmit_power(double tau, double range) {
  require(tau > 0.0, "tau", "must be > 0");
  require(range >= 0.0, "range", "must be >= 0");
  return tau * range * range;
}

}  // namespace mcca::energy
