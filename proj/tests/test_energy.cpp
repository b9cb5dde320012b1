#include "doctest.h"
#include "oracles.hpp"

#include "mcca/energy_model.hpp"

#include <random>

using namespace mcca::energy;

namespace {

EnergyParams full_set() {
  EnergyParams p;  // defaults are the published constants
  p.j_coop = 2;
  return p;
}

oracle::EnergyInputs to_oracle(const EnergyParams& p) {
  return {p.alpha, p.n_f, p.sigma2, p.link_margin, p.p_ct, p.p_cr, p.bandwidth, p.n0,
          p.p_b,   p.lambda, p.h_t,  p.h_r,        p.g1,   p.j_coop};
}

double rel(double a, long double b) { return static_cast<double>(std::abs((a - b) / b)); }

}  // namespace

TEST_SUITE("energy_model") {
  TEST_CASE("local energy with zero spread is the circuit term") {
    EnergyParams p;
    p.j_coop = 1;
    p.p_ct = 0.1;
    p.p_cr = 0.1;
    p.bandwidth = 1e4;
    CHECK(energy_local(p, {{}, {}, 0.0}) == doctest::Approx(2e-5).epsilon(1e-15));
  }

  TEST_CASE("doubling e_max quadruples the distance term") {
    const EnergyParams p = full_set();
    const double circuit = energy_local(p, {{}, {}, 0.0});
    const double a = energy_local(p, {{}, {}, 3.0}) - circuit;
    const double b = energy_local(p, {{}, {}, 6.0}) - circuit;
    CHECK(b / a == doctest::Approx(4.0).epsilon(1e-12));
  }

  TEST_CASE("local energy at the full parameter set matches the precomputed value") {
    // Evaluated beforehand at 40 significant digits.
    const double expected = 8126.835962936904599000459759821182408876;
    CHECK(rel(energy_local(full_set(), {{}, {}, 2.0}), expected) <= 1e-14);
  }

  TEST_CASE("long-haul energy at d = (100, 150), k = 2.5 matches the precomputed value") {
    const double expected = 3.096060612371291001738977806779710635003e-5;
    CHECK(rel(energy_longhaul(full_set(), {{100.0, 150.0}, {2.5, 2.5}, 0.0}), expected) <= 1e-13);
  }

  TEST_CASE("J = 1 long-haul energy equals the single-link budget") {
    EnergyParams p;
    p.j_coop = 1;
    const double d = 420.0;
    const double k = 3.0;
    const long double pi = 3.141592653589793238462643383279502884L;
    const long double path = 16.0L * pi * pi * std::pow(static_cast<long double>(d), k) /
                             (p.lambda * p.lambda * p.h_t * p.h_r);
    const long double expected = (p.p_ct + p.p_cr) / p.bandwidth +
                                 (1.0L + p.alpha) * p.n0 / p.p_b * path * p.sigma2 * p.link_margin * p.n_f;
    CHECK(rel(energy_longhaul(p, {{d}, {k}, 0.0}), expected) <= 1e-12);
  }

  TEST_CASE("scaling every distance by c scales the path sum by c^k") {
    const EnergyParams p = full_set();
    const double circuit = (2 * p.p_ct + p.p_cr) / p.bandwidth;
    const double a = energy_longhaul(p, {{80.0, 130.0}, {2.7, 2.7}, 0.0}) - circuit;
    const double b = energy_longhaul(p, {{240.0, 390.0}, {2.7, 2.7}, 0.0}) - circuit;
    CHECK(b / a == doctest::Approx(std::pow(3.0, 2.7)).epsilon(1e-10));
  }

  TEST_CASE("cluster head power at d = 200, k = 3, J = 2") {
    const double expected = 1.011928851253881386239646e-8;
    CHECK(rel(cluster_head_power(full_set(), 200.0, 3.0), expected) <= 1e-13);
  }

  TEST_CASE("cluster head power accepts a custom gain function") {
    const auto flat = [](double, double) { return 1.0; };
    const EnergyParams p = full_set();
    CHECK(cluster_head_power(p, 500.0, 4.0, flat) ==
          doctest::Approx(p.n0 * p.bandwidth / std::sqrt(p.p_b)).epsilon(1e-14));
  }

  TEST_CASE("p_b approaching one sends the denominator to one") {
    EnergyParams p = full_set();
    p.p_b = 1.0 - 1e-12;
    CHECK(cluster_head_power(p, 10.0, 2.0) == doctest::Approx(100.0 * p.n0 * p.bandwidth).epsilon(1e-9));
  }

  TEST_CASE("SNR floor") {
    CHECK(min_transmit_power(1e-6, 0.0) == 0.0);
    CHECK(min_transmit_power(1e-6, 3000.0) == doctest::Approx(9.0).epsilon(1e-15));
    CHECK_THROWS_AS(min_transmit_power(0.0, 1.0), std::invalid_argument);
  }

  TEST_CASE("random parameter vectors agree with the long double oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      EnergyParams p;
      p.alpha = 0.1 + u(rng);
      p.n_f = 1.0 + 20.0 * u(rng);
      p.sigma2 = 0.1 + 3.0 * u(rng);
      p.link_margin = 1.0 + 40.0 * u(rng);
      p.p_ct = 0.01 + 0.2 * u(rng);
      p.p_cr = 0.01 + 0.2 * u(rng);
      p.bandwidth = 1e3 + 1e5 * u(rng);
      p.n0 = 1e-21 * (1.0 + 9.0 * u(rng));
      p.p_b = std::pow(10.0, -1.0 - 5.0 * u(rng));
      p.lambda = 0.05 + 0.5 * u(rng);
      p.h_t = 0.5 + u(rng);
      p.h_r = 0.5 + u(rng);
      p.g1 = 0.1 + u(rng);
      p.j_coop = 1 + static_cast<int>(4.0 * u(rng));
      std::vector<double> d;
      std::vector<double> k;
      std::vector<long double> dl;
      std::vector<long double> kl;
      for (int j = 0; j < p.j_coop; ++j) {
        d.push_back(1.0 + 2000.0 * u(rng));
        k.push_back(2.0 + 2.0 * u(rng));
        dl.push_back(d.back());
        kl.push_back(k.back());
      }
      const double e_max = 50.0 * u(rng);
      const auto o = to_oracle(p);
      CHECK(rel(energy_local(p, {d, k, e_max}), oracle::local_energy(o, e_max)) <= 1e-12);
      CHECK(rel(energy_longhaul(p, {d, k, e_max}), oracle::longhaul_energy(o, dl, kl)) <= 1e-12);
      CHECK(rel(cluster_head_power(p, d[0], k[0]), oracle::head_power(o, dl[0], kl[0])) <= 1e-12);
    }
  }

  TEST_CASE("validation names the field") {
    EnergyParams p;
    p.p_b = 1.5;
    try {
      p.validate();
      FAIL("expected a throw");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("p_b") != std::string::npos);
    }
    EnergyParams q = full_set();
    CHECK_THROWS_AS(energy_longhaul(q, {{100.0}, {2.0}, 0.0}), std::invalid_argument);
  }
}
