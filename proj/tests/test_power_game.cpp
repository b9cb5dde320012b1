#include "doctest.h"
#include "oracles.hpp"

#include "mcca/power_game.hpp"

#include <random>

using namespace mcca::game;

namespace {

PowerGame make(const Eigen::MatrixXd& m, const Eigen::VectorXd& mu_over_t, const Eigen::VectorXd& s2,
               double qmax) {
  const Eigen::Index n = m.rows();
  PowerGame g;
  g.m = m;
  g.mu = mu_over_t;
  g.t = Eigen::VectorXd::Ones(n);
  g.sigma2 = s2;
  g.q_max = Eigen::VectorXd::Constant(n, qmax);
  g.q = Eigen::VectorXd::Zero(n);
  return g;
}

PowerGame random_game(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PowerGame g;
  g.m = Eigen::MatrixXd(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j)
      if (i != j) off += g.m(i, j) = 0.3 * u(rng);
    g.m(i, i) = off + 0.2 + u(rng);
  }
  g.mu = Eigen::VectorXd(n);
  g.t = Eigen::VectorXd(n);
  g.sigma2 = Eigen::VectorXd(n);
  g.q_max = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) {
    g.mu(i) = 0.5 + 2.0 * u(rng);
    g.t(i) = 0.5 + u(rng);
    g.sigma2(i) = 0.2 * u(rng);
    g.q_max(i) = 1.0 + 2.0 * u(rng);
  }
  g.q = Eigen::VectorXd::Zero(n);
  return g;
}

}  // namespace

TEST_SUITE("power_game") {
  TEST_CASE("decoupled game responds with the clamped price") {
    PowerGame g = make(Eigen::MatrixXd::Identity(3, 3), Eigen::Vector3d(0.4, 2.5, -1.0),
                       Eigen::Vector3d::Zero(), 1.0);
    const Eigen::VectorXd q1 = best_response_step(g);
    CHECK(q1(0) == 0.4);
    CHECK(q1(1) == 1.0);
    CHECK(q1(2) == 0.0);
    g.q = q1;
    CHECK(best_response_step(g) == q1);
  }

  TEST_CASE("decoupled game reaches its fixed point after one step") {
    PowerGame g = make(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(0.3, 0.6),
                       Eigen::Vector2d::Zero(), 1.0);
    const auto c = iterate_to_convergence(g, 1e-12, 100);
    CHECK(c.converged);
    // Step one lands on the fixed point; step two observes zero change.
    CHECK(c.iterations == 2);
    CHECK(c.q == Eigen::Vector2d(0.3, 0.6));
  }

  TEST_CASE("starting at the fixed point converges in one iteration") {
    PowerGame g = make(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(0.3, 0.6),
                       Eigen::Vector2d::Zero(), 1.0);
    g.q = Eigen::Vector2d(0.3, 0.6);
    const auto c = iterate_to_convergence(g, 1e-12, 100);
    CHECK(c.converged);
    CHECK(c.iterations == 1);
  }

  TEST_CASE("two-player game matches the linear system") {
    Eigen::Matrix2d m;
    m << 1.0, 0.2, 0.2, 1.0;
    PowerGame g = make(m, Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d(0.1, 0.1), 10.0);
    const auto c = iterate_to_convergence(g, 1e-14, 1000);
    REQUIRE(c.converged);
    // q_i + 0.2 q_j = 1 - 0.1
    const Eigen::Vector2d expected = m.fullPivLu().solve(Eigen::Vector2d(0.9, 0.9));
    CHECK(c.q(0) == doctest::Approx(expected(0)).epsilon(1e-12));
    CHECK(c.q(1) == doctest::Approx(expected(1)).epsilon(1e-12));
  }

  TEST_CASE("random 5-player games match the active-set oracle") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
      PowerGame g = random_game(rng, 5);
      const double eps = 1e-12;
      const auto c = iterate_to_convergence(g, eps, 5000);
      REQUIRE(c.converged);
      Eigen::VectorXd expected;
      REQUIRE(oracle::game_equilibrium(g.m, g.mu, g.t, g.sigma2, g.q_max, expected));
      CHECK((c.q - expected).lpNorm<Eigen::Infinity>() <= 1e-9);
      CHECK(verify_nash(g, c.q, 200, 1e-6));
      CHECK(coupling_spectral_radius(g) < 1.0);
    }
  }

  TEST_CASE("verify_nash rejects a perturbed interior equilibrium") {
    Eigen::Matrix2d m;
    m << 1.0, 0.2, 0.2, 1.0;
    PowerGame g = make(m, Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d(0.1, 0.1), 2.0);
    const auto c = iterate_to_convergence(g, 1e-14, 1000);
    CHECK(verify_nash(g, c.q, 200, 1e-6));
    Eigen::VectorXd bad = c.q;
    bad(0) *= 1.1;
    CHECK_FALSE(verify_nash(g, bad, 200, 1e-6));
  }

  TEST_CASE("3-player equilibrium passes the deviation grid") {
    std::mt19937_64 rng(4);
    PowerGame g = random_game(rng, 3);
    const auto c = iterate_to_convergence(g, 1e-12, 1000);
    CHECK(verify_nash(g, c.q, 200, 1e-6));
  }

  TEST_CASE("iteration cap without convergence is reported") {
    Eigen::Matrix2d m;
    m << 1.0, 0.9, 0.9, 1.0;
    PowerGame g = make(m, Eigen::Vector2d(1.0, 1.0), Eigen::Vector2d::Zero(), 10.0);
    const auto c = iterate_to_convergence(g, 1e-15, 3);
    CHECK_FALSE(c.converged);
    CHECK(c.iterations == 3);
  }

  TEST_CASE("invalid games are rejected") {
    PowerGame g = make(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1, 1), Eigen::Vector2d::Zero(), 1.0);
    g.m(0, 0) = 0.0;
    CHECK_THROWS_AS(best_response_step(g), std::invalid_argument);
    g.m(0, 0) = 1.0;
    g.m(0, 1) = -0.1;
    CHECK_THROWS_AS(best_response_step(g), std::invalid_argument);
  }

  TEST_CASE("utility maximisers") {
    CHECK(argmax(QuadraticUtility{3.0, 2.0}) == 0.75);
    CHECK(argmax(LogLinearUtility{1.5}) == 0.0);
    CHECK(argmax(LogLinearUtility{0.25}) == 3.0);
    CHECK_THROWS_AS(argmax(QuadraticUtility{1.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate_utility(LogLinearUtility{-1.0}), std::invalid_argument);

    for (const Utility& u : {Utility{QuadraticUtility{1.0, 1.0}}, Utility{LogLinearUtility{0.4}}}) {
      double best_x = 0.0;
      double best = -1e300;
      for (int i = 0; i <= 10000; ++i) {
        const double x = 5.0 * i / 10000.0;
        if (evaluate(u, x) > best) {
          best = evaluate(u, x);
          best_x = x;
        }
      }
      CHECK(std::abs(argmax(u) - best_x) <= 5.0 / 10000.0);
    }

    const auto opt = maximize_utilities({QuadraticUtility{1, 1}, LogLinearUtility{0.5}},
                                        {QuadraticUtility{2, 1}, LogLinearUtility{2.0}});
    CHECK(opt == UtilityOptimum{0.5, 1.0, 1.0, 0.0});
  }
}
