#include "doctest.h"
#include "oracles.hpp"

#include "mcca/capacity.hpp"

#include <limits>
#include <random>

using namespace mcca::capacity;

namespace {

CoopChannel scalar(double m1, double m2, double beta, double power) {
  CoopChannel ch;
  ch.m1 = Eigen::MatrixXd::Constant(1, 1, m1);
  ch.m2 = Eigen::MatrixXd::Constant(1, 1, m2);
  ch.beta = beta;
  ch.power_budget = power;
  ch.ns = Eigen::MatrixXd::Identity(2, 2);
  ch.nr = Eigen::MatrixXd::Identity(2, 2);
  return ch;
}

Eigen::MatrixXd random_psd(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return scale * a * a.transpose();
}

}  // namespace

TEST_SUITE("capacity") {
  TEST_CASE("stacking") {
    auto [a, b] = stack_channels(scalar(1.0, 2.0, 0.5, 1.0));
    CHECK(a.rows() == 2);
    CHECK(a(0, 0) == 1.0);
    CHECK(a(1, 0) == 1.0);
    CHECK(b(0, 0) == 0.5);
    CHECK(b(1, 0) == 2.0);

    auto [c, d] = stack_channels(scalar(3.0, 4.0, 0.0, 1.0));
    CHECK(c(1, 0) == 0.0);
    CHECK(d(0, 0) == 0.0);

    CoopChannel same = scalar(1.0, 1.0, 1.0, 1.0);
    same.m1 = Eigen::MatrixXd::Random(2, 2);
    same.m2 = same.m1;
    same.ns = same.nr = Eigen::MatrixXd::Identity(4, 4);
    auto [e, f] = stack_channels(same);
    CHECK(e.isApprox(f));
  }

  TEST_CASE("zero covariance gives zero rate") {
    CHECK(r_coop(scalar(1.0, 1.0, 0.3, 2.0), {Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1)}) ==
          0.0);
  }

  TEST_CASE("scalar decoupled channel is the Shannon form") {
    const double p = 3.0;
    const double r = r_coop(scalar(1.0, 1.0, 0.0, p),
                            {Eigen::MatrixXd::Constant(1, 1, p), Eigen::MatrixXd::Zero(1, 1)});
    CHECK(r == doctest::Approx(std::log2(1.0 + p)).epsilon(1e-14));
  }

  TEST_CASE("2x2 rate matches an LU determinant") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      CoopChannel ch;
      ch.m1 = Eigen::MatrixXd::Random(2, 2);
      ch.m2 = Eigen::MatrixXd::Random(2, 2);
      ch.beta = 0.4;
      ch.power_budget = 10.0;
      const Eigen::VectorXd ns = Eigen::Vector4d(0.5, 1.0, 1.5, 2.0);
      const Eigen::VectorXd nr = Eigen::Vector4d(2.0, 0.7, 1.2, 0.9);
      ch.ns = ns.asDiagonal();
      ch.nr = nr.asDiagonal();
      const Covariances cov{random_psd(rng, 2, 0.5), random_psd(rng, 2, 0.5)};
      if (cov.q1.trace() + cov.q2.trace() > ch.power_budget) continue;
      auto [s1, s2] = stack_channels(ch);
      const double expected = oracle::coop_rate(s1, s2, ns, nr, cov.q1, cov.q2);
      CHECK(r_coop(ch, cov) == doctest::Approx(expected).epsilon(1e-9));
    }
  }

  TEST_CASE("zero budget") {
    const auto res = maximize_r_coop(scalar(1.0, 1.0, 0.5, 0.0));
    CHECK(res.rate == 0.0);
    CHECK(res.covariances.q1.norm() == 0.0);
    CHECK(res.covariances.q2.norm() == 0.0);
  }

  TEST_CASE("symmetric decoupled channel splits the budget evenly") {
    const double p = 4.0;
    const auto res = maximize_r_coop(scalar(1.0, 1.0, 0.0, p));
    CHECK(res.rate == doctest::Approx(2.0 * std::log2(1.0 + p / 2.0)).epsilon(1e-8));
    CHECK(res.covariances.q1(0, 0) == doctest::Approx(p / 2.0).epsilon(1e-4));
  }

  TEST_CASE("optimizer output is feasible and matches the grid oracle") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 3; ++trial) {
      CoopChannel ch;
      ch.m1 = Eigen::MatrixXd(2, 2);
      ch.m2 = Eigen::MatrixXd(2, 2);
      for (int i = 0; i < 4; ++i) {
        ch.m1(i / 2, i % 2) = g(rng);
        ch.m2(i / 2, i % 2) = g(rng);
      }
      ch.beta = 0.3;
      ch.power_budget = 5.0;
      const Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
      ch.ns = ch.nr = Eigen::MatrixXd::Identity(4, 4);
      const auto res = maximize_r_coop(ch);
      CHECK(res.covariances.q1.trace() + res.covariances.q2.trace() <= ch.power_budget * (1 + 1e-9));
      auto [s1, s2] = stack_channels(ch);
      const double grid = oracle::coop_rate_grid(s1, s2, w, w, ch.power_budget);
      CHECK(std::abs(res.rate - grid) <= 1e-3);
    }
  }

  TEST_CASE("iteration cap is reported distinctly") {
    CoopChannel ch = scalar(1.0, 0.2, 0.5, 10.0);
    OptimizerOptions opts;
    opts.max_iterations = 1;
    opts.tolerance = 1e-15;
    CHECK_THROWS_AS(maximize_r_coop(ch, opts), OptimizationError);
    ch.beta = 2.0;
    CHECK_THROWS_AS(maximize_r_coop(ch), std::invalid_argument);
  }

  TEST_CASE("achievable minimum rate") {
    CHECK(achievable_min_rate(0.0, 4.0) == 0.0);
    CHECK(achievable_min_rate(2.5, std::numeric_limits<double>::infinity()) == 5.0);
    CHECK(achievable_min_rate(3.0, 5.0) == 5.0);
  }

  TEST_CASE("state randomization") {
    StateMatrix s{Eigen::MatrixXd::Random(3, 2), Eigen::Vector2d::Zero()};
    CHECK(randomize_state(s).isZero());
    s.g = Eigen::MatrixXd::Identity(2, 2);
    s.r = Eigen::Vector2d(0.3, -1.2);
    CHECK(randomize_state(s) == s.r);
    Eigen::MatrixXd g(3, 2);
    g << 1, 2, 3, 4, 5, 6;
    s.g = g;
    s.r = Eigen::Vector2d(1, 1);
    const Eigen::VectorXd out = randomize_state(s);
    for (int i = 0; i < 3; ++i) CHECK(out(i) == g(i, 0) + g(i, 1));
  }
}
