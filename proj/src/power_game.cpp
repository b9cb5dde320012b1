#include "mcca/power_game.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mcca::game {

void PowerGame::validate() const {
  const Eigen::Index n = q.size();
  if (m.rows() != n || m.cols() != n || mu.size() != n || t.size() != n || sigma2.size() != n ||
      q_max.size() != n)
    throw std::invalid_argument("power game: inconsistent dimensions");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(m(i, i) > 0.0)) throw std::invalid_argument("power game: M_ii must be > 0");
    if (!(t(i) > 0.0)) throw std::invalid_argument("power game: t_i must be > 0");
    if (sigma2(i) < 0.0) throw std::invalid_argument("power game: sigma2_i must be >= 0");
    if (!(q_max(i) > 0.0)) throw std::invalid_argument("power game: q_max_i must be > 0");
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && m(i, j) < 0.0) throw std::invalid_argument("power game: M_ij must be >= 0");
  }
}

namespace {

Eigen::VectorXd respond(const PowerGame& game) {
  const Eigen::VectorXd diag = game.m.diagonal();
  const Eigen::VectorXd cross = game.m * game.q - diag.cwiseProduct(game.q);
  const Eigen::VectorXd raw =
      game.mu.cwiseQuotient(game.t) - (cross + game.sigma2).cwiseQuotient(diag);
  return raw.cwiseMax(0.0).cwiseMin(game.q_max);
}

}  // namespace

Eigen::VectorXd best_response_step(const PowerGame& game) {
  game.validate();
  return respond(game);
}

Convergence iterate_to_convergence(PowerGame& game, double eps, int max_iter) {
  if (!(eps > 0.0)) throw std::invalid_argument("iterate_to_convergence: eps must be > 0");
  game.validate();
  Convergence out;
  for (int k = 1; k <= max_iter; ++k) {
    Eigen::VectorXd next = respond(game);
    const double change = (next - game.q).lpNorm<Eigen::Infinity>();
    game.q = std::move(next);
    ++game.iteration;
    out.iterations = k;
    if (change < eps) {
      out.converged = true;
      break;
    }
  }
  out.q = game.q;
  return out;
}

double player_utility(const PowerGame& game, const Eigen::VectorXd& q, std::size_t player) {
  const auto i = static_cast<Eigen::Index>(player);
  double interference = game.sigma2(i);
  for (Eigen::Index j = 0; j < q.size(); ++j)
    if (j != i) interference += game.m(i, j) * q(j);
  const double mii = game.m(i, i);
  return game.mu(i) / game.t(i) * mii * q(i) - 0.5 * mii * q(i) * q(i) - q(i) * interference;
}

bool verify_nash(const PowerGame& game, const Eigen::VectorXd& q_star, int grid, double tol) {
  game.validate();
  if (q_star.size() != game.q.size()) throw std::invalid_argument("verify_nash: size mismatch");
  if (grid < 2) throw std::invalid_argument("verify_nash: grid must be >= 2");
  Eigen::VectorXd probe = q_star;
  for (Eigen::Index i = 0; i < q_star.size(); ++i) {
    const double base = player_utility(game, q_star, static_cast<std::size_t>(i));
    for (int k = 0; k < grid; ++k) {
      probe(i) = game.q_max(i) * static_cast<double>(k) / static_cast<double>(grid - 1);
      if (player_utility(game, probe, static_cast<std::size_t>(i)) - base > tol) return false;
    }
    probe(i) = q_star(i);
  }
  return true;
}

double coupling_spectral_radius(const PowerGame& game) {
  const Eigen::Index n = game.m.rows();
  Eigen::MatrixXd coupling(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) coupling(i, j) = i == j ? 0.0 : game.m(i, j) / game.m(i, i);
  Eigen::EigenSolver<Eigen::MatrixXd> es(coupling, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void validate_utility(const Utility& u) {
  if (const auto* q = std::get_if<QuadraticUtility>(&u)) {
    if (!(q->b > 0.0)) throw std::invalid_argument("quadratic utility: b must be > 0 (concavity)");
  } else if (const auto* l = std::get_if<LogLinearUtility>(&u)) {
    if (!(l->c > 0.0)) throw std::invalid_argument("log-linear utility: c must be > 0 (bounded)");
  }
}

double evaluate(const Utility& u, double x) {
  if (const auto* q = std::get_if<QuadraticUtility>(&u)) return q->a * x - q->b * x * x;
  const auto& l = std::get<LogLinearUtility>(u);
  return std::log1p(x) - l.c * x;
}

double argmax(const Utility& u) {
  validate_utility(u);
  if (const auto* q = std::get_if<QuadraticUtility>(&u)) return std::max(0.0, q->a / (2.0 * q->b));
  const auto& l = std::get<LogLinearUtility>(u);
  return std::max(0.0, 1.0 / l.c - 1.0);
}

UtilityOptimum maximize_utilities(const UtilityPair& us_params, const UtilityPair& ur_params) {
  return {argmax(us_params.first), argmax(us_params.second), argmax(ur_params.first),
          argmax(ur_params.second)};
}

}  // namespace mcca::game
