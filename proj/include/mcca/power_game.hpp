#pragma once

#include <Eigen/Dense>

#include <variant>

namespace mcca::game {

/// State of the iterative power game. Player i's best response is
///   q_i = mu_i / t_i - (sum_{j != i} M_ij q_j + sigma2_i) / M_ii
/// projected onto [0, q_max_i].
struct PowerGame {
  Eigen::MatrixXd m;       // gains, M_ii > 0, M_ij >= 0
  Eigen::VectorXd mu;      // utility/price weights
  Eigen::VectorXd t;       // scheduling-time scales (> 0)
  Eigen::VectorXd sigma2;  // noise (>= 0)
  Eigen::VectorXd q_max;   // caps (> 0)
  Eigen::VectorXd q;       // current powers within [0, q_max]
  int iteration = 0;

  std::size_t players() const { return static_cast<std::size_t>(q.size()); }
  /// Throws std::invalid_argument on shape or sign violations.
  void validate() const;
};

/// Synchronous (Jacobi) update: every player responds to q^(tau).
Eigen::VectorXd best_response_step(const PowerGame& game);

struct Convergence {
  Eigen::VectorXd q;
  int iterations = 0;
  bool converged = false;
};

/// Steps until the infinity-norm change drops below eps or max_iter steps
/// were taken. Leaves the game at the last iterate.
Convergence iterate_to_convergence(PowerGame& game, double eps = 1e-8, int max_iter = 1000);

/// U_i(q) = (mu_i/t_i) M_ii q_i - M_ii q_i^2 / 2 - q_i (sum_{j != i} M_ij q_j + sigma2_i).
/// Its unconstrained maximiser in q_i is exactly the best response above.
double player_utility(const PowerGame& game, const Eigen::VectorXd& q, std::size_t player);

/// True iff no player gains more than tol by moving to any of `grid` evenly
/// spaced powers in [0, q_max_i] while the others stay at q_star.
bool verify_nash(const PowerGame& game, const Eigen::VectorXd& q_star, int grid = 200,
                 double tol = 1e-6);

/// Spectral radius of D^-1 (M - D); below 1 the clamped map is a contraction.
double coupling_spectral_radius(const PowerGame& game);

/// a x - b x^2, b > 0.
struct QuadraticUtility {
  double a = 1.0;
  double b = 1.0;
};

/// log(1 + x) - c x, c > 0.
struct LogLinearUtility {
  double c = 1.0;
};

using Utility = std::variant<QuadraticUtility, LogLinearUtility>;

double evaluate(const Utility& u, double x);
/// Maximiser over x >= 0. Throws std::invalid_argument for non-concave or
/// unbounded configurations.
double argmax(const Utility& u);

/// U_s(p_s, n) and U_r(p_r, m), each separable in its two arguments.
struct UtilityPair {
  Utility first;
  Utility second;
};

struct UtilityOptimum {
  double p_s = 0.0;
  double n = 0.0;
  double p_r = 0.0;
  double m = 0.0;
  friend bool operator==(const UtilityOptimum&, const UtilityOptimum&) = default;
};

UtilityOptimum maximize_utilities(const UtilityPair& us_params, const UtilityPair& ur_params);

void validate_utility(const Utility& u);

}  // namespace mcca::game
