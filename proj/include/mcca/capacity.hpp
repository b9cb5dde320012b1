#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>

namespace mcca::capacity {

/// Two-hop cooperative channel. ns / nr weight the source and relay
/// contributions and must be square with size rows(m1) + rows(m2).
struct CoopChannel {
  Eigen::MatrixXd m1;
  Eigen::MatrixXd m2;
  double beta = 1.0;
  double power_budget = 0.0;
  Eigen::MatrixXd ns;
  Eigen::MatrixXd nr;

  void validate() const;
};

struct Covariances {
  Eigen::MatrixXd q1;
  Eigen::MatrixXd q2;
};

struct StateMatrix {
  Eigen::MatrixXd g;
  Eigen::VectorXd r;
};

/// Raised when the optimizer hits its iteration cap; distinct from the
/// std::invalid_argument thrown for malformed input.
class OptimizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerOptions {
  double tolerance = 1e-9;  // relative duality gap
  int max_iterations = 20000;
  double armijo_c = 1e-4;
  double initial_step = 1.0;
};

struct OptimizationResult {
  double rate = 0.0;
  Covariances covariances;
  int iterations = 0;
  double gap = 0.0;  // certified upper bound on (optimum - rate)
};

/// ([M1; beta M2], [beta M1; M2]).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> stack_channels(const CoopChannel& ch);

/// log2 det(I + Ns^1/2 M1~ Q1 M1~^T Ns^1/2 + Nr^1/2 M2~ Q2 M2~^T Nr^1/2).
double r_coop(const CoopChannel& ch, const Covariances& cov);

OptimizationResult maximize_r_coop(const CoopChannel& ch, const OptimizerOptions& opts = {});

inline OptimizationResult maximize_r_coop(const CoopChannel& ch, double tolerance) {
  OptimizerOptions opts;
  opts.tolerance = tolerance;
  return maximize_r_coop(ch, opts);
}

/// min(2 r_t, r_coop). An infinite r_coop acts as "no cooperative limit".
double achievable_min_rate(double r_t, double r_coop_val);

/// x~ = G r.
Eigen::VectorXd randomize_state(const StateMatrix& s);

/// Symmetric PSD square root (eigenvalues clipped at zero).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

}  // namespace mcca::capacity
