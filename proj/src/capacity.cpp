#include "mcca/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace mcca::capacity {

namespace {

constexpr double kPsdSlack = 1e-10;

bool is_symmetric(const Eigen::MatrixXd& a) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale;
}

double min_eigenvalue(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void require_psd(const Eigen::MatrixXd& a, const char* name) {
  if (a.rows() != a.cols()) throw std::invalid_argument(std::string(name) + ": must be square");
  if (a.size() == 0) return;
  if (!is_symmetric(a)) throw std::invalid_argument(std::string(name) + ": must be symmetric");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if (min_eigenvalue(a) < -kPsdSlack * scale)
    throw std::invalid_argument(std::string(name) + ": must be positive semidefinite");
}

// Weighted effective channels H_i = N_i^{1/2} M~_i.
struct Effective {
  Eigen::MatrixXd h1;
  Eigen::MatrixXd h2;
};

Effective effective_channels(const CoopChannel& ch) {
  auto [s1, s2] = stack_channels(ch);
  return {psd_sqrt(ch.ns) * s1, psd_sqrt(ch.nr) * s2};
}

Eigen::MatrixXd information_matrix(const Effective& eff, const Covariances& cov) {
  const Eigen::Index rows = eff.h1.rows();
  return Eigen::MatrixXd::Identity(rows, rows) + eff.h1 * cov.q1 * eff.h1.transpose() +
         eff.h2 * cov.q2 * eff.h2.transpose();
}

double log2_det_pd(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  const Eigen::MatrixXd& l = llt.matrixL();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s / std::numbers::ln2;
}

double objective(const Effective& eff, const Covariances& cov) {
  return log2_det_pd(information_matrix(eff, cov));
}

// Euclidean projection of eigenvalues onto {v >= 0, sum v <= budget}.
std::vector<double> project_spectrum(std::vector<double> v, double budget) {
  double pos_sum = 0.0;
  for (double x : v) pos_sum += std::max(x, 0.0);
  if (pos_sum <= budget) {
    for (double& x : v) x = std::max(x, 0.0);
    return v;
  }
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - budget) / static_cast<double>(i + 1);
    if (i + 1 == sorted.size() || sorted[i + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  for (double& x : v) x = std::max(x - theta, 0.0);
  return v;
}

Covariances project(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2, double budget) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(0.5 * (x1 + x1.transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(0.5 * (x2 + x2.transpose()));
  const Eigen::Index n1 = x1.rows();
  const Eigen::Index n2 = x2.rows();
  std::vector<double> spectrum;
  spectrum.reserve(static_cast<std::size_t>(n1 + n2));
  for (Eigen::Index i = 0; i < n1; ++i) spectrum.push_back(e1.eigenvalues()(i));
  for (Eigen::Index i = 0; i < n2; ++i) spectrum.push_back(e2.eigenvalues()(i));
  spectrum = project_spectrum(std::move(spectrum), budget);

  Eigen::VectorXd d1(n1);
  Eigen::VectorXd d2(n2);
  for (Eigen::Index i = 0; i < n1; ++i) d1(i) = spectrum[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 0; i < n2; ++i) d2(i) = spectrum[static_cast<std::size_t>(n1 + i)];
  Covariances out;
  out.q1 = e1.eigenvectors() * d1.asDiagonal() * e1.eigenvectors().transpose();
  out.q2 = e2.eigenvectors() * d2.asDiagonal() * e2.eigenvectors().transpose();
  return out;
}

double inner(const Covariances& a, const Covariances& b) {
  return (a.q1.cwiseProduct(b.q1)).sum() + (a.q2.cwiseProduct(b.q2)).sum();
}

Covariances gradient(const Effective& eff, const Covariances& cov) {
  const Eigen::MatrixXd a_inv = information_matrix(eff, cov).llt().solve(
      Eigen::MatrixXd::Identity(eff.h1.rows(), eff.h1.rows()));
  Covariances g;
  g.q1 = eff.h1.transpose() * a_inv * eff.h1 / std::numbers::ln2;
  g.q2 = eff.h2.transpose() * a_inv * eff.h2 / std::numbers::ln2;
  g.q1 = 0.5 * (g.q1 + g.q1.transpose());
  g.q2 = 0.5 * (g.q2 + g.q2.transpose());
  return g;
}

double largest_eigenvalue(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

void CoopChannel::validate() const {
  if (m1.size() == 0 || m2.size() == 0) throw std::invalid_argument("m1/m2: must be nonempty");
  if (m1.cols() != m2.cols()) throw std::invalid_argument("m1/m2: column counts differ");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta: must lie in [0,1]");
  if (!(power_budget >= 0.0)) throw std::invalid_argument("power_budget: must be >= 0");
  const Eigen::Index stacked = m1.rows() + m2.rows();
  if (ns.rows() != stacked || nr.rows() != stacked)
    throw std::invalid_argument("ns/nr: size must equal rows(m1) + rows(m2)");
  require_psd(ns, "ns");
  require_psd(nr, "nr");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> stack_channels(const CoopChannel& ch) {
  if (ch.m1.cols() != ch.m2.cols()) throw std::invalid_argument("m1/m2: column counts differ");
  const Eigen::Index r1 = ch.m1.rows();
  const Eigen::Index r2 = ch.m2.rows();
  const Eigen::Index cols = ch.m1.cols();
  Eigen::MatrixXd s1(r1 + r2, cols);
  Eigen::MatrixXd s2(r1 + r2, cols);
  s1 << ch.m1, ch.beta * ch.m2;
  s2 << ch.beta * ch.m1, ch.m2;
  return {s1, s2};
}

double r_coop(const CoopChannel& ch, const Covariances& cov) {
  ch.validate();
  const Eigen::Index cols = ch.m1.cols();
  if (cov.q1.rows() != cols || cov.q1.cols() != cols || cov.q2.rows() != cols ||
      cov.q2.cols() != cols)
    throw std::invalid_argument("covariances: must be square with size cols(m1)");
  require_psd(cov.q1, "q1");
  require_psd(cov.q2, "q2");
  const double used = cov.q1.trace() + cov.q2.trace();
  if (used > ch.power_budget * (1.0 + 1e-9) + 1e-12)
    throw std::invalid_argument("covariances: trace(q1) + trace(q2) exceeds power_budget");
  return std::max(0.0, objective(effective_channels(ch), cov));
}

OptimizationResult maximize_r_coop(const CoopChannel& ch, const OptimizerOptions& opts) {
  ch.validate();
  if (!(opts.tolerance > 0.0)) throw std::invalid_argument("tolerance: must be > 0");
  const Eigen::Index cols = ch.m1.cols();
  OptimizationResult result;
  result.covariances.q1 = Eigen::MatrixXd::Zero(cols, cols);
  result.covariances.q2 = Eigen::MatrixXd::Zero(cols, cols);
  if (ch.power_budget == 0.0) return result;

  const Effective eff = effective_channels(ch);
  const double budget = ch.power_budget;
  Covariances q;
  q.q1 = Eigen::MatrixXd::Identity(cols, cols) * budget / (2.0 * static_cast<double>(cols));
  q.q2 = q.q1;
  double f = objective(eff, q);
  double step = opts.initial_step;
  // Gaps within 100 * sqrt(eps) of the rate count as converged once the
  // objective stops moving at round-off level.
  constexpr double floor = 100.0 * 1.4901161193847656e-08;
  int flat = 0;

  auto done = [&](int iter, double gap) {
    result.rate = std::max(0.0, f);
    result.covariances = q;
    result.iterations = iter;
    result.gap = std::max(0.0, gap);
    return result;
  };

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    const Covariances g = gradient(eff, q);
    // Frank-Wolfe gap: max over the feasible set of <g, S - Q>, an upper bound
    // on the distance to the optimum for a concave objective.
    const double best_vertex =
        budget * std::max({0.0, largest_eigenvalue(g.q1), largest_eigenvalue(g.q2)});
    const double gap = best_vertex - inner(g, q);
    const double scale = std::max(1.0, std::abs(f));
    if (gap <= opts.tolerance * scale) return done(iter, gap);
    if (flat >= 20 && gap <= floor * scale) return done(iter, gap);

    bool accepted = false;
    while (step > 1e-18) {
      Covariances cand = project(q.q1 + step * g.q1, q.q2 + step * g.q2, budget);
      const double f_cand = objective(eff, cand);
      Covariances delta{cand.q1 - q.q1, cand.q2 - q.q2};
      if (f_cand >= f + opts.armijo_c * inner(g, delta)) {
        flat = f_cand - f <= 8.0 * std::numeric_limits<double>::epsilon() * scale ? flat + 1 : 0;
        q = std::move(cand);
        f = f_cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // The step collapsed: objective changes are below round-off.
      if (gap <= floor * scale) return done(iter, gap);
      throw OptimizationError("maximize_r_coop: line search failed to make progress");
    }
    step = std::min(step * 2.0, 1e6);
  }
  throw OptimizationError("maximize_r_coop: iteration cap reached before convergence");
}

double achievable_min_rate(double r_t, double r_coop_val) {
  if (r_t < 0.0 || r_coop_val < 0.0) throw std::invalid_argument("rates must be >= 0");
  return std::min(2.0 * r_t, r_coop_val);
}

Eigen::VectorXd randomize_state(const StateMatrix& s) {
  if (s.g.cols() != s.r.size())
    throw std::invalid_argument("randomize_state: cols(G) must equal size(r)");
  return s.g * s.r;
}

}  // namespace mcca::capacity
