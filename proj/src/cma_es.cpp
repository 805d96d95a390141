#include "turing/cma_es.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "turing/parallel.hpp"

namespace turing::cma {

int default_lambda(Index dim) {
  return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(dim))));
}

CmaState cma_init(Index dim, const Eigen::VectorXd& x0, double sigma0, std::uint64_t seed,
                  const CmaOptions& options) {
  require(dim >= 1, "cma_init: dim must be >= 1");
  require(x0.size() == dim, "cma_init: x0 has wrong dimension");
  require(x0.allFinite(), "cma_init: x0 must be finite");
  require(sigma0 > 0.0 && std::isfinite(sigma0), "cma_init: sigma0 must be positive");

  CmaState s;
  s.dim = dim;
  s.mean = x0;
  s.sigma = sigma0;
  s.cov = Eigen::MatrixXd::Identity(dim, dim);
  s.p_sigma = Eigen::VectorXd::Zero(dim);
  s.p_c = Eigen::VectorXd::Zero(dim);
  s.lambda = options.lambda.value_or(default_lambda(dim));
  require(s.lambda >= 2, "cma_init: lambda must be >= 2");

  if (options.weights) {
    const auto& w = *options.weights;
    require(!w.empty() && static_cast<int>(w.size()) <= s.lambda, "cma_init: need 1 <= mu <= lambda weights");
    s.mu = static_cast<int>(w.size());
    s.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), s.mu);
    require((s.weights.array() > 0.0).all(), "cma_init: weights must be positive");
    for (int i = 1; i < s.mu; ++i) {
      require(s.weights[i] <= s.weights[i - 1], "cma_init: weights must be non-increasing");
    }
  } else {
    s.mu = s.lambda / 2;
    s.weights.resize(s.mu);
    for (int i = 0; i < s.mu; ++i) s.weights[i] = std::log(s.mu + 0.5) - std::log(i + 1.0);
  }
  s.weights /= s.weights.sum();
  s.mu_eff = 1.0 / s.weights.squaredNorm();

  const double n = static_cast<double>(dim);
  s.c_sigma = (s.mu_eff + 2.0) / (n + s.mu_eff + 5.0);
  s.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((s.mu_eff - 1.0) / (n + 1.0)) - 1.0) + s.c_sigma;
  s.c_c = (4.0 + s.mu_eff / n) / (n + 4.0 + 2.0 * s.mu_eff / n);
  s.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + s.mu_eff);
  s.c_mu = std::min(1.0 - s.c_1, 2.0 * (s.mu_eff - 2.0 + 1.0 / s.mu_eff) / ((n + 2.0) * (n + 2.0) + s.mu_eff));
  s.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  s.rng = make_rng(seed, "cma");
  return s;
}

Eigensystem eigendecompose(const Eigen::MatrixXd& cov) {
  if (!cov.allFinite()) throw NumericalError("cma: degenerate covariance (non-finite entries)");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("cma: degenerate covariance (eigensolver failed)");
  const Eigen::VectorXd values = solver.eigenvalues();
  if (!values.allFinite() || values.minCoeff() <= 0.0) {
    throw NumericalError("cma: degenerate covariance (non-positive eigenvalue)");
  }
  return {solver.eigenvectors(), values.cwiseSqrt()};
}

std::vector<Eigen::VectorXd> cma_ask(CmaState& state) {
  const Eigensystem eig = eigendecompose(state.cov);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::VectorXd> candidates;
  candidates.reserve(static_cast<std::size_t>(state.lambda));
  Eigen::VectorXd z(state.dim);
  for (int i = 0; i < state.lambda; ++i) {
    for (Index k = 0; k < state.dim; ++k) z[k] = normal(state.rng);
    candidates.push_back(state.mean + state.sigma * (eig.basis * eig.scales.cwiseProduct(z)));
  }
  return candidates;
}

CmaState cma_tell(CmaState s, const std::vector<Eigen::VectorXd>& candidates,
                  const std::vector<double>& fitnesses) {
  require(static_cast<int>(candidates.size()) == s.lambda, "cma_tell: expected lambda candidates");
  require(fitnesses.size() == candidates.size(), "cma_tell: one fitness per candidate");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    require(std::isfinite(fitnesses[i]), "cma_tell: non-finite fitness for candidate " + std::to_string(i));
    require(candidates[i].size() == s.dim, "cma_tell: candidate has wrong dimension");
  }

  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fitnesses[a] < fitnesses[b]; });

  const Eigensystem eig = eigendecompose(s.cov);
  const double n = static_cast<double>(s.dim);

  // y_i = (x_i - m) / sigma for the mu best.
  Eigen::MatrixXd y(s.dim, s.mu);
  for (int i = 0; i < s.mu; ++i) y.col(i) = (candidates[order[i]] - s.mean) / s.sigma;
  const Eigen::VectorXd y_w = y * s.weights;

  s.mean += s.sigma * y_w;

  const Eigen::VectorXd inv_sqrt_c_yw = eig.basis * (eig.basis.transpose() * y_w).cwiseQuotient(eig.scales);
  s.p_sigma = (1.0 - s.c_sigma) * s.p_sigma + std::sqrt(s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff) * inv_sqrt_c_yw;

  const double ps_norm = s.p_sigma.norm();
  const double decay = 1.0 - std::pow(1.0 - s.c_sigma, 2.0 * static_cast<double>(s.generation + 1));
  const bool h_sigma = ps_norm / std::sqrt(decay) < (1.4 + 2.0 / (n + 1.0)) * s.chi_n;

  s.p_c = (1.0 - s.c_c) * s.p_c;
  if (h_sigma) s.p_c += std::sqrt(s.c_c * (2.0 - s.c_c) * s.mu_eff) * y_w;

  const double stall = h_sigma ? 0.0 : s.c_1 * s.c_c * (2.0 - s.c_c);
  Eigen::MatrixXd rank_mu = y * s.weights.asDiagonal() * y.transpose();
  s.cov = (1.0 - s.c_1 - s.c_mu + stall) * s.cov + s.c_1 * (s.p_c * s.p_c.transpose()) + s.c_mu * rank_mu;
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();

  s.sigma *= std::exp((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0));
  if (!std::isfinite(s.sigma)) throw NumericalError("cma_tell: step size became non-finite");
  ++s.generation;
  return s;
}

OptimizeResult cma_optimize(const Objective& objective, const Eigen::VectorXd& x0, double sigma0,
                            EvalBudget& budget, std::uint64_t seed, const CmaOptions& options, int threads) {
  CmaState state = cma_init(x0.size(), x0, sigma0, seed, options);
  require(budget.remaining() >= state.lambda,
          "cma_optimize: budget of " + std::to_string(budget.remaining()) + " evaluations is below lambda = " +
              std::to_string(state.lambda));

  OptimizeResult result;
  result.best_f = std::numeric_limits<double>::infinity();
  result.stop_reason = "budget";
  while (budget.remaining() >= state.lambda) {
    const std::vector<Eigen::VectorXd> candidates = cma_ask(state);
    std::vector<double> fitnesses(candidates.size());
    std::atomic<long> started{0};
    try {
      parallel_for(candidates.size(), threads, [&](std::size_t i) {
        started.fetch_add(1);
        fitnesses[i] = objective(candidates[i]);
      });
    } catch (...) {
      budget.evaluations_used += started.load();
      throw;
    }
    budget.evaluations_used += static_cast<long>(candidates.size());

    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (fitnesses[i] < result.best_f) {
        result.best_f = fitnesses[i];
        result.best_x = candidates[i];
      }
    }
    state = cma_tell(std::move(state), candidates, fitnesses);
    result.trace.push_back({state.generation, budget.evaluations_used, result.best_f, state.sigma, state.mean.norm()});
    if (state.sigma < kMinSigma) {
      result.stop_reason = "sigma";
      break;
    }
  }
  return result;
}

}  // namespace turing::cma
