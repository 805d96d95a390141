#ifndef TURING_CMA_ES_HPP
#define TURING_CMA_ES_HPP

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "turing/core_tensors.hpp"
#include "turing/rng.hpp"

namespace turing::cma {

struct CmaOptions {
  std::optional<int> lambda;                   // default 4 + floor(3 ln n)
  std::optional<std::vector<double>> weights;  // default log-rank weights over mu = floor(lambda/2)
};

// (mu_w, lambda)-CMA-ES with cumulative step-size adaptation and
// rank-one + rank-mu covariance updates. Minimizes.
struct CmaState {
  Index dim = 0;
  Eigen::VectorXd mean;
  double sigma = 1.0;
  Eigen::MatrixXd cov;
  Eigen::VectorXd p_sigma;
  Eigen::VectorXd p_c;
  int lambda = 0;
  int mu = 0;
  Eigen::VectorXd weights;  // positive, non-increasing, sum 1
  double mu_eff = 0;
  double c_sigma = 0;
  double d_sigma = 0;
  double c_c = 0;
  double c_1 = 0;
  double c_mu = 0;
  double chi_n = 0;  // E||N(0, I)||
  long generation = 0;
  Rng rng;
};

CmaState cma_init(Index dim, const Eigen::VectorXd& x0, double sigma0, std::uint64_t seed,
                  const CmaOptions& options = {});

struct Eigensystem {
  Eigen::MatrixXd basis;   // B, columns are eigenvectors
  Eigen::VectorXd scales;  // D, square roots of the eigenvalues
};

// C = B D^2 B^T. Throws NumericalError on non-finite or non-positive spectra.
Eigensystem eigendecompose(const Eigen::MatrixXd& cov);

// lambda candidates x_i = mean + sigma * B D z_i, z_i ~ N(0, I).
std::vector<Eigen::VectorXd> cma_ask(CmaState& state);

// Recombination plus step-size and covariance update from one generation.
// Ranking is a stable sort on fitness, so ties keep candidate order.
CmaState cma_tell(CmaState state, const std::vector<Eigen::VectorXd>& candidates,
                  const std::vector<double>& fitnesses);

struct EvalBudget {
  long max_evaluations = 0;
  long evaluations_used = 0;
  long remaining() const { return max_evaluations - evaluations_used; }
};

struct TraceEntry {
  long generation = 0;
  long evaluations_used = 0;
  double best_f = 0;
  double sigma = 0;
  double mean_norm = 0;
};

struct OptimizeResult {
  Eigen::VectorXd best_x;
  double best_f = 0;
  std::vector<TraceEntry> trace;
  std::string stop_reason;  // "budget" or "sigma"
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

inline constexpr double kMinSigma = 1e-12;

// Ask/tell loop that never spends more than budget.remaining() evaluations.
// Candidates of a generation are evaluated on up to `threads` workers and
// re-associated by index. On an objective error, `budget` still records every
// evaluation that was started before the error is rethrown.
OptimizeResult cma_optimize(const Objective& objective, const Eigen::VectorXd& x0, double sigma0,
                            EvalBudget& budget, std::uint64_t seed, const CmaOptions& options = {},
                            int threads = 1);

int default_lambda(Index dim);

}  // namespace turing::cma

#endif  // TURING_CMA_ES_HPP
