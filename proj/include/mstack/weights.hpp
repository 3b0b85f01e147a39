#pragma once

#include <cstdint>

#include "mstack/core.hpp"

namespace mstack {

// Result of a simplex-constrained fit. `objective` is the maximized criterion:
// mean log mixture density for stack_logscore, negative mean squared error for
// stack_means.
struct StackingSolution {
  WeightVector weights;
  double objective = 0.0;
  long iterations = 0;
  bool converged = false;
};

// stack_logscore stops once the objective improvement and the simplex
// optimality gap (max_k grad_k - grad.dot(w), a bound on the objective
// shortfall) fall below these. The contract is improvement < 1e-10 with
// gap < 1e-6; the operative values run past that so that equivalent
// problems (duplicated models, shifted rows) land on the same mixture.
inline constexpr double kStackImprovementTol = 1e-12;
inline constexpr double kStackGapTol = 1e-9;
inline constexpr long kStackMaxIterations = 100000;
// Seed of the internal Pseudo-BMA+ warm start (B = 1000).
inline constexpr uint64_t kStackInitSeed = 4242;

double stack_objective(const MatrixXd& loo_lpd, const VectorXd& w);

// Maximizes (1/n) sum_i log sum_k w_k exp(lpd_ik) over the simplex by
// exponentiated-gradient ascent with backtracking, warm-started at Pseudo-BMA+
// weights. Restarts once from uniform if the iteration cap is hit.
StackingSolution stack_logscore(const MatrixXd& loo_lpd);
StackingSolution stack_logscore(const MatrixXd& loo_lpd, const VectorXd& w0);

// Minimizes sum_i (y_i - sum_k w_k mu_ik)^2 over the simplex; among minimizers
// returns the minimum-Euclidean-norm one (tiny ridge + exact active-set QP).
StackingSolution stack_means(const MatrixXd& loo_mean, const VectorXd& y);

// softmax of elpd totals
WeightVector pseudo_bma(const VectorXd& elpd);

// softmax of elpd_k - se_k / 2
WeightVector pseudo_bma_lognormal(const VectorXd& elpd, const VectorXd& se);

// Bayesian-bootstrap average of softmax(n * zbar_b) over B Dirichlet(1,...,1)
// reweightings of the pointwise elpd terms. Deterministic for fixed (seed, B);
// replicate b draws from the stream derived from (seed, b).
WeightVector pseudo_bma_plus(const MatrixXd& loo_lpd, int B, uint64_t seed);
inline constexpr int kDefaultBbSamples = 1000;

// softmax of log marginal likelihood plus log prior
WeightVector bma_weights(const VectorXd& log_marginal, const VectorXd& prior);

// One-hot at the argmax; ties break to the lowest index.
WeightVector select_best(const VectorXd& scores);

// Row-wise log of sum_k w_k exp(component_log_density); zero weights
// contribute nothing even against -inf densities.
VectorXd combine_predictive(const WeightVector& weights,
                            const MatrixXd& component_log_densities);

double weight_entropy(const WeightVector& w);

}  // namespace mstack
