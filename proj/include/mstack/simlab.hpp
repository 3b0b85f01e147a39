#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mstack/psis.hpp"
#include "mstack/weights.hpp"

namespace mstack {

// ---------------------------------------------------------------------------
// Gaussian location-mixture experiment: data N(mu_true, 1), candidate models
// N(mu_k, 1) with no free parameters.
// ---------------------------------------------------------------------------

struct GmConfig {
  double mu_true = 3.4;
  double sigma_true = 1.0;
  std::vector<double> model_means = {1, 2, 3, 4, 5, 6, 7, 8};
  Index n = 50;
  Index n_test = 200;
  int reps = 100;
  int duplicates_of_4 = 0;  // extra N(4,1) copies for the redundancy protocol
  uint64_t seed = 0;
};

struct GmData {
  VectorXd train;
  VectorXd test;
};

GmData gen_gm(const GmConfig& config, uint64_t seed);

// One S=1 matrix per candidate mean; loglik row is log N(y_i | mu_k, 1),
// log_marginal the exact parameter-free sum, pred_mean the constant mu_k.
std::vector<ModelDrawMatrix> gm_loglik_matrices(const VectorXd& data,
                                                const std::vector<double>& model_means);

// ---------------------------------------------------------------------------
// Subset-regression experiment
// ---------------------------------------------------------------------------

enum class RegMode { m_open_univariate, m_closed_nested };

RegMode parse_reg_mode(const std::string& name);

struct RegPrior {
  double beta_sd = std::sqrt(10.0);  // beta_j ~ N(0, 10)
  double sigma_shape = 0.1;          // sigma ~ Gamma(0.1, 0.1), shape-rate
  double sigma_rate = 0.1;
};

struct RegConfig {
  Index J = 15;
  double h = 5.0;
  double snr = 0.8;
  Index n = 100;
  Index n_test = 200;
  RegMode mode = RegMode::m_open_univariate;
  RegPrior prior;
  Index draws = 1000;  // retained draws; burn-in is draws/2 on top
  int reps = 100;
  uint64_t seed = 0;
};

// Triangular-squared coefficient bumps at j = 4, 8, 12, scaled so that
// Var(sum beta_j X_j) / (1 + Var(...)) = snr for unit-variance covariates.
VectorXd gen_beta(Index J, double h, double snr);

struct LinregDraws {
  MatrixXd beta;   // S x p
  VectorXd sigma;  // S
};

// Gibbs for beta | sigma (conjugate normal), slice sampling for sigma under
// its Gamma prior. Returns S draws after S/2 burn-in.
LinregDraws fit_linreg_mcmc(const MatrixXd& X, const VectorXd& y,
                            const RegPrior& prior, Index S, uint64_t seed);

// loglik[s,i] = log N(y_i | x_i' beta_s, sigma_s^2); pred_mean[s,i] = x_i' beta_s.
ModelDrawMatrix linreg_model_matrix(const std::string& id, const MatrixXd& X,
                                    const VectorXd& y, const LinregDraws& draws);

// Exact log p(y | M): beta integrated in closed form given sigma, sigma
// integrated by trapezoid quadrature on the log scale.
double linreg_log_marginal(const MatrixXd& X, const VectorXd& y, const RegPrior& prior,
                           int quad_points = 1601);

// Refit-based exact LOO, used as a test oracle only.
VectorXd exact_loo_oracle(const MatrixXd& X, const VectorXd& y,
                          const RegPrior& prior, Index S, uint64_t seed);

// Exhaustive simplex-lattice maximization of the stacking objective (K <= 4).
std::pair<WeightVector, double> grid_weight_oracle(const MatrixXd& loo_lpd, double step);

// ---------------------------------------------------------------------------
// Experiment reports
// ---------------------------------------------------------------------------

struct MethodAggregate {
  std::string method;
  double mean_test_lpd = 0.0;
  double se_test_lpd = 0.0;
  double mean_mse = 0.0;
  double se_mse = 0.0;
};

struct GmDuplicateRow {
  int rep = 0;
  int m = 0;                    // number of added N(4,1) copies
  double max_abs_drift = 0.0;   // stacked mixture log-density drift vs m = 0
  double bma_group_mass = 0.0;  // total BMA weight on mean-4 models
};

struct RegModelDiag {
  int rep = 0;
  std::string model;
  double elpd_loo = 0.0;
  double p_loo = 0.0;
  double p_loo_over_n = 0.0;
  double elpd_loo_per_n = 0.0;
  double elpd_test_per_point = 0.0;  // test total / n_test
  double elpd_test_per_n = 0.0;      // test total / n
};

struct ExperimentReport {
  std::string experiment;  // "gm" or "regression"
  Index n = 0;
  uint64_t seed = 0;
  std::vector<std::string> methods;
  MatrixXd test_lpd;  // reps x methods, mean log predictive density on test data
  MatrixXd mse;       // reps x methods, mean squared error of the mixture mean
  std::vector<MethodAggregate> aggregates;
  std::vector<GmDuplicateRow> gm_duplicates;  // only for gm with duplicates_of_4 > 0
  std::vector<RegModelDiag> model_diags;      // only for regression
};

ExperimentReport run_gm_experiment(const GmConfig& config);
ExperimentReport run_regression_experiment(const RegConfig& config);

// Density grid for the duplicate-robustness protocol: [-2, 10] in 0.05 steps.
VectorXd gm_density_grid();

std::string report_to_json(const ExperimentReport& report);
// Tidy rows: method,n,rep,test_lpd,mse
std::string report_to_csv(const ExperimentReport& report);
std::string duplicates_to_csv(const ExperimentReport& report);
std::string model_diags_to_csv(const ExperimentReport& report);

}  // namespace mstack
