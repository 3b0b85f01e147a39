#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "mstack/core.hpp"

namespace mstack {

// Generalized Pareto fit to a tail of exceedances.
struct ParetoFit {
  double k_hat = 0.0;
  double sigma = 0.0;
  Index tail_size = 0;
};

struct SmoothedRatios {
  VectorXd log_w;      // smoothed log importance weights
  double k_hat = 0.0;  // +inf when the tail could not be fit
  VectorXd raw_log_r;
};

struct CellWarning {
  Index i = 0;  // data point
  Index k = 0;  // model
  double k_hat = 0.0;
};

struct LooResult {
  MatrixXd loo_lpd;  // n x K, log p(y_i | y_-i, M_k)
  MatrixXd k_hat;    // n x K
  std::optional<MatrixXd> loo_mean;  // n x K, present when every model
                                     // carries pred_mean
  std::vector<ElpdSummary> elpd;     // one per model
  std::vector<CellWarning> high_khat;        // cells with k_hat > 0.7
  std::vector<Index> small_sample_models;    // models with n < 5 * p_loo
};

// Profile-likelihood GPD fit over a fixed grid of 200 candidate shapes with a
// weak prior pulling k toward 0.5. Input must be sorted ascending, positive,
// with at least 5 values.
ParetoFit fit_gpd(const VectorXd& tail);

// Pareto-smooths the ceil(0.2*S) largest ratios; falls back to the raw ratios
// (k_hat = +inf sentinel, or 0 for an all-constant vector) when S < 25, the
// tail is too small, or the tail is degenerate. Smoothed weights are truncated
// at the raw maximum.
SmoothedRatios smooth_ratios(const VectorXd& log_r);

struct PointLpd {
  double lpd = 0.0;
  double k_hat = 0.0;
};

// Self-normalized PSIS estimate of log p(y_i | y_-i) from one loglik column.
// S=1 short-circuits to the single log-likelihood with k_hat = 0.
PointLpd loo_lpd_point(const VectorXd& loglik_col);

// Self-normalized importance estimate of the LOO posterior mean.
double loo_mean_point(const VectorXd& pred_mean_col, const VectorXd& log_w);

double khat_threshold();  // 0.7

// Full PSIS-LOO pass over a validated manifest. Deterministic and independent
// of thread count (each (i,k) cell writes its own slot).
LooResult loo_all(const Manifest& manifest, int threads = 1);

}  // namespace mstack
