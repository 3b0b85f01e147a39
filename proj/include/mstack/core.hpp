#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mstack/common.hpp"

namespace mstack {

// One model's posterior evidence: S draws x n data points of pointwise
// log-likelihood, optionally per-draw predictive means and a log marginal
// likelihood (needed only for BMA-style weighting).
struct ModelDrawMatrix {
  std::string model_id;
  MatrixXd loglik;                     // S x n, entries log p(y_i | theta_s)
  std::optional<MatrixXd> pred_mean;   // S x n, entries E(y_i | theta_s)
  std::optional<double> log_marginal;  // log p(y | M_k)

  Index draws() const { return loglik.rows(); }
  Index points() const { return loglik.cols(); }

  bool operator==(const ModelDrawMatrix& o) const;
};

// Binds a K-model analysis together. Immutable after validation.
struct Manifest {
  std::vector<ModelDrawMatrix> models;
  Index n = 0;
  Index K = 0;
  std::optional<uint64_t> seed;
  std::optional<VectorXd> prior_model_probs;  // defaults to uniform
  std::optional<VectorXd> y;                  // observed outcomes; required
                                              // only by stacking of means

  VectorXd prior_or_uniform() const;

  bool operator==(const Manifest& o) const;
};

// Point on the K-simplex. `checked` enforces w_k >= 0 and |sum - 1| <= 1e-8.
struct WeightVector {
  VectorXd w;

  static WeightVector checked(VectorXd w);
};

bool is_simplex(const VectorXd& w, double tol = 1e-8);

struct ElpdSummary {
  double total = 0.0;   // elpd_loo
  VectorXd pointwise;   // z_i = log p(y_i | y_-i)
  double se = 0.0;
  double p_loo = 0.0;   // effective number of parameters
};

// Cross-checks dimensions, finiteness and ids; fills n and K.
Manifest validate_manifest(Manifest m);

// CSV matrix files: rows of comma-separated doubles, no header.
MatrixXd read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const MatrixXd& m);

// Manifest JSON: {"models":[{"id","loglik","pred_mean"?,"log_marginal"?}...],
// "prior_model_probs"?, "seed"?, "y"?}. Matrix paths resolve relative to the
// manifest's directory. Returns the validated manifest.
Manifest load_manifest(const std::string& path);

// Writes <stem>.json plus one CSV per referenced matrix into dir.
void save_manifest(const Manifest& m, const std::string& dir, const std::string& stem);

}  // namespace mstack
