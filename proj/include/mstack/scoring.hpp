#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mstack/core.hpp"

namespace mstack {

enum class ScoreRule { log, quadratic, crps, energy };

ScoreRule parse_score_rule(const std::string& name);

struct ScoreGrid {
  double lo = -10.0;
  double hi = 10.0;
  int points = 1000;  // >= 100
};

struct ScoreSpec {
  ScoreRule rule = ScoreRule::log;
  double beta = 1.0;  // energy score exponent, in (0,2]
  ScoreGrid grid;
};

void check_grid(const ScoreGrid& g);
void check_beta(double beta);

// Univariate predictive density component.
class Density {
 public:
  virtual ~Density() = default;
  virtual double log_pdf(double y) const = 0;
  virtual double cdf(double y) const = 0;
  virtual double sample(Rng& rng) const = 0;
};

class NormalDensity final : public Density {
 public:
  NormalDensity(double mu, double sd);
  double log_pdf(double y) const override;
  double cdf(double y) const override;
  double sample(Rng& rng) const override;
  double mean() const { return mu_; }

 private:
  double mu_, sd_;
};

// Equal-weight mixture of normals; covers posterior-predictive draws
// (one normal per draw) and kernel density estimates alike.
class NormalMixtureDensity final : public Density {
 public:
  NormalMixtureDensity(VectorXd means, VectorXd sds);
  NormalMixtureDensity(VectorXd means, double common_sd);
  double log_pdf(double y) const override;
  double cdf(double y) const override;
  double sample(Rng& rng) const override;

 private:
  VectorXd means_, sds_;
};

// Gaussian KDE with Silverman bandwidth over posterior predictive draws.
std::shared_ptr<const Density> kde_density(const VectorXd& draws);

// Weighted combination sum_k w_k p_k of component predictive densities.
struct MixtureDensity {
  WeightVector weights;
  std::vector<std::shared_ptr<const Density>> components;

  double log_pdf(double y) const;  // log-sum-exp over components with w_k > 0
  double cdf(double y) const;
  double sample(Rng& rng) const;
};

// log p(y); -inf when the mixture density vanishes at y.
double log_score(const MixtureDensity& mix, double y);

// 2 p(y) - ||p||_2^2 via trapezoid quadrature. Throws GridCoverage when the
// grid holds less than 1 - 1e-6 of the mixture mass.
double quadratic_score(const MixtureDensity& mix, double y, const ScoreGrid& grid);

// -integral (F(y') - 1{y' >= y})^2 dy'. The integration domain is extended to
// cover y when y lies outside the grid.
double crps(const MixtureDensity& mix, double y, const ScoreGrid& grid);

// Monte Carlo energy score from draws of the forecast distribution, using
// independent pairing for the E||Y - Y'|| term. Requires >= 1000 draws.
double energy_score(const std::vector<double>& draws, double y, double beta);

}  // namespace mstack
