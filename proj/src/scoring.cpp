#include "mstack/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mstack {

ScoreRule parse_score_rule(const std::string& name) {
  if (name == "log") return ScoreRule::log;
  if (name == "quadratic") return ScoreRule::quadratic;
  if (name == "crps") return ScoreRule::crps;
  if (name == "energy") return ScoreRule::energy;
  throw ValidationError("unknown scoring rule '" + name + "'");
}

void check_grid(const ScoreGrid& g) {
  if (g.points < 100) throw ValidationError("score grid needs at least 100 points");
  if (!(g.lo < g.hi)) throw ValidationError("score grid needs lo < hi");
}

void check_beta(double beta) {
  if (!(beta > 0.0 && beta <= 2.0))
    throw ValidationError("energy score beta must lie in (0, 2]");
}

NormalDensity::NormalDensity(double mu, double sd) : mu_(mu), sd_(sd) {
  if (!(sd > 0.0)) throw ValidationError("NormalDensity needs sd > 0");
}

double NormalDensity::log_pdf(double y) const { return normal_lpdf(y, mu_, sd_); }

double NormalDensity::cdf(double y) const { return normal_cdf((y - mu_) / sd_); }

double NormalDensity::sample(Rng& rng) const { return rng.normal(mu_, sd_); }

NormalMixtureDensity::NormalMixtureDensity(VectorXd means, VectorXd sds)
    : means_(std::move(means)), sds_(std::move(sds)) {
  if (means_.size() != sds_.size() || means_.size() == 0)
    throw ValidationError("NormalMixtureDensity: bad component arrays");
  if (sds_.minCoeff() <= 0.0) throw ValidationError("NormalMixtureDensity needs sds > 0");
}

NormalMixtureDensity::NormalMixtureDensity(VectorXd means, double common_sd)
    : means_(std::move(means)) {
  if (means_.size() == 0) throw ValidationError("NormalMixtureDensity: bad component arrays");
  if (!(common_sd > 0.0)) throw ValidationError("NormalMixtureDensity needs sds > 0");
  sds_ = VectorXd::Constant(means_.size(), common_sd);
}

double NormalMixtureDensity::log_pdf(double y) const {
  VectorXd terms(means_.size());
  for (Index s = 0; s < means_.size(); ++s) terms(s) = normal_lpdf(y, means_(s), sds_(s));
  return log_sum_exp(terms) - std::log(static_cast<double>(means_.size()));
}

double NormalMixtureDensity::cdf(double y) const {
  double acc = 0.0;
  for (Index s = 0; s < means_.size(); ++s) acc += normal_cdf((y - means_(s)) / sds_(s));
  return acc / static_cast<double>(means_.size());
}

double NormalMixtureDensity::sample(Rng& rng) const {
  const Index s = rng.next_index(means_.size());
  return rng.normal(means_(s), sds_(s));
}

std::shared_ptr<const Density> kde_density(const VectorXd& draws) {
  const Index n = draws.size();
  if (n < 2) throw ValidationError("kde_density needs at least 2 draws");
  const double mean = draws.mean();
  const double sd = std::sqrt((draws.array() - mean).square().sum() / (n - 1));

  std::vector<double> sorted(draws.data(), draws.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&sorted](double q) {
    const double pos = q * (sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);

  // Silverman's rule; fall back to sd when the data are nearly discrete
  double spread = std::min(sd, iqr / 1.34);
  if (spread <= 0.0) spread = sd;
  if (spread <= 0.0) throw DegenerateTail("kde_density: zero-variance draws");
  const double bw = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  return std::make_shared<NormalMixtureDensity>(draws, bw);
}

double MixtureDensity::log_pdf(double y) const {
  const Index K = weights.w.size();
  if (static_cast<Index>(components.size()) != K)
    throw ValidationError("MixtureDensity: component count does not match weights");
  double acc = kNegInf;
  for (Index k = 0; k < K; ++k) {
    if (weights.w(k) <= 0.0) continue;
    acc = log_sum_exp(acc, std::log(weights.w(k)) + components[static_cast<size_t>(k)]->log_pdf(y));
  }
  return acc;
}

double MixtureDensity::cdf(double y) const {
  double acc = 0.0;
  for (Index k = 0; k < weights.w.size(); ++k) {
    if (weights.w(k) <= 0.0) continue;
    acc += weights.w(k) * components[static_cast<size_t>(k)]->cdf(y);
  }
  return acc;
}

double MixtureDensity::sample(Rng& rng) const {
  const double u = rng.uniform();
  double cum = 0.0;
  for (Index k = 0; k < weights.w.size(); ++k) {
    cum += weights.w(k);
    if (u <= cum) return components[static_cast<size_t>(k)]->sample(rng);
  }
  return components.back()->sample(rng);
}

double log_score(const MixtureDensity& mix, double y) { return mix.log_pdf(y); }

namespace {

// trapezoid integral of fn over the uniform grid
template <typename F>
double trapezoid(double lo, double hi, int points, F&& fn) {
  const double h = (hi - lo) / (points - 1);
  double acc = 0.5 * (fn(lo) + fn(hi));
  for (int i = 1; i + 1 < points; ++i) acc += fn(lo + i * h);
  return acc * h;
}

void check_mass(const MixtureDensity& mix, const ScoreGrid& grid) {
  const double mass =
      trapezoid(grid.lo, grid.hi, grid.points,
                [&mix](double x) { return std::exp(mix.log_pdf(x)); });
  if (mass < 1.0 - 1e-6)
    throw GridCoverage("score grid covers only " + std::to_string(mass) +
                       " of the mixture mass");
}

}  // namespace

double quadratic_score(const MixtureDensity& mix, double y, const ScoreGrid& grid) {
  check_grid(grid);
  check_mass(mix, grid);
  const double p_y = std::exp(mix.log_pdf(y));
  const double l2 = trapezoid(grid.lo, grid.hi, grid.points, [&mix](double x) {
    const double p = std::exp(mix.log_pdf(x));
    return p * p;
  });
  return 2.0 * p_y - l2;
}

double crps(const MixtureDensity& mix, double y, const ScoreGrid& grid) {
  check_grid(grid);
  check_mass(mix, grid);

  // Integrate (F - indicator)^2 on a domain widened to include y; y itself is
  // a node because the indicator jumps there.
  const double h = (grid.hi - grid.lo) / (grid.points - 1);
  std::vector<double> nodes;
  nodes.reserve(static_cast<size_t>(grid.points) + 8);
  double lo = grid.lo, hi = grid.hi;
  if (y < lo) lo = y;
  if (y > hi) hi = y;
  for (double x = lo; x < hi + 0.5 * h; x += h) nodes.push_back(std::min(x, hi));
  if (nodes.back() < hi) nodes.push_back(hi);
  if (y > lo && y < hi) nodes.push_back(y);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  double acc = 0.0;
  for (size_t j = 0; j + 1 < nodes.size(); ++j) {
    const double a = nodes[j], b = nodes[j + 1];
    const double ind = a >= y ? 1.0 : 0.0;  // nodes never straddle y
    const double fa = mix.cdf(a) - ind;
    const double fb = mix.cdf(b) - ind;
    acc += 0.5 * (fa * fa + fb * fb) * (b - a);
  }
  return -acc;
}

double energy_score(const std::vector<double>& draws, double y, double beta) {
  check_beta(beta);
  if (draws.size() < 1000)
    throw ValidationError("energy_score needs at least 1000 draws");

  const size_t pairs = draws.size() / 2;
  double e_pair = 0.0;
  for (size_t j = 0; j < pairs; ++j)
    e_pair += std::pow(std::abs(draws[2 * j] - draws[2 * j + 1]), beta);
  e_pair /= static_cast<double>(pairs);

  double e_obs = 0.0;
  for (const double d : draws) e_obs += std::pow(std::abs(d - y), beta);
  e_obs /= static_cast<double>(draws.size());

  return 0.5 * e_pair - e_obs;
}

}  // namespace mstack
