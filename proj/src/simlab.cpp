#include "mstack/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include <json.hpp>

using nlohmann::json;

namespace mstack {

namespace {

// stream salts for the independent RNG lanes inside one replication
constexpr uint64_t kSaltBb = 0xbb01;
constexpr uint64_t kSaltFit = 0xf170000;

double sample_se(const VectorXd& v) {
  const Index n = v.size();
  if (n < 2) return 0.0;
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

GmData gen_gm(const GmConfig& config, uint64_t seed) {
  if (config.n < 1) throw ValidationError("gen_gm: n must be positive");
  Rng rng(seed);
  GmData d;
  d.train.resize(config.n);
  for (Index i = 0; i < config.n; ++i) d.train(i) = rng.normal(config.mu_true, config.sigma_true);
  d.test.resize(config.n_test);
  for (Index i = 0; i < config.n_test; ++i) d.test(i) = rng.normal(config.mu_true, config.sigma_true);
  return d;
}

std::vector<ModelDrawMatrix> gm_loglik_matrices(const VectorXd& data,
                                                const std::vector<double>& model_means) {
  if (model_means.empty()) throw ValidationError("gm_loglik_matrices: no model means");
  std::vector<ModelDrawMatrix> models;
  models.reserve(model_means.size());
  const Index n = data.size();
  for (size_t k = 0; k < model_means.size(); ++k) {
    ModelDrawMatrix m;
    m.model_id = "mu" + std::to_string(k + 1);
    m.loglik.resize(1, n);
    for (Index i = 0; i < n; ++i) m.loglik(0, i) = normal_lpdf(data(i), model_means[k], 1.0);
    m.pred_mean = MatrixXd::Constant(1, n, model_means[k]);
    m.log_marginal = m.loglik.row(0).sum();  // exact, parameter-free
    models.push_back(std::move(m));
  }
  return models;
}

VectorXd gen_beta(Index J, double h, double snr) {
  if (J < 1) throw ValidationError("gen_beta: J must be positive");
  if (!(h > 0.0)) throw ValidationError("gen_beta: h must be positive");
  if (!(snr > 0.0 && snr < 1.0)) throw ValidationError("gen_beta: snr must lie in (0,1)");

  VectorXd bump = VectorXd::Zero(J);
  for (Index j = 1; j <= J; ++j) {
    double b = 0.0;
    for (const double center : {4.0, 8.0, 12.0}) {
      const double d = std::abs(static_cast<double>(j) - center);
      if (d < h) b += (h - d) * (h - d);
    }
    bump(j - 1) = b;
  }
  const double ss = bump.squaredNorm();
  if (ss <= 0.0) throw NumericalError("gen_beta: all coefficients vanish for this (J,h)");
  // unit-variance covariates: Var(sum beta_j X_j) = sum beta_j^2 = snr/(1-snr)
  const double gamma = std::sqrt((snr / (1.0 - snr)) / ss);
  return gamma * bump;
}

RegMode parse_reg_mode(const std::string& name) {
  if (name == "m_open_univariate") return RegMode::m_open_univariate;
  if (name == "m_closed_nested") return RegMode::m_closed_nested;
  throw ValidationError("unknown regression mode '" + name + "'");
}

namespace {

// log posterior of log(sigma) given the residual sum of squares, including
// the Jacobian of the log transform
double log_sigma_target(double l, double ssr, Index n, const RegPrior& prior) {
  return (prior.sigma_shape - static_cast<double>(n)) * l - prior.sigma_rate * std::exp(l) -
         0.5 * ssr * std::exp(-2.0 * l);
}

// univariate slice sampler with stepping out (Neal 2003)
double slice_sample_log_sigma(double l0, double ssr, Index n, const RegPrior& prior, Rng& rng) {
  const double w = 1.0;
  const double f0 = log_sigma_target(l0, ssr, n, prior);
  const double level = f0 - rng.exponential();

  double lo = l0 - w * rng.uniform();
  double hi = lo + w;
  for (int step = 0; step < 1000 && log_sigma_target(lo, ssr, n, prior) > level; ++step) lo -= w;
  for (int step = 0; step < 1000 && log_sigma_target(hi, ssr, n, prior) > level; ++step) hi += w;

  while (true) {
    const double l1 = rng.uniform(lo, hi);
    if (log_sigma_target(l1, ssr, n, prior) > level) return l1;
    if (l1 < l0) lo = l1; else hi = l1;
  }
}

}  // namespace

LinregDraws fit_linreg_mcmc(const MatrixXd& X, const VectorXd& y,
                            const RegPrior& prior, Index S, uint64_t seed) {
  const Index n = X.rows();
  const Index p = X.cols();
  if (n < 1 || p < 1) throw ValidationError("fit_linreg_mcmc: empty design");
  if (y.size() != n) throw ValidationError("fit_linreg_mcmc: y length mismatch");
  if (S < 1) throw ValidationError("fit_linreg_mcmc: S must be positive");

  Rng rng(seed);
  const double prior_prec = 1.0 / (prior.beta_sd * prior.beta_sd);
  const MatrixXd XtX = X.transpose() * X;
  const VectorXd Xty = X.transpose() * y;

  LinregDraws out;
  out.beta.resize(S, p);
  out.sigma.resize(S);

  VectorXd beta = VectorXd::Zero(p);
  double log_sigma = 0.0;
  const Index burn = S / 2;

  VectorXd z(p);
  for (Index it = 0; it < S + burn; ++it) {
    const double s2 = std::exp(2.0 * log_sigma);

    // beta | sigma is conjugate normal; the prior precision keeps the system
    // positive definite even for rank-deficient designs
    MatrixXd A = XtX / s2;
    A.diagonal().array() += prior_prec;
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
      throw NumericalError("fit_linreg_mcmc: posterior precision not positive definite");
    const VectorXd mean = llt.solve(Xty / s2);
    for (Index j = 0; j < p; ++j) z(j) = rng.normal();
    beta = mean + llt.matrixU().solve(z);

    const double ssr = (y - X * beta).squaredNorm();
    log_sigma = slice_sample_log_sigma(log_sigma, ssr, n, prior, rng);

    if (it >= burn) {
      out.beta.row(it - burn) = beta.transpose();
      out.sigma(it - burn) = std::exp(log_sigma);
    }
  }
  return out;
}

ModelDrawMatrix linreg_model_matrix(const std::string& id, const MatrixXd& X,
                                    const VectorXd& y, const LinregDraws& draws) {
  const Index S = draws.beta.rows();
  const Index n = X.rows();
  ModelDrawMatrix m;
  m.model_id = id;
  m.loglik.resize(S, n);
  m.pred_mean = MatrixXd(S, n);
  const MatrixXd fitted = draws.beta * X.transpose();  // S x n
  for (Index s = 0; s < S; ++s) {
    for (Index i = 0; i < n; ++i) {
      m.loglik(s, i) = normal_lpdf(y(i), fitted(s, i), draws.sigma(s));
      (*m.pred_mean)(s, i) = fitted(s, i);
    }
  }
  return m;
}

double linreg_log_marginal(const MatrixXd& X, const VectorXd& y, const RegPrior& prior,
                           int quad_points) {
  const Index n = X.rows();
  const Index p = X.cols();
  const double tau2 = prior.beta_sd * prior.beta_sd;
  const MatrixXd G = X.transpose() * X;
  const VectorXd Xty = X.transpose() * y;
  const double yty = y.squaredNorm();

  const double a = prior.sigma_shape, b = prior.sigma_rate;
  const double log_prior_norm = a * std::log(b) - std::lgamma(a);

  // beta integrates out in closed form given sigma:
  //   y | sigma ~ N(0, sigma^2 I + tau^2 X X')
  const auto log_lik_sigma = [&](double sigma) {
    const double s2 = sigma * sigma;
    const double c = s2 / tau2;
    MatrixXd Ap = G;
    Ap.diagonal().array() += c;
    Eigen::LLT<MatrixXd> llt(Ap);
    if (llt.info() != Eigen::Success)
      throw NumericalError("linreg_log_marginal: singular normal equations");
    double logdet_ap = 0.0;
    for (Index j = 0; j < p; ++j) logdet_ap += 2.0 * std::log(llt.matrixL()(j, j));
    const double quad = (yty - Xty.dot(llt.solve(Xty))) / s2;
    const double logdet = static_cast<double>(n) * std::log(s2) + logdet_ap -
                          static_cast<double>(p) * std::log(c);
    return -0.5 * static_cast<double>(n) * std::log(2.0 * M_PI) - 0.5 * logdet - 0.5 * quad;
  };

  // trapezoid in l = log(sigma) over a range wide enough for desk-scale data
  const int points = quad_points;
  const double lo = -8.0, hi = 8.0;
  const double hstep = (hi - lo) / (points - 1);
  VectorXd terms(points);
  for (int i = 0; i < points; ++i) {
    const double l = lo + i * hstep;
    const double sigma = std::exp(l);
    const double log_f = log_lik_sigma(sigma) + log_prior_norm + (a - 1.0) * std::log(sigma) -
                         b * sigma + l;  // + l: Jacobian d sigma = sigma dl
    const double wt = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    terms(i) = log_f + std::log(wt * hstep);
  }
  return log_sum_exp(terms);
}

VectorXd exact_loo_oracle(const MatrixXd& X, const VectorXd& y,
                          const RegPrior& prior, Index S, uint64_t seed) {
  const Index n = X.rows();
  if (n < 2) throw ValidationError("exact_loo_oracle: needs at least 2 points");
  const double log_s = std::log(static_cast<double>(S));

  VectorXd lpd(n);
  MatrixXd Xm(n - 1, X.cols());
  VectorXd ym(n - 1);
  for (Index i = 0; i < n; ++i) {
    Index r = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      Xm.row(r) = X.row(j);
      ym(r) = y(j);
      ++r;
    }
    const LinregDraws d = fit_linreg_mcmc(Xm, ym, prior, S, derive_seed(seed, static_cast<uint64_t>(i) + 1));
    const VectorXd fitted = d.beta * X.row(i).transpose();
    VectorXd terms(S);
    for (Index s = 0; s < S; ++s) terms(s) = normal_lpdf(y(i), fitted(s), d.sigma(s));
    lpd(i) = log_sum_exp(terms) - log_s;
  }
  return lpd;
}

std::pair<WeightVector, double> grid_weight_oracle(const MatrixXd& loo_lpd, double step) {
  const Index K = loo_lpd.cols();
  if (K > 4) throw ValidationError("grid_weight_oracle: K > 4 would explode the lattice");
  if (!(step > 0.0 && step <= 1.0)) throw ValidationError("grid_weight_oracle: bad step");
  const long m = std::lround(1.0 / step);

  // precompute the row-rescaled exponentials once
  const VectorXd c = loo_lpd.rowwise().maxCoeff();
  const MatrixXd E = (loo_lpd.colwise() - c).array().exp();
  const double c_bar = c.mean();
  const auto objective = [&](const VectorXd& w) {
    return (E * w).array().log().mean() + c_bar;
  };

  VectorXd best_w = VectorXd::Unit(K, 0);
  double best_v = kNegInf;
  std::vector<long> counts(static_cast<size_t>(K), 0);

  // lexicographic enumeration of lattice points c/m with sum(c) = m
  const std::function<void(Index, long)> recurse = [&](Index pos, long left) {
    if (pos == K - 1) {
      counts[static_cast<size_t>(pos)] = left;
      VectorXd w(K);
      for (Index k = 0; k < K; ++k)
        w(k) = static_cast<double>(counts[static_cast<size_t>(k)]) / static_cast<double>(m);
      const double v = objective(w);
      if (v > best_v) {
        best_v = v;
        best_w = w;
      }
      return;
    }
    for (long c0 = 0; c0 <= left; ++c0) {
      counts[static_cast<size_t>(pos)] = c0;
      recurse(pos + 1, left - c0);
    }
  };
  recurse(0, m);

  return {WeightVector::checked(best_w), best_v};
}

VectorXd gm_density_grid() {
  const int points = 241;  // [-2, 10] in 0.05 steps
  VectorXd g(points);
  for (int i = 0; i < points; ++i) g(i) = -2.0 + 0.05 * i;
  return g;
}

namespace {

MatrixXd gm_log_densities(const VectorXd& at, const std::vector<double>& means) {
  MatrixXd ld(at.size(), static_cast<Index>(means.size()));
  for (Index j = 0; j < at.size(); ++j)
    for (size_t k = 0; k < means.size(); ++k)
      ld(j, static_cast<Index>(k)) = normal_lpdf(at(j), means[k], 1.0);
  return ld;
}

Manifest gm_manifest(const VectorXd& train, const std::vector<double>& means) {
  Manifest mf;
  mf.models = gm_loglik_matrices(train, means);
  mf.y = train;
  return validate_manifest(std::move(mf));
}

}  // namespace

ExperimentReport run_gm_experiment(const GmConfig& config) {
  if (config.reps < 1) throw ValidationError("run_gm_experiment: reps must be positive");
  if (config.model_means.empty()) throw ValidationError("run_gm_experiment: no model means");

  ExperimentReport rep;
  rep.experiment = "gm";
  rep.n = config.n;
  rep.seed = config.seed;
  rep.methods = {"stacking", "stack-means", "bma", "pseudo-bma", "pseudo-bma-plus"};
  const Index M = static_cast<Index>(rep.methods.size());
  rep.test_lpd.resize(config.reps, M);
  rep.mse.resize(config.reps, M);

  const VectorXd grid = gm_density_grid();
  const VectorXd means_vec = Eigen::Map<const VectorXd>(config.model_means.data(),
                                                        static_cast<Index>(config.model_means.size()));

  for (int r = 0; r < config.reps; ++r) {
    const uint64_t rep_seed = derive_seed(config.seed, static_cast<uint64_t>(r));
    const GmData data = gen_gm(config, rep_seed);
    const Manifest mf = gm_manifest(data.train, config.model_means);
    const LooResult loo = loo_all(mf);

    VectorXd marginals(mf.K), totals(mf.K);
    for (Index k = 0; k < mf.K; ++k) {
      marginals(k) = *mf.models[static_cast<size_t>(k)].log_marginal;
      totals(k) = loo.elpd[static_cast<size_t>(k)].total;
    }

    std::vector<WeightVector> ws;
    const StackingSolution stack = stack_logscore(loo.loo_lpd);
    ws.push_back(stack.weights);
    ws.push_back(stack_means(*loo.loo_mean, data.train).weights);
    ws.push_back(bma_weights(marginals, mf.prior_or_uniform()));
    ws.push_back(pseudo_bma(totals));
    ws.push_back(pseudo_bma_plus(loo.loo_lpd, kDefaultBbSamples, derive_seed(rep_seed, kSaltBb)));

    const MatrixXd test_ld = gm_log_densities(data.test, config.model_means);
    for (Index mi = 0; mi < M; ++mi) {
      rep.test_lpd(r, mi) = combine_predictive(ws[static_cast<size_t>(mi)], test_ld).mean();
      const double point = ws[static_cast<size_t>(mi)].w.dot(means_vec);
      rep.mse(r, mi) = (data.test.array() - point).square().mean();
    }

    if (config.duplicates_of_4 > 0) {
      const MatrixXd grid_ld = gm_log_densities(grid, config.model_means);
      const VectorXd base_mix = combine_predictive(stack.weights, grid_ld);
      double base_mass = 0.0;
      const WeightVector base_bma = bma_weights(marginals, mf.prior_or_uniform());
      for (Index k = 0; k < mf.K; ++k)
        if (config.model_means[static_cast<size_t>(k)] == 4.0) base_mass += base_bma.w(k);
      rep.gm_duplicates.push_back(GmDuplicateRow{r, 0, 0.0, base_mass});

      for (int m = 1; m <= config.duplicates_of_4; ++m) {
        std::vector<double> means_ext = config.model_means;
        for (int d = 0; d < m; ++d) means_ext.push_back(4.0);
        const Manifest mfx = gm_manifest(data.train, means_ext);
        const LooResult loox = loo_all(mfx);
        const StackingSolution stx = stack_logscore(loox.loo_lpd);
        const MatrixXd grid_ldx = gm_log_densities(grid, means_ext);
        const VectorXd mix = combine_predictive(stx.weights, grid_ldx);
        const double drift = (mix - base_mix).cwiseAbs().maxCoeff();

        VectorXd marg_ext(mfx.K);
        for (Index k = 0; k < mfx.K; ++k)
          marg_ext(k) = *mfx.models[static_cast<size_t>(k)].log_marginal;
        const WeightVector bmax = bma_weights(marg_ext, mfx.prior_or_uniform());
        double mass = 0.0;
        for (Index k = 0; k < mfx.K; ++k)
          if (means_ext[static_cast<size_t>(k)] == 4.0) mass += bmax.w(k);

        rep.gm_duplicates.push_back(GmDuplicateRow{r, m, drift, mass});
      }
    }
  }

  for (Index mi = 0; mi < M; ++mi) {
    MethodAggregate agg;
    agg.method = rep.methods[static_cast<size_t>(mi)];
    agg.mean_test_lpd = rep.test_lpd.col(mi).mean();
    agg.se_test_lpd = sample_se(rep.test_lpd.col(mi));
    agg.mean_mse = rep.mse.col(mi).mean();
    agg.se_mse = sample_se(rep.mse.col(mi));
    rep.aggregates.push_back(std::move(agg));
  }
  return rep;
}

ExperimentReport run_regression_experiment(const RegConfig& config) {
  if (config.reps < 1) throw ValidationError("run_regression_experiment: reps must be positive");
  if (config.n < 2) throw ValidationError("run_regression_experiment: n must be at least 2");

  ExperimentReport rep;
  rep.experiment = "regression";
  rep.n = config.n;
  rep.seed = config.seed;
  rep.methods = {"stacking",        "stack-means", "pseudo-bma", "pseudo-bma-lognormal",
                 "pseudo-bma-plus", "bma",         "select-loo", "select-marginal"};
  const Index M = static_cast<Index>(rep.methods.size());
  const Index K = config.J;
  rep.test_lpd.resize(config.reps, M);
  rep.mse.resize(config.reps, M);

  const VectorXd beta = gen_beta(config.J, config.h, config.snr);

  for (int r = 0; r < config.reps; ++r) {
    const uint64_t rep_seed = derive_seed(config.seed, static_cast<uint64_t>(r));
    Rng rng(rep_seed);

    MatrixXd X(config.n, config.J);
    for (Index i = 0; i < config.n; ++i)
      for (Index j = 0; j < config.J; ++j) X(i, j) = rng.normal(5.0, 1.0);
    VectorXd y(config.n);
    for (Index i = 0; i < config.n; ++i) y(i) = X.row(i).dot(beta) + rng.normal();

    MatrixXd Xt(config.n_test, config.J);
    for (Index i = 0; i < config.n_test; ++i)
      for (Index j = 0; j < config.J; ++j) Xt(i, j) = rng.normal(5.0, 1.0);
    VectorXd yt(config.n_test);
    for (Index i = 0; i < config.n_test; ++i) yt(i) = Xt.row(i).dot(beta) + rng.normal();

    Manifest mf;
    MatrixXd test_ld(config.n_test, K);    // log p_k(y_test_j | y)
    MatrixXd test_pred(config.n_test, K);  // posterior-mean predictions
    for (Index k = 0; k < K; ++k) {
      const Index p = config.mode == RegMode::m_open_univariate ? 1 : k + 1;
      MatrixXd Xk(config.n, p), Xtk(config.n_test, p);
      if (config.mode == RegMode::m_open_univariate) {
        Xk.col(0) = X.col(k);
        Xtk.col(0) = Xt.col(k);
      } else {
        Xk = X.leftCols(p);
        Xtk = Xt.leftCols(p);
      }

      const LinregDraws draws =
          fit_linreg_mcmc(Xk, y, config.prior, config.draws,
                          derive_seed(rep_seed, kSaltFit + static_cast<uint64_t>(k)));
      ModelDrawMatrix mdm = linreg_model_matrix("m" + std::to_string(k + 1), Xk, y, draws);
      mdm.log_marginal = linreg_log_marginal(Xk, y, config.prior);
      mf.models.push_back(std::move(mdm));

      const MatrixXd fitted_test = draws.beta * Xtk.transpose();  // S x n_test
      const double log_s = std::log(static_cast<double>(config.draws));
      for (Index j = 0; j < config.n_test; ++j) {
        VectorXd terms(config.draws);
        for (Index s = 0; s < config.draws; ++s)
          terms(s) = normal_lpdf(yt(j), fitted_test(s, j), draws.sigma(s));
        test_ld(j, k) = log_sum_exp(terms) - log_s;
        test_pred(j, k) = fitted_test.col(j).mean();
      }
    }
    mf.y = y;
    mf = validate_manifest(std::move(mf));

    const LooResult loo = loo_all(mf);
    VectorXd totals(K), ses(K), marginals(K);
    for (Index k = 0; k < K; ++k) {
      totals(k) = loo.elpd[static_cast<size_t>(k)].total;
      ses(k) = loo.elpd[static_cast<size_t>(k)].se;
      marginals(k) = *mf.models[static_cast<size_t>(k)].log_marginal;
    }

    std::vector<WeightVector> ws;
    ws.push_back(stack_logscore(loo.loo_lpd).weights);
    ws.push_back(stack_means(*loo.loo_mean, y).weights);
    ws.push_back(pseudo_bma(totals));
    ws.push_back(pseudo_bma_lognormal(totals, ses));
    ws.push_back(pseudo_bma_plus(loo.loo_lpd, kDefaultBbSamples, derive_seed(rep_seed, kSaltBb)));
    ws.push_back(bma_weights(marginals, mf.prior_or_uniform()));
    ws.push_back(select_best(totals));
    ws.push_back(select_best(marginals));

    for (Index mi = 0; mi < M; ++mi) {
      const WeightVector& w = ws[static_cast<size_t>(mi)];
      rep.test_lpd(r, mi) = combine_predictive(w, test_ld).mean();
      const VectorXd point = test_pred * w.w;
      rep.mse(r, mi) = (yt - point).array().square().mean();
    }

    for (Index k = 0; k < K; ++k) {
      RegModelDiag d;
      d.rep = r;
      d.model = mf.models[static_cast<size_t>(k)].model_id;
      d.elpd_loo = totals(k);
      d.p_loo = loo.elpd[static_cast<size_t>(k)].p_loo;
      d.p_loo_over_n = d.p_loo / static_cast<double>(config.n);
      d.elpd_loo_per_n = d.elpd_loo / static_cast<double>(config.n);
      const double test_total = test_ld.col(k).sum();
      d.elpd_test_per_point = test_total / static_cast<double>(config.n_test);
      d.elpd_test_per_n = test_total / static_cast<double>(config.n);
      rep.model_diags.push_back(std::move(d));
    }
  }

  for (Index mi = 0; mi < M; ++mi) {
    MethodAggregate agg;
    agg.method = rep.methods[static_cast<size_t>(mi)];
    agg.mean_test_lpd = rep.test_lpd.col(mi).mean();
    agg.se_test_lpd = sample_se(rep.test_lpd.col(mi));
    agg.mean_mse = rep.mse.col(mi).mean();
    agg.se_mse = sample_se(rep.mse.col(mi));
    rep.aggregates.push_back(std::move(agg));
  }
  return rep;
}

std::string report_to_json(const ExperimentReport& report) {
  json j;
  j["experiment"] = report.experiment;
  j["n"] = report.n;
  j["seed"] = report.seed;
  j["methods"] = report.methods;

  j["aggregates"] = json::array();
  for (const auto& a : report.aggregates) {
    j["aggregates"].push_back({{"method", a.method},
                               {"mean_test_lpd", a.mean_test_lpd},
                               {"se_test_lpd", a.se_test_lpd},
                               {"mean_mse", a.mean_mse},
                               {"se_mse", a.se_mse}});
  }

  json per_rep = json::array();
  for (Index r = 0; r < report.test_lpd.rows(); ++r) {
    for (Index m = 0; m < report.test_lpd.cols(); ++m) {
      per_rep.push_back({{"rep", r},
                         {"method", report.methods[static_cast<size_t>(m)]},
                         {"test_lpd", report.test_lpd(r, m)},
                         {"mse", report.mse(r, m)}});
    }
  }
  j["per_rep"] = std::move(per_rep);

  if (!report.gm_duplicates.empty()) {
    json dup = json::array();
    for (const auto& d : report.gm_duplicates)
      dup.push_back({{"rep", d.rep},
                     {"m", d.m},
                     {"max_abs_drift", d.max_abs_drift},
                     {"bma_group_mass", d.bma_group_mass}});
    j["gm_duplicates"] = std::move(dup);
  }

  if (!report.model_diags.empty()) {
    json diags = json::array();
    for (const auto& d : report.model_diags)
      diags.push_back({{"rep", d.rep},
                       {"model", d.model},
                       {"elpd_loo", d.elpd_loo},
                       {"p_loo", d.p_loo},
                       {"p_loo_over_n", d.p_loo_over_n},
                       {"elpd_loo_per_n", d.elpd_loo_per_n},
                       {"elpd_test_per_point", d.elpd_test_per_point},
                       {"elpd_test_per_n", d.elpd_test_per_n}});
    j["model_diagnostics"] = std::move(diags);
  }

  return j.dump(2) + "\n";
}

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "method,n,rep,test_lpd,mse\n";
  for (Index r = 0; r < report.test_lpd.rows(); ++r)
    for (Index m = 0; m < report.test_lpd.cols(); ++m)
      out << report.methods[static_cast<size_t>(m)] << ',' << report.n << ',' << r << ','
          << format_double(report.test_lpd(r, m)) << ',' << format_double(report.mse(r, m))
          << '\n';
  return out.str();
}

std::string duplicates_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "rep,m,max_abs_drift,bma_group_mass\n";
  for (const auto& d : report.gm_duplicates)
    out << d.rep << ',' << d.m << ',' << format_double(d.max_abs_drift) << ','
        << format_double(d.bma_group_mass) << '\n';
  return out.str();
}

std::string model_diags_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "rep,model,elpd_loo,p_loo,p_loo_over_n,elpd_loo_per_n,elpd_test_per_point,elpd_test_per_n\n";
  for (const auto& d : report.model_diags)
    out << d.rep << ',' << d.model << ',' << format_double(d.elpd_loo) << ','
        << format_double(d.p_loo) << ',' << format_double(d.p_loo_over_n) << ','
        << format_double(d.elpd_loo_per_n) << ',' << format_double(d.elpd_test_per_point)
        << ',' << format_double(d.elpd_test_per_n) << '\n';
  return out.str();
}

}  // namespace mstack
