#include "mstack/psis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mstack {

double khat_threshold() { return 0.7; }

namespace {

constexpr int kGpdGridPoints = 200;  // profile-likelihood quadrature grid
constexpr double kPriorStrength = 3.0;

// GPD(k, sigma) quantile, stable through k -> 0.
double gpd_quantile(double u, double k_hat, double sigma) {
  const double l = std::log1p(-u);
  if (std::abs(k_hat) < 1e-12) return -sigma * l;
  return sigma * std::expm1(-k_hat * l) / k_hat;
}

}  // namespace

ParetoFit fit_gpd(const VectorXd& tail) {
  const Index M = tail.size();
  if (M < 5) throw TailTooSmall("GPD fit needs at least 5 exceedances, got " + std::to_string(M));
  for (Index i = 0; i < M; ++i) {
    if (!(tail(i) > 0.0)) throw ValidationError("GPD exceedances must be positive");
    if (i > 0 && tail(i) < tail(i - 1))
      throw ValidationError("GPD exceedances must be sorted ascending");
  }
  const double x_max = tail(M - 1);
  if (x_max - tail(0) <= 0.0 || (tail.array() - tail.mean()).abs().maxCoeff() == 0.0)
    throw DegenerateTail("zero-variance tail");

  // Zhang-Stephens: profile the likelihood in b = k/sigma over a deterministic
  // grid anchored at the first quartile, then average b under the normalized
  // profile likelihood. b > -1/x_max keeps every log1p argument positive.
  const Index q_idx = static_cast<Index>(std::floor(static_cast<double>(M) / 4.0 + 0.5)) - 1;
  const double x_quart = tail(std::max<Index>(q_idx, 0));

  double ll[kGpdGridPoints];
  double bs[kGpdGridPoints];
  double ll_max = kNegInf;
  for (int j = 1; j <= kGpdGridPoints; ++j) {
    const double b = -1.0 / x_max +
                     (std::sqrt(static_cast<double>(kGpdGridPoints) / (j - 0.5)) - 1.0) /
                         (kPriorStrength * x_quart);
    double k = 0.0;
    for (Index i = 0; i < M; ++i) k += std::log1p(b * tail(i));
    k /= static_cast<double>(M);
    double l;
    if (b == 0.0 || k == 0.0) {
      l = static_cast<double>(M) * (-std::log(tail.mean()) - 1.0);  // exponential limit
    } else {
      l = static_cast<double>(M) * (std::log(b / k) - k - 1.0);
    }
    bs[j - 1] = b;
    ll[j - 1] = l;
    ll_max = std::max(ll_max, l);
  }

  double wsum = 0.0, b_hat = 0.0;
  for (int j = 0; j < kGpdGridPoints; ++j) {
    const double w = std::exp(ll[j] - ll_max);
    wsum += w;
    b_hat += w * bs[j];
  }
  b_hat /= wsum;

  double k_hat = 0.0;
  for (Index i = 0; i < M; ++i) k_hat += std::log1p(b_hat * tail(i));
  k_hat /= static_cast<double>(M);
  const double sigma = (std::abs(b_hat) < 1e-300) ? tail.mean() : k_hat / b_hat;

  // weak prior pulling k toward 0.5, stabilizes small tails
  k_hat = (k_hat * static_cast<double>(M) + 0.5 * 10.0) / (static_cast<double>(M) + 10.0);

  return ParetoFit{k_hat, sigma, M};
}

SmoothedRatios smooth_ratios(const VectorXd& log_r) {
  const Index S = log_r.size();
  if (S < 1) throw ValidationError("smooth_ratios needs at least one ratio");

  SmoothedRatios out;
  out.raw_log_r = log_r;
  out.log_w = log_r;

  const double lr_max = log_r.maxCoeff();
  const double lr_min = log_r.minCoeff();
  if (lr_max == lr_min) {
    // constant ratios are already stable; nothing to smooth, nothing to flag
    out.k_hat = 0.0;
    return out;
  }

  const Index M = static_cast<Index>(std::ceil(0.2 * static_cast<double>(S)));

  // ascending index order; stable so ties keep their input order
  std::vector<Index> order(static_cast<size_t>(S));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&log_r](Index a, Index b) { return log_r(a) < log_r(b); });

  // shift to ratio scale in (0, 1] so exp never overflows; the GPD fit is
  // scale-invariant, so the shift cancels out of k_hat
  const double threshold = std::exp(log_r(order[static_cast<size_t>(S - M - 1)]) - lr_max);
  VectorXd exceed(M);
  bool positive = true;
  for (Index z = 0; z < M; ++z) {
    exceed(z) = std::exp(log_r(order[static_cast<size_t>(S - M + z)]) - lr_max) - threshold;
    if (!(exceed(z) > 0.0)) positive = false;
  }

  const bool can_fit = M >= 5 && positive && exceed(M - 1) > exceed(0);
  ParetoFit fit;
  if (can_fit) {
    try {
      fit = fit_gpd(exceed);
    } catch (const NumericalError&) {
      out.k_hat = kPosInf;
      return out;
    }
  } else {
    out.k_hat = kPosInf;
    return out;
  }

  if (S < 25) {
    // tail too thin to smooth reliably; keep raw ratios but report the fit
    out.k_hat = fit.k_hat;
    return out;
  }

  // replace the M largest ratios, in rank order, by GPD quantiles at the
  // midpoint probabilities, truncated at the raw maximum (ratio 1 after shift)
  for (Index z = 0; z < M; ++z) {
    const double u = (static_cast<double>(z) + 0.5) / static_cast<double>(M);
    const double q = threshold + gpd_quantile(u, fit.k_hat, fit.sigma);
    out.log_w(order[static_cast<size_t>(S - M + z)]) = std::log(std::min(q, 1.0)) + lr_max;
  }
  out.k_hat = fit.k_hat;
  return out;
}

PointLpd loo_lpd_point(const VectorXd& loglik_col) {
  const Index S = loglik_col.size();
  if (S < 1) throw ValidationError("loo_lpd_point needs at least one draw");
  if (!loglik_col.allFinite()) throw NonFinite("loo_lpd_point: non-finite log-likelihood");
  if (S == 1) return PointLpd{loglik_col(0), 0.0};  // no-parameter case

  const SmoothedRatios sm = smooth_ratios(-loglik_col);
  const double num = log_sum_exp(VectorXd(sm.log_w + loglik_col));
  const double den = log_sum_exp(sm.log_w);
  return PointLpd{num - den, sm.k_hat};
}

double loo_mean_point(const VectorXd& pred_mean_col, const VectorXd& log_w) {
  const Index S = pred_mean_col.size();
  if (S != log_w.size()) throw ValidationError("loo_mean_point: size mismatch");
  const double c = log_w.maxCoeff();
  double num = 0.0, den = 0.0;
  for (Index s = 0; s < S; ++s) {
    const double w = std::exp(log_w(s) - c);
    num += w * pred_mean_col(s);
    den += w;
  }
  return num / den;
}

LooResult loo_all(const Manifest& manifest, int threads) {
  const Index n = manifest.n;
  const Index K = manifest.K;

  LooResult res;
  res.loo_lpd.resize(n, K);
  res.k_hat.resize(n, K);

  bool all_pred_mean = true;
  for (const auto& m : manifest.models) all_pred_mean = all_pred_mean && m.pred_mean.has_value();
  if (all_pred_mean) res.loo_mean = MatrixXd(n, K);

  parallel_for(n * K, threads, [&](Index cell) {
    const Index k = cell / n;
    const Index i = cell % n;
    const auto& model = manifest.models[static_cast<size_t>(k)];
    const VectorXd col = model.loglik.col(i);
    if (model.draws() == 1) {
      res.loo_lpd(i, k) = col(0);
      res.k_hat(i, k) = 0.0;
      if (res.loo_mean) (*res.loo_mean)(i, k) = (*model.pred_mean)(0, i);
      return;
    }
    const SmoothedRatios sm = smooth_ratios(-col);
    const double num = log_sum_exp(VectorXd(sm.log_w + col));
    const double den = log_sum_exp(sm.log_w);
    res.loo_lpd(i, k) = num - den;
    res.k_hat(i, k) = sm.k_hat;
    if (res.loo_mean)
      (*res.loo_mean)(i, k) = loo_mean_point(model.pred_mean->col(i), sm.log_w);
  });

  res.elpd.resize(static_cast<size_t>(K));
  for (Index k = 0; k < K; ++k) {
    ElpdSummary& e = res.elpd[static_cast<size_t>(k)];
    e.pointwise = res.loo_lpd.col(k);
    e.total = e.pointwise.sum();
    const double mean = e.total / static_cast<double>(n);
    e.se = std::sqrt((e.pointwise.array() - mean).square().sum());

    const auto& model = manifest.models[static_cast<size_t>(k)];
    const double log_s = std::log(static_cast<double>(model.draws()));
    double lpd_full = 0.0;
    for (Index i = 0; i < n; ++i)
      lpd_full += log_sum_exp(VectorXd(model.loglik.col(i))) - log_s;
    e.p_loo = lpd_full - e.total;

    if (static_cast<double>(n) < 5.0 * e.p_loo) res.small_sample_models.push_back(k);
  }

  for (Index k = 0; k < K; ++k)
    for (Index i = 0; i < n; ++i)
      if (res.k_hat(i, k) > khat_threshold())
        res.high_khat.push_back(CellWarning{i, k, res.k_hat(i, k)});

  return res;
}

}  // namespace mstack
