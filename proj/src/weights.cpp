#include "mstack/weights.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mstack {

namespace {

VectorXd softmax(const VectorXd& v) {
  const double m = v.maxCoeff();
  VectorXd e = (v.array() - m).exp();
  return e / e.sum();
}

// Objective pieces for stacking on the log score. Rows are rescaled by their
// max once so every later evaluation is overflow-free.
struct StackProblem {
  MatrixXd E;     // n x K, exp(lpd - row max)
  double c_bar;   // mean of row maxima
  Index n, K;

  explicit StackProblem(const MatrixXd& lpd)
      : n(lpd.rows()), K(lpd.cols()) {
    const VectorXd c = lpd.rowwise().maxCoeff();
    E = (lpd.colwise() - c).array().exp();
    c_bar = c.mean();
  }

  double value(const VectorXd& w) const {
    return (E * w).array().log().mean() + c_bar;
  }

  void value_grad(const VectorXd& w, double& f, VectorXd& g) const {
    const VectorXd mix = E * w;
    f = mix.array().log().mean() + c_bar;
    g = (E.array().colwise() / mix.array()).colwise().mean();
  }
};

struct EgResult {
  VectorXd w;
  double objective;
  long iterations;
  bool converged;
};

// Exponentiated-gradient ascent on the simplex with backtracking step sizes.
// The optimality gap max_k g_k - g.w bounds the objective shortfall, so it
// doubles as the convergence certificate.
EgResult eg_ascent(const StackProblem& prob, const VectorXd& w0, long max_iter) {
  VectorXd lw = w0.array().max(1e-300).log();
  lw.array() -= log_sum_exp(lw);
  VectorXd w = lw.array().exp();

  double f;
  VectorXd g;
  prob.value_grad(w, f, g);

  double eta = 1.0;
  long it = 0;
  bool converged = false;
  double improvement = kPosInf;

  while (it < max_iter) {
    const double gap = g.maxCoeff() - g.dot(w);
    if (gap < kStackGapTol && improvement < kStackImprovementTol) {
      converged = true;
      break;
    }
    ++it;

    double fn = f;
    VectorXd lwn, wn;
    bool accepted = false;
    while (eta >= 1e-14) {
      lwn = lw + eta * g;
      lwn.array() -= log_sum_exp(lwn);
      lwn = lwn.array().max(-700.0);  // keep coordinates revivable
      wn = lwn.array().exp();
      wn /= wn.sum();
      fn = prob.value(wn);
      if (fn >= f) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) {
      converged = gap < kStackGapTol;
      break;
    }
    improvement = fn - f;
    lw = wn.array().max(1e-300).log();
    w = wn;
    f = fn;
    prob.value_grad(w, f, g);
    eta = std::min(eta * 1.3, 1e4);
  }

  return EgResult{w, f, it, converged};
}

StackingSolution run_stack(const MatrixXd& lpd, const VectorXd& w0) {
  const StackProblem prob(lpd);
  const Index K = prob.K;

  EgResult best = eg_ascent(prob, w0, kStackMaxIterations);
  long total_iter = best.iterations;
  if (!best.converged) {
    // full restart from uniform
    EgResult again = eg_ascent(prob, VectorXd::Constant(K, 1.0 / K), kStackMaxIterations);
    total_iter += again.iterations;
    if (again.objective > best.objective) best = again;
  }

  // certificate: the solution must beat every vertex and the uniform point
  for (Index k = 0; k <= K; ++k) {
    VectorXd cand = (k < K) ? VectorXd(VectorXd::Unit(K, k) * 0.999 +
                                       VectorXd::Constant(K, 0.001 / K))
                            : VectorXd(VectorXd::Constant(K, 1.0 / K));
    const double v = (k < K) ? prob.value(VectorXd::Unit(K, k)) : prob.value(cand);
    if (v > best.objective) {
      EgResult fix = eg_ascent(prob, cand, kStackMaxIterations);
      total_iter += fix.iterations;
      if (fix.objective > best.objective) best = fix;
    }
  }

  StackingSolution sol;
  sol.weights = WeightVector::checked(best.w / best.w.sum());
  sol.objective = best.objective;
  sol.iterations = total_iter;
  sol.converged = best.converged;
  return sol;
}

// Equality-constrained KKT solve on the current support for the simplex QP.
// Returns false when the system is numerically singular.
bool kkt_solve(const MatrixXd& Q, const VectorXd& c, const std::vector<Index>& support,
               VectorXd& w_out, double& lambda_out) {
  const Index p = static_cast<Index>(support.size());
  MatrixXd A(p + 1, p + 1);
  VectorXd rhs(p + 1);
  for (Index a = 0; a < p; ++a) {
    for (Index b = 0; b < p; ++b) A(a, b) = Q(support[a], support[b]);
    A(a, p) = 1.0;
    A(p, a) = 1.0;
    rhs(a) = -c(support[a]);
  }
  A(p, p) = 0.0;
  rhs(p) = 1.0;
  Eigen::FullPivLU<MatrixXd> lu(A);
  if (!lu.isInvertible()) return false;
  const VectorXd sol = lu.solve(rhs);
  w_out = sol.head(p);
  lambda_out = sol(p);
  return true;
}

// min 1/2 w'Qw + c'w over the simplex, Q positive definite. Primal active set
// with Lawson-Hanson style feasibility steps; exact for small K.
VectorXd solve_simplex_qp(const MatrixXd& Q, const VectorXd& c) {
  const Index K = Q.rows();
  std::vector<Index> support(static_cast<size_t>(K));
  std::iota(support.begin(), support.end(), Index{0});

  VectorXd w_feas = VectorXd::Constant(K, 1.0 / K);
  const double scale = Q.diagonal().cwiseAbs().maxCoeff() + c.cwiseAbs().maxCoeff() + 1.0;
  const double tol = 1e-12 * scale;

  for (int guard = 0; guard < 8 * static_cast<int>(K) + 16; ++guard) {
    VectorXd w_sup;
    double lambda = 0.0;
    if (!kkt_solve(Q, c, support, w_sup, lambda)) break;

    VectorXd w_new = VectorXd::Zero(K);
    for (size_t a = 0; a < support.size(); ++a) w_new(support[a]) = w_sup(static_cast<Index>(a));

    if (w_sup.minCoeff() < -1e-12) {
      // step from the last feasible point until the first coordinate hits zero
      double alpha = 1.0;
      Index drop = -1;
      for (const Index k : support) {
        if (w_new(k) < 0.0 && w_feas(k) > w_new(k)) {
          const double a = w_feas(k) / (w_feas(k) - w_new(k));
          if (a < alpha) {
            alpha = a;
            drop = k;
          }
        }
      }
      w_feas += alpha * (w_new - w_feas);
      if (drop >= 0) {
        w_feas(drop) = 0.0;
        support.erase(std::remove(support.begin(), support.end(), drop), support.end());
      }
      if (support.empty()) break;
      continue;
    }

    w_feas = w_new;

    // dual feasibility on the zeroed coordinates
    const VectorXd grad = Q * w_feas + c;
    Index enter = -1;
    double worst = -tol;
    for (Index k = 0; k < K; ++k) {
      if (std::find(support.begin(), support.end(), k) != support.end()) continue;
      const double eta = grad(k) - lambda;
      if (eta < worst) {
        worst = eta;
        enter = k;
      }
    }
    if (enter < 0) break;
    support.push_back(enter);
    std::sort(support.begin(), support.end());
  }

  w_feas = w_feas.cwiseMax(0.0);
  w_feas /= w_feas.sum();
  return w_feas;
}

}  // namespace

double stack_objective(const MatrixXd& loo_lpd, const VectorXd& w) {
  return StackProblem(loo_lpd).value(w);
}

StackingSolution stack_logscore(const MatrixXd& loo_lpd, const VectorXd& w0) {
  if (loo_lpd.rows() < 1 || loo_lpd.cols() < 1)
    throw ValidationError("stack_logscore: empty lpd matrix");
  if (!loo_lpd.allFinite()) throw NonFinite("stack_logscore: non-finite lpd matrix");
  if (!is_simplex(w0)) throw ValidationError("stack_logscore: start point off the simplex");

  const Index K = loo_lpd.cols();
  if (K == 1) {
    StackingSolution sol;
    sol.weights = WeightVector::checked(VectorXd::Ones(1));
    sol.objective = loo_lpd.col(0).mean();
    sol.converged = true;
    return sol;
  }
  return run_stack(loo_lpd, w0);
}

StackingSolution stack_logscore(const MatrixXd& loo_lpd) {
  if (loo_lpd.rows() < 1 || loo_lpd.cols() < 1)
    throw ValidationError("stack_logscore: empty lpd matrix");
  if (!loo_lpd.allFinite()) throw NonFinite("stack_logscore: non-finite lpd matrix");
  if (loo_lpd.cols() == 1) return stack_logscore(loo_lpd, VectorXd::Ones(1));
  const WeightVector w0 = pseudo_bma_plus(loo_lpd, kDefaultBbSamples, kStackInitSeed);
  return stack_logscore(loo_lpd, w0.w);
}

StackingSolution stack_means(const MatrixXd& loo_mean, const VectorXd& y) {
  const Index n = loo_mean.rows();
  const Index K = loo_mean.cols();
  if (n < 1 || K < 1) throw ValidationError("stack_means: empty predictor matrix");
  if (y.size() != n) throw ValidationError("stack_means: y length mismatch");
  if (!loo_mean.allFinite() || !y.allFinite())
    throw NonFinite("stack_means: non-finite input");

  StackingSolution sol;
  if (K == 1) {
    sol.weights = WeightVector::checked(VectorXd::Ones(1));
    sol.objective = -(y - loo_mean.col(0)).squaredNorm() / static_cast<double>(n);
    sol.converged = true;
    return sol;
  }

  // normalized QP: (1/n)||y - Mw||^2 plus a tiny ridge picking the
  // minimum-norm point of the optimal face
  const MatrixXd Q_fit = (2.0 / n) * (loo_mean.transpose() * loo_mean);
  const VectorXd c = (-2.0 / n) * (loo_mean.transpose() * y);
  const double mu = 1e-10 * std::max(1.0, Q_fit.diagonal().maxCoeff());
  const MatrixXd Q = Q_fit + 2.0 * mu * MatrixXd::Identity(K, K);

  const VectorXd w = solve_simplex_qp(Q, c);
  sol.weights = WeightVector::checked(w);
  sol.objective = -(y - loo_mean * w).squaredNorm() / static_cast<double>(n);
  sol.converged = true;
  return sol;
}

WeightVector pseudo_bma(const VectorXd& elpd) {
  if (elpd.size() < 1) throw ValidationError("pseudo_bma: empty elpd vector");
  if (!elpd.allFinite()) throw NonFinite("pseudo_bma: non-finite elpd");
  return WeightVector::checked(softmax(elpd));
}

WeightVector pseudo_bma_lognormal(const VectorXd& elpd, const VectorXd& se) {
  if (elpd.size() != se.size()) throw ValidationError("pseudo_bma_lognormal: size mismatch");
  if (!elpd.allFinite() || !se.allFinite())
    throw NonFinite("pseudo_bma_lognormal: non-finite input");
  if (se.minCoeff() < 0.0) throw ValidationError("pseudo_bma_lognormal: negative se");
  return WeightVector::checked(softmax(elpd - 0.5 * se));
}

WeightVector pseudo_bma_plus(const MatrixXd& loo_lpd, int B, uint64_t seed) {
  const Index n = loo_lpd.rows();
  const Index K = loo_lpd.cols();
  if (n < 1 || K < 1) throw ValidationError("pseudo_bma_plus: empty lpd matrix");
  if (!loo_lpd.allFinite()) throw NonFinite("pseudo_bma_plus: non-finite lpd matrix");
  if (B < 100) throw ValidationError("pseudo_bma_plus: B must be at least 100");

  VectorXd acc = VectorXd::Zero(K);
  VectorXd alpha(n);
  for (int b = 1; b <= B; ++b) {
    Rng rng = Rng::from_stream(seed, static_cast<uint64_t>(b));
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      alpha(i) = rng.exponential();  // Dirichlet(1,...,1) by normalization
      sum += alpha(i);
    }
    alpha /= sum;
    const VectorXd zbar = loo_lpd.transpose() * alpha;
    acc += softmax(static_cast<double>(n) * zbar);
  }
  acc /= static_cast<double>(B);
  return WeightVector::checked(acc);
}

WeightVector bma_weights(const VectorXd& log_marginal, const VectorXd& prior) {
  const Index K = log_marginal.size();
  if (K < 1) throw ValidationError("bma_weights: empty input");
  if (prior.size() != K) throw ValidationError("bma_weights: prior length mismatch");
  if (!log_marginal.allFinite()) throw NonFinite("bma_weights: non-finite log marginal");
  if (!is_simplex(prior)) throw ValidationError("bma_weights: prior is not on the simplex");

  VectorXd v(K);
  for (Index k = 0; k < K; ++k)
    v(k) = log_marginal(k) + (prior(k) > 0.0 ? std::log(prior(k)) : kNegInf);
  const double m = v.maxCoeff();
  VectorXd e(K);
  for (Index k = 0; k < K; ++k) e(k) = v(k) == kNegInf ? 0.0 : std::exp(v(k) - m);
  return WeightVector::checked(e / e.sum());
}

WeightVector select_best(const VectorXd& scores) {
  if (scores.size() < 1) throw ValidationError("select_best: empty score vector");
  Index best = 0;
  for (Index k = 1; k < scores.size(); ++k)
    if (scores(k) > scores(best)) best = k;  // ties keep the lowest index
  return WeightVector::checked(VectorXd::Unit(scores.size(), best));
}

VectorXd combine_predictive(const WeightVector& weights, const MatrixXd& component_log_densities) {
  const Index K = weights.w.size();
  if (component_log_densities.cols() != K)
    throw ValidationError("combine_predictive: column count does not match weights");
  const Index m = component_log_densities.rows();
  VectorXd out(m);
  for (Index r = 0; r < m; ++r) {
    double acc = kNegInf;
    for (Index k = 0; k < K; ++k) {
      if (weights.w(k) <= 0.0) continue;  // zero weight beats -inf density
      acc = log_sum_exp(acc, std::log(weights.w(k)) + component_log_densities(r, k));
    }
    out(r) = acc;
  }
  return out;
}

double weight_entropy(const WeightVector& w) {
  double h = 0.0;
  for (Index k = 0; k < w.w.size(); ++k)
    if (w.w(k) > 0.0) h -= w.w(k) * std::log(w.w(k));
  return h;
}

}  // namespace mstack
