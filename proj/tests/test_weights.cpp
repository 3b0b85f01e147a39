#include <doctest.h>

#include <cmath>

#include "mstack/simlab.hpp"
#include "mstack/weights.hpp"

using namespace mstack;

namespace {

MatrixXd random_lpd(Index n, Index K, uint64_t seed, double loc = -1.2, double scale = 0.6) {
  Rng rng(seed);
  MatrixXd lpd(n, K);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < K; ++k) lpd(i, k) = loc + scale * rng.normal();
  return lpd;
}

}  // namespace

TEST_CASE("stack_logscore trivial and dominance cases") {
  const MatrixXd single = MatrixXd::Constant(10, 1, -1.5);
  const StackingSolution s1 = stack_logscore(single);
  CHECK(s1.weights.w(0) == 1.0);
  CHECK(s1.objective == doctest::Approx(-1.5));

  MatrixXd dom(25, 2);
  dom.col(0).setConstant(-1.0);
  dom.col(1).setConstant(-2.0);
  const StackingSolution s2 = stack_logscore(dom);
  CHECK(s2.weights.w(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s2.weights.w(1) < 1e-6);
  CHECK(s2.converged);
}

TEST_CASE("stack_logscore matches the grid oracle on random instances") {
  for (uint64_t t = 0; t < 5; ++t) {
    const MatrixXd lpd = random_lpd(20, 3, 7 + t);
    const StackingSolution sol = stack_logscore(lpd);
    const auto [gw, gv] = grid_weight_oracle(lpd, 0.01);
    CHECK(std::abs(sol.objective - gv) < 1e-4);
    CHECK(sol.objective >= gv - 1e-9);  // optimizer at least as good as the lattice
  }
}

TEST_CASE("stack_logscore certificate: beats vertices, uniform and the warm start") {
  const MatrixXd lpd = random_lpd(40, 4, 99);
  const StackingSolution sol = stack_logscore(lpd);
  const Index K = 4;
  for (Index k = 0; k < K; ++k)
    CHECK(sol.objective >= stack_objective(lpd, VectorXd::Unit(K, k)) - 1e-9);
  CHECK(sol.objective >= stack_objective(lpd, VectorXd::Constant(K, 0.25)) - 1e-9);
  const WeightVector init = pseudo_bma_plus(lpd, kDefaultBbSamples, kStackInitSeed);
  CHECK(sol.objective >= stack_objective(lpd, init.w) - 1e-9);
  CHECK(is_simplex(sol.weights.w, 1e-8));
}

TEST_CASE("stack_logscore is invariant to per-point shifts") {
  const MatrixXd lpd = random_lpd(30, 3, 41);
  Rng rng(42);
  MatrixXd shifted = lpd;
  double shift_total = 0.0;
  for (Index i = 0; i < lpd.rows(); ++i) {
    const double c = 3.0 * rng.normal();
    shifted.row(i).array() += c;
    shift_total += c;
  }
  const StackingSolution a = stack_logscore(lpd);
  const StackingSolution b = stack_logscore(shifted);
  CHECK((a.weights.w - b.weights.w).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(b.objective ==
        doctest::Approx(a.objective + shift_total / lpd.rows()).epsilon(1e-9));
}

TEST_CASE("duplicating a model leaves the stacked mixture unchanged") {
  const MatrixXd lpd = random_lpd(50, 3, 1234);
  const StackingSolution base = stack_logscore(lpd);

  MatrixXd dup(50, 4);
  dup.leftCols(3) = lpd;
  dup.col(3) = lpd.col(1);  // copy of model 2
  const StackingSolution ext = stack_logscore(dup);

  // total mass on the duplicated model is preserved
  CHECK(ext.weights.w(1) + ext.weights.w(3) ==
        doctest::Approx(base.weights.w(1)).epsilon(1e-6));

  // combined log density at arbitrary evaluation rows agrees
  const MatrixXd eval = random_lpd(25, 3, 777, -2.0, 1.0);
  MatrixXd eval_dup(25, 4);
  eval_dup.leftCols(3) = eval;
  eval_dup.col(3) = eval.col(1);
  const VectorXd mix_a = combine_predictive(base.weights, eval);
  const VectorXd mix_b = combine_predictive(ext.weights, eval_dup);
  CHECK((mix_a - mix_b).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("stack_means trivial, tie-break and moment-matching cases") {
  VectorXd y(4);
  y << 1.0, 2.0, 3.0, 4.0;
  const StackingSolution s1 = stack_means(MatrixXd::Constant(4, 1, 2.5), y);
  CHECK(s1.weights.w(0) == 1.0);

  // identical columns: flat objective, min-norm tie-break picks uniform
  const StackingSolution s2 = stack_means(MatrixXd::Constant(4, 3, 2.5), y);
  for (Index k = 0; k < 3; ++k)
    CHECK(s2.weights.w(k) == doctest::Approx(1.0 / 3).epsilon(1e-9));

  // location-model columns mu_k = k: any optimum has sum w_k k = mean(y)
  const GmConfig cfg{.n = 30, .seed = 4};
  const GmData data = gen_gm(cfg, 4);
  MatrixXd mu(30, 8);
  for (Index k = 0; k < 8; ++k) mu.col(k).setConstant(k + 1.0);
  const StackingSolution s3 = stack_means(mu, data.train);
  VectorXd ks = VectorXd::LinSpaced(8, 1.0, 8.0);
  CHECK(s3.weights.w.dot(ks) == doctest::Approx(data.train.mean()).epsilon(1e-6));
  CHECK(is_simplex(s3.weights.w, 1e-8));

  // certificate: no vertex or the uniform point does better
  for (Index k = 0; k < 8; ++k) {
    const double vertex_obj = -(data.train.array() - (k + 1.0)).square().mean();
    CHECK(s3.objective >= vertex_obj - 1e-9);
  }
  const double uniform_obj = -(data.train.array() - 4.5).square().mean();
  CHECK(s3.objective >= uniform_obj - 1e-9);
}

TEST_CASE("stack_means invariants hold across generated instances") {
  for (uint64_t t = 0; t < 30; ++t) {
    Rng rng(5200 + t);
    const Index K = 1 + static_cast<Index>(rng.next_index(6));
    const Index n = 5 + static_cast<Index>(rng.next_index(40));
    MatrixXd mu(n, K);
    VectorXd y(n);
    const bool collinear = t % 3 == 0;
    for (Index i = 0; i < n; ++i) {
      y(i) = 2.0 * rng.normal();
      for (Index k = 0; k < K; ++k)
        mu(i, k) = collinear ? rng.normal() : rng.normal(static_cast<double>(k), 1.0);
    }
    if (collinear && K > 1) mu.col(K - 1) = mu.col(0);  // duplicated predictor

    const StackingSolution sol = stack_means(mu, y);
    CHECK(is_simplex(sol.weights.w, 1e-8));
    // no vertex does better than the returned point
    for (Index k = 0; k < K; ++k) {
      const double vertex_obj = -(y - mu.col(k)).squaredNorm() / static_cast<double>(n);
      CHECK(sol.objective >= vertex_obj - 1e-9);
    }
    const VectorXd uni = VectorXd::Constant(K, 1.0 / static_cast<double>(K));
    const double uni_obj = -(y - mu * uni).squaredNorm() / static_cast<double>(n);
    CHECK(sol.objective >= uni_obj - 1e-9);
  }
}

TEST_CASE("stack_means requires matching finite inputs") {
  VectorXd y(3);
  y << 1, 2, 3;
  CHECK_THROWS_AS(stack_means(MatrixXd::Constant(4, 2, 1.0), y), ValidationError);
  MatrixXd bad = MatrixXd::Constant(3, 2, 1.0);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(stack_means(bad, y), NonFinite);
}

TEST_CASE("pseudo_bma softmax identities") {
  VectorXd e1(2);
  e1 << -10, -10;
  const WeightVector w1 = pseudo_bma(e1);
  CHECK(w1.w(0) == doctest::Approx(0.5).epsilon(1e-12));

  VectorXd e2(2);
  e2 << -10, -11;
  const WeightVector w2 = pseudo_bma(e2);
  CHECK(w2.w(0) == doctest::Approx(0.7310585786300049).epsilon(1e-9));
  CHECK(w2.w(1) == doctest::Approx(0.2689414213699951).epsilon(1e-9));

  const WeightVector w3 = pseudo_bma(VectorXd(e2.array() + 100.0));
  CHECK((w3.w - w2.w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pseudo_bma_lognormal identities") {
  VectorXd e(2), z(2), se(2);
  e << -10, -10;
  z << 0, 0;
  se << 0, 2;
  CHECK((pseudo_bma_lognormal(e, z).w - pseudo_bma(e).w).cwiseAbs().maxCoeff() == 0.0);

  const WeightVector w = pseudo_bma_lognormal(e, se);
  VectorXd ref(2);
  ref << -10, -11;
  CHECK((w.w - pseudo_bma(ref).w).cwiseAbs().maxCoeff() < 1e-12);

  VectorXd one(1), zero1(1);
  one << -3.0;
  zero1 << 0.5;
  CHECK(pseudo_bma_lognormal(one, zero1).w(0) == 1.0);

  VectorXd neg(2);
  neg << 1.0, -0.1;
  CHECK_THROWS_AS(pseudo_bma_lognormal(e, neg), ValidationError);
}

TEST_CASE("pseudo_bma_plus degenerate and symmetry cases") {
  // n = 1: the single Dirichlet weight is 1, so the result is pseudo_bma
  MatrixXd z(1, 3);
  z << -1.0, -2.0, -0.5;
  const WeightVector plus = pseudo_bma_plus(z, 500, 9);
  const WeightVector plain = pseudo_bma(z.row(0).transpose());
  CHECK((plus.w - plain.w).cwiseAbs().maxCoeff() < 1e-12);

  // identical columns stay uniform in every replicate
  MatrixXd same = MatrixXd::Zero(20, 4);
  Rng rng(31);
  for (Index i = 0; i < 20; ++i) same.row(i).setConstant(-1.0 + 0.2 * rng.normal());
  const WeightVector u = pseudo_bma_plus(same, 200, 11);
  for (Index k = 0; k < 4; ++k) CHECK(u.w(k) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("pseudo_bma_plus regression anchor on a 0.9/0.1 instance") {
  // two models, totals engineered so plain pseudo-BMA is exactly (0.9, 0.1)
  const Index n = 20;
  Rng rng(260);
  MatrixXd lpd(n, 2);
  for (Index i = 0; i < n; ++i) {
    lpd(i, 0) = -1.0 + 0.5 * rng.normal();
    lpd(i, 1) = lpd(i, 0) - 0.11 + 0.4 * rng.normal();
  }
  const double gap = lpd.col(0).sum() - lpd.col(1).sum();
  lpd.col(1).array() -= (std::log(9.0) - gap) / static_cast<double>(n);

  const WeightVector plain = pseudo_bma(VectorXd(lpd.colwise().sum()));
  CHECK(plain.w(0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(plain.w(1) == doctest::Approx(0.1).epsilon(1e-12));

  const WeightVector plus = pseudo_bma_plus(lpd, 4000, 1);
  CHECK(weight_entropy(plus) > weight_entropy(plain));
  // frozen regression anchor for this (instance, B, seed)
  CHECK(plus.w(0) == doctest::Approx(0.83317218460890596).epsilon(1e-12));
  CHECK(plus.w(1) == doctest::Approx(0.16682781539109129).epsilon(1e-12));
}

TEST_CASE("pseudo_bma_plus is deterministic and regularizes toward uniform") {
  const MatrixXd lpd = random_lpd(25, 3, 2718, -1.0, 1.2);
  const WeightVector a = pseudo_bma_plus(lpd, 4000, 1);
  const WeightVector b = pseudo_bma_plus(lpd, 4000, 1);
  CHECK(a.w == b.w);  // bit-for-bit

  const WeightVector plain = pseudo_bma(VectorXd(lpd.colwise().sum()));
  CHECK(weight_entropy(a) > weight_entropy(plain));

  CHECK_THROWS_AS(pseudo_bma_plus(lpd, 99, 1), ValidationError);
}

TEST_CASE("bma weights follow Bayes rule") {
  VectorXd lm = VectorXd::Constant(4, -17.0);
  const VectorXd uniform = VectorXd::Constant(4, 0.25);
  const WeightVector w = bma_weights(lm, uniform);
  for (Index k = 0; k < 4; ++k) CHECK(w.w(k) == doctest::Approx(0.25).epsilon(1e-12));

  // single observation y = 3.4 under means 1..8: w3/w4 = exp(0.1)
  VectorXd marg(8);
  for (Index k = 0; k < 8; ++k) marg(k) = normal_lpdf(3.4, k + 1.0, 1.0);
  const WeightVector gm = bma_weights(marg, VectorXd::Constant(8, 0.125));
  CHECK(gm.w(2) / gm.w(3) == doctest::Approx(std::exp(0.1)).epsilon(1e-12));

  // doubling the prior on model j shifts its log-odds by log 2
  VectorXd prior(8);
  prior.setConstant(1.0 / 9.0);
  prior(4) = 2.0 / 9.0;
  const WeightVector tilted = bma_weights(marg, prior);
  const double odds_before = gm.w(4) / gm.w(0);
  const double odds_after = tilted.w(4) / tilted.w(0);
  CHECK(odds_after / odds_before == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("select_best is one-hot with lowest-index ties") {
  VectorXd s1(2);
  s1 << -1, -2;
  CHECK(select_best(s1).w(0) == 1.0);
  VectorXd s2(2);
  s2 << 0, 0;
  CHECK(select_best(s2).w(0) == 1.0);
  CHECK(select_best(s2).w(1) == 0.0);
}

TEST_CASE("combine_predictive identities") {
  MatrixXd ld(2, 2);
  ld << -1.0, -5.0, -2.0, -0.3;

  VectorXd w10(2);
  w10 << 1.0, 0.0;
  const VectorXd c1 = combine_predictive(WeightVector::checked(w10), ld);
  CHECK(c1(0) == -1.0);
  CHECK(c1(1) == -2.0);

  // zero weight absorbs a -inf component density
  MatrixXd ld_inf = ld;
  ld_inf(0, 1) = kNegInf;
  const VectorXd c2 = combine_predictive(WeightVector::checked(w10), ld_inf);
  CHECK(c2(0) == -1.0);

  MatrixXd same(3, 4);
  for (Index k = 0; k < 4; ++k) same.col(k) = VectorXd::LinSpaced(3, -3.0, -1.0);
  VectorXd any(4);
  any << 0.1, 0.2, 0.3, 0.4;
  const VectorXd c3 = combine_predictive(WeightVector::checked(any), same);
  CHECK(c3(0) == doctest::Approx(-3.0).epsilon(1e-12));

  // mixture of N(0,1), N(1,1) at 0 with equal weights
  MatrixXd mix(1, 2);
  mix << normal_lpdf(0, 0, 1), normal_lpdf(0, 1, 1);
  VectorXd half = VectorXd::Constant(2, 0.5);
  CHECK(combine_predictive(WeightVector::checked(half), mix)(0) ==
        doctest::Approx(-1.1380087).epsilon(1e-6));
}
