#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace mstack {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Index = Eigen::Index;

// User/data errors (bad files, broken invariants, unusable inputs). CLI exit 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failures of the numerics themselves (degenerate fits, non-convergence). CLI exit 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TailTooSmall : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateTail : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class MissingPredMean : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class GridCoverage : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonFinite : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)), safe for -inf operands.
inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_sum_exp(const VectorXd& v) {
  if (v.size() == 0) return kNegInf;
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += std::exp(v(i) - m);
  return m + std::log(s);
}

inline double normal_lpdf(double y, double mu, double sd) {
  static const double kLogSqrt2Pi = 0.9189385332046727;
  const double z = (y - mu) / sd;
  return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

// standard normal cdf
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent child seed for work item `stream` of a run seeded with `seed`.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// mt19937_64 plus explicit transforms, so streams are reproducible run-to-run
// and derivable per (seed, stream) for schedule-independent parallel work.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  static Rng from_stream(uint64_t seed, uint64_t stream) {
    return Rng(derive_seed(seed, stream));
  }

  // uniform on (0,1), never returns an endpoint
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; second variate cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mu, double sd) { return mu + sd * normal(); }

  double exponential() { return -std::log(uniform()); }

  uint64_t next_u64() { return gen_(); }

  // index in [0, n)
  Index next_index(Index n) {
    return static_cast<Index>(gen_() % static_cast<uint64_t>(n));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Runs fn(i) for i in [0, n). Work items must write disjoint slots; the
// partition is by contiguous blocks so results never depend on thread count.
void parallel_for(Index n, int threads, const std::function<void(Index)>& fn);

}  // namespace mstack
