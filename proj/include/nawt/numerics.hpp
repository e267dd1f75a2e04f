#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>

#include "nawt/error.hpp"

namespace nawt {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream keyed by (seed, stream_id).
///
/// Draw k of a stream is a pure function of (seed, stream_id, k), so a
/// replicate produces the same numbers no matter which thread runs it or
/// how many replicates ran before it.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed),
        stream_id_(stream_id),
        key_(detail::mix64(detail::mix64(seed) ^
                           (stream_id * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }

  result_type next() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, bound), unbiased by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) fail(ErrorCode::Domain, "RngStream::below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace detail {

inline bool is_integer_alpha(double alpha) {
  return alpha <= 64.0 && std::abs(alpha - std::round(alpha)) < 1e-12;
}

// -integral_0^p u^a / (1 - u) du for non-integer a.
//
// p <= 0.7: expand 1/(1 - u) and integrate termwise,
//   -sum_{k>=0} p^(a+1+k) / (a+1+k).
// p > 0.7: split u^a/(1-u) = 1/(1-u) - (1-u^a)/(1-u). The second part
// integrates over [0, 1] to digamma(a+1) + euler_gamma, and its tail over
// [p, 1] is a binomial series in v = 1 - p:
//   log(1-p) + digamma(a+1) + gamma + sum_{j>=1} C(a,j) (-v)^j / j.
inline double control_term_series(double p, double a) {
  if (p <= 0.7) {
    double sum = 0.0;
    double pk = 1.0;
    for (int k = 0; k < 2000; ++k) {
      const double term = pk / (a + 1.0 + k);
      sum += term;
      if (term < 1e-17 * sum) break;
      pk *= p;
    }
    return -std::pow(p, a + 1.0) * sum;
  }
  const double v = 1.0 - p;
  double coef = 1.0;  // C(a, j) (-1)^j, updated before use
  double vj = 1.0;
  double sum = 0.0;
  for (int j = 1; j < 4000; ++j) {
    coef *= -(a - (j - 1)) / j;
    vj *= v;
    const double term = coef * vj / j;
    sum += term;
    if (j > a + 1.0 && std::abs(term) < 1e-17 * (std::abs(sum) + 1e-300)) break;
  }
  return std::log1p(-p) + boost::math::digamma(a + 1.0) + std::numbers::egamma + sum;
}

}  // namespace detail

/// Control-unit pseudo-log-likelihood for the power weighting pi^alpha:
/// -integral_0^pi u^alpha / (1 - u) du. alpha = 0 gives log(1 - pi).
inline double control_loglik_term(double pi, double alpha) {
  if (!(pi > 0.0 && pi < 1.0)) fail(ErrorCode::Domain, "control_loglik_term: pi must lie in (0, 1)");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    fail(ErrorCode::Domain, "control_loglik_term: alpha must be finite and >= 0");
  }
  if (!detail::is_integer_alpha(alpha)) return detail::control_term_series(pi, alpha);

  const int m = static_cast<int>(std::round(alpha));
  if (pi < 0.5) {
    // log(1 - pi) + sum_{j<=m} pi^j / j == -sum_{j>m} pi^j / j
    double sum = 0.0;
    double power = std::pow(pi, m + 1);
    for (int j = m + 1; j < m + 400; ++j) {
      const double term = power / j;
      sum += term;
      if (term < 1e-18 * sum) break;
      power *= pi;
    }
    return -sum;
  }
  double sum = std::log1p(-pi);
  double power = 1.0;
  for (int j = 1; j <= m; ++j) {
    power *= pi;
    sum += power / j;
  }
  return sum;
}

/// Treated-unit pseudo-log-likelihood for pi^alpha: pi^alpha / alpha, or
/// log(pi) when alpha = 0.
inline double treated_loglik_term(double pi, double alpha) {
  if (!(pi > 0.0 && pi < 1.0)) fail(ErrorCode::Domain, "treated_loglik_term: pi must lie in (0, 1)");
  if (!(alpha >= 0.0)) fail(ErrorCode::Domain, "treated_loglik_term: alpha must be >= 0");
  if (alpha == 0.0) return std::log(pi);
  return std::pow(pi, alpha) / alpha;
}

/// Gauss hypergeometric 2F1(1, 1 + alpha; 2 + alpha; z) for 0 <= z < 1.
inline double hyp2f1_1b(double alpha, double z) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail(ErrorCode::Domain, "hyp2f1_1b: alpha must be >= 0");
  if (!(z >= 0.0 && z < 1.0)) fail(ErrorCode::Domain, "hyp2f1_1b: z must lie in [0, 1)");
  if (z == 0.0) return 1.0;
  if (z <= 0.9) {
    // Term k of the Gauss series reduces to (1 + alpha) / (1 + alpha + k) z^k.
    double sum = 0.0;
    double zk = 1.0;
    for (int k = 0; k < 2000; ++k) {
      const double term = (1.0 + alpha) / (1.0 + alpha + k) * zk;
      sum += term;
      if (term < 1e-17 * sum) break;
      zk *= z;
    }
    return sum;
  }
  // Logarithmic growth near z = 1: go through the integral representation.
  return -(1.0 + alpha) * control_loglik_term(z, alpha) / std::pow(z, 1.0 + alpha);
}

/// Central-difference gradient of a scalar function of a vector.
template <class F>
Eigen::VectorXd finite_diff_gradient(F&& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace nawt
