#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nawt/error.hpp"
#include "nawt/estimands.hpp"
#include "nawt/gmm.hpp"
#include "nawt/model.hpp"
#include "nawt/numerics.hpp"
#include "nawt/parallel.hpp"
#include "nawt/solver.hpp"

namespace nawt {

enum class VarianceMethod { Sandwich, Bootstrap };
enum class CiKind { Wald, Percentile };

inline std::string to_string(VarianceMethod m) { return m == VarianceMethod::Sandwich ? "sandwich" : "bootstrap"; }

inline constexpr double kZ975 = 1.959963984540054;

struct VarianceReport {
  double tau = std::numeric_limits<double>::quiet_NaN();
  double se_tau = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd vcov;              // sandwich only; parameter order in param_names
  std::vector<std::string> param_names;
  VarianceMethod method = VarianceMethod::Sandwich;
  CiKind ci_kind = CiKind::Wald;
  int n_boot = 0;
  int n_failed = 0;
  std::pair<double, double> ci95{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
};

/// H^-1 (Psi'Psi / n) H^-T / n for per-unit estimating functions Psi (n x p)
/// and the mean Jacobian H (p x p).
inline Eigen::MatrixXd stacked_sandwich(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& h) {
  const auto n = static_cast<double>(psi.rows());
  if (h.rows() != h.cols() || h.cols() != psi.cols()) fail(ErrorCode::Validation, "stacked_sandwich: shape mismatch");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(cond < 1e14)) {
    std::ostringstream os;
    os << "singular Hessian in sandwich variance (condition number " << cond << ")";
    fail(ErrorCode::SingularMatrix, os.str());
  }
  const Eigen::MatrixXd hinv = h.partialPivLu().inverse();
  const Eigen::MatrixXd meat = psi.transpose() * psi / n;
  const Eigen::MatrixXd v = hinv * meat * hinv.transpose() / n;
  return 0.5 * (v + v.transpose());
}

namespace detail {

inline std::vector<std::string> beta_names(const Dataset& d, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& nm : d.names()) out.push_back(prefix + nm);
  return out;
}

inline void require_hajek(const EffectEstimate& e, const char* what) {
  if (e.estimator != Estimator::Hajek) {
    fail(ErrorCode::Validation, std::string(what) + ": sandwich variance is defined for the Hajek estimator");
  }
}

inline VarianceReport finish_sandwich(double tau, Eigen::MatrixXd vcov, std::vector<std::string> names) {
  VarianceReport r;
  r.tau = tau;
  const Eigen::Index last = vcov.rows() - 1;
  r.se_tau = std::sqrt(std::max(0.0, vcov(last, last)));
  r.vcov = std::move(vcov);
  r.param_names = std::move(names);
  r.method = VarianceMethod::Sandwich;
  r.ci95 = {tau - kZ975 * r.se_tau, tau + kZ975 * r.se_tau};
  return r;
}

// Writes the weighted score block of a fit into psi and h at offset `at`.
inline void put_score_block(const Dataset& d, const PropensityFit& fit, Eigen::MatrixXd& psi, Eigen::MatrixXd& h,
                            Eigen::Index at) {
  const Eigen::Index k = d.k();
  psi.middleCols(at, k) = score_contributions(d, fit.pi_hat, fit.scheme);
  h.block(at, at, k, k) = mean_jacobian(d.x(), d.t(), fit.pi_hat, fit.scheme);
}

}  // namespace detail

/// Joint sandwich for the ATT over (beta, mu0, mu1, tau), where mu0 is the
/// Hajek-weighted control mean and mu1 the treated mean.
inline VarianceReport sandwich_att(const Dataset& d, const PropensityFit& fit, const EffectEstimate& effect) {
  detail::require_hajek(effect, "sandwich_att");
  const Eigen::Index n = d.n(), k = d.k(), p = k + 3;
  const auto nd = static_cast<double>(n);
  const auto& t = d.t();
  const auto& y = d.y();
  const auto& pi = fit.pi_hat;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n, p);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  detail::put_score_block(d, fit, psi, h, 0);
  const Eigen::Index i0 = k, i1 = k + 1, it = k + 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = 1.0 - t[i];
    const double w = pi[i] / (1.0 - pi[i]);
    psi(i, i0) = c * w * (y[i] - effect.mu0);
    psi(i, i1) = t[i] * (y[i] - effect.mu1);
    // d/d beta of w = pi/(1-pi) is w x.
    h.row(i0).head(k) += c * w * (y[i] - effect.mu0) * d.x().row(i) / nd;
    h(i0, i0) -= c * w / nd;
    h(i1, i1) -= t[i] / nd;
  }
  h(it, i0) = -1.0;
  h(it, i1) = 1.0;
  h(it, it) = -1.0;
  auto names = detail::beta_names(d, "beta:");
  names.insert(names.end(), {"mu0", "mu1", "tau"});
  return detail::finish_sandwich(effect.tau, stacked_sandwich(psi, h), std::move(names));
}

/// ATC through the relabeled ATT; tau and its covariances change sign.
inline VarianceReport sandwich_atc(const Dataset& d, const PropensityFit& fit_on_relabeled,
                                   const EffectEstimate& effect) {
  const Dataset flipped = d.relabeled();
  EffectEstimate mirrored = effect;
  mirrored.estimand = EstimandKind::ATT;
  mirrored.tau = -effect.tau;
  std::swap(mirrored.mu0, mirrored.mu1);
  auto r = sandwich_att(flipped, fit_on_relabeled, mirrored);
  const Eigen::Index last = r.vcov.rows() - 1;
  r.vcov.row(last) *= -1.0;
  r.vcov.col(last) *= -1.0;
  // Relabeled mu0 / mu1 are the original treated / control means.
  r.param_names[static_cast<std::size_t>(last - 2)] = "mu1";
  r.param_names[static_cast<std::size_t>(last - 1)] = "mu0";
  r.tau = effect.tau;
  r.ci95 = {effect.tau - kZ975 * r.se_tau, effect.tau + kZ975 * r.se_tau};
  return r;
}

/// Joint sandwich over (beta0, mu0, beta1, mu1, tau) for separate ATE
/// estimation: fit0 is the control-side fit, fit1 the treated-side fit.
inline VarianceReport sandwich_ate_separate(const Dataset& d, const PropensityFit& fit0, const PropensityFit& fit1,
                                            const EffectEstimate& effect) {
  detail::require_hajek(effect, "sandwich_ate_separate");
  const Eigen::Index n = d.n(), k = d.k(), p = 2 * k + 3;
  const auto nd = static_cast<double>(n);
  const auto& t = d.t();
  const auto& y = d.y();
  const auto& pi0 = fit0.pi_hat;
  const auto& pi1 = fit1.pi_hat;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n, p);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  const Eigen::Index b0 = 0, m0 = k, b1 = k + 1, m1 = 2 * k + 1, it = 2 * k + 2;
  detail::put_score_block(d, fit0, psi, h, b0);
  detail::put_score_block(d, fit1, psi, h, b1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = 1.0 - t[i];
    const double r0 = c * (y[i] - effect.mu0);
    const double r1 = t[i] * (y[i] - effect.mu1);
    psi(i, m0) = r0 / (1.0 - pi0[i]);
    psi(i, m1) = r1 / pi1[i];
    h.row(m0).segment(b0, k) += r0 * pi0[i] / (1.0 - pi0[i]) * d.x().row(i) / nd;
    h(m0, m0) -= c / (1.0 - pi0[i]) / nd;
    h.row(m1).segment(b1, k) -= r1 * (1.0 - pi1[i]) / pi1[i] * d.x().row(i) / nd;
    h(m1, m1) -= t[i] / pi1[i] / nd;
  }
  h(it, m0) = -1.0;
  h(it, m1) = 1.0;
  h(it, it) = -1.0;
  auto names = detail::beta_names(d, "beta0:");
  names.push_back("mu0");
  const auto n1 = detail::beta_names(d, "beta1:");
  names.insert(names.end(), n1.begin(), n1.end());
  names.insert(names.end(), {"mu1", "tau"});
  return detail::finish_sandwich(effect.tau, stacked_sandwich(psi, h), std::move(names));
}

/// Joint sandwich over (beta, mu0, mu1, tau) for a single propensity fit.
inline VarianceReport sandwich_ate_combined(const Dataset& d, const PropensityFit& fit, const EffectEstimate& effect) {
  detail::require_hajek(effect, "sandwich_ate_combined");
  const Eigen::Index n = d.n(), k = d.k(), p = k + 3;
  const auto nd = static_cast<double>(n);
  const auto& t = d.t();
  const auto& y = d.y();
  const auto& pi = fit.pi_hat;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n, p);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  detail::put_score_block(d, fit, psi, h, 0);
  const Eigen::Index m0 = k, m1 = k + 1, it = k + 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = 1.0 - t[i];
    const double r0 = c * (y[i] - effect.mu0);
    const double r1 = t[i] * (y[i] - effect.mu1);
    psi(i, m0) = r0 / (1.0 - pi[i]);
    psi(i, m1) = r1 / pi[i];
    h.row(m0).head(k) += r0 * pi[i] / (1.0 - pi[i]) * d.x().row(i) / nd;
    h(m0, m0) -= c / (1.0 - pi[i]) / nd;
    h.row(m1).head(k) -= r1 * (1.0 - pi[i]) / pi[i] * d.x().row(i) / nd;
    h(m1, m1) -= t[i] / pi[i] / nd;
  }
  h(it, m0) = -1.0;
  h(it, m1) = 1.0;
  h(it, it) = -1.0;
  auto names = detail::beta_names(d, "beta:");
  names.insert(names.end(), {"mu0", "mu1", "tau"});
  return detail::finish_sandwich(effect.tau, stacked_sandwich(psi, h), std::move(names));
}

/// Joint sandwich over (beta, mu) for the mean outcome under missingness.
inline VarianceReport sandwich_ao(const Dataset& d, const PropensityFit& fit, const EffectEstimate& effect) {
  detail::require_hajek(effect, "sandwich_ao");
  const Eigen::Index n = d.n(), k = d.k(), p = k + 1;
  const auto nd = static_cast<double>(n);
  const auto& t = d.t();
  const auto& pi = fit.pi_hat;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n, p);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  detail::put_score_block(d, fit, psi, h, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t[i] == 1.0) continue;
    const double r = d.y()[i] - effect.tau;
    psi(i, k) = r / (1.0 - pi[i]);
    h.row(k).head(k) += r * pi[i] / (1.0 - pi[i]) * d.x().row(i) / nd;
    h(k, k) -= 1.0 / (1.0 - pi[i]) / nd;
  }
  auto names = detail::beta_names(d, "beta:");
  names.push_back("mu");
  return detail::finish_sandwich(effect.tau, stacked_sandwich(psi, h), std::move(names));
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapOptions {
  int n_boot = 500;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  CiKind ci_kind = CiKind::Wald;
  double max_failure_fraction = 0.05;
};

namespace detail {

// Linear-interpolation sample quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Nonparametric bootstrap of a full estimation pipeline. `pipeline` maps a
/// resampled Dataset to a point estimate; replicate b draws its rows from
/// RngStream(seed, b). Replicates throwing nawt::Error are dropped and counted.
template <class Pipeline>
VarianceReport bootstrap_se(const Dataset& d, Pipeline&& pipeline, double tau_hat, const BootstrapOptions& opt) {
  if (opt.n_boot < 100) fail(ErrorCode::Validation, "bootstrap_se: n_boot must be at least 100");
  const auto nb = static_cast<std::size_t>(opt.n_boot);
  std::vector<double> draws(nb, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> ok(nb, 0);
  parallel_for(nb, opt.threads, [&](std::size_t b) {
    RngStream rng(opt.seed, b);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(d.n()));
    for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(d.n())));
    try {
      const double v = pipeline(d.subset(rows));
      if (std::isfinite(v)) {
        draws[b] = v;
        ok[b] = 1;
      }
    } catch (const Error&) {
    }
  });

  std::vector<double> kept;
  for (std::size_t b = 0; b < nb; ++b) {
    if (ok[b]) kept.push_back(draws[b]);
  }
  const int n_failed = static_cast<int>(nb - kept.size());
  if (static_cast<double>(n_failed) > opt.max_failure_fraction * static_cast<double>(nb) || kept.size() < 2) {
    std::ostringstream os;
    os << "bootstrap: " << n_failed << " of " << nb << " replicates failed";
    fail(ErrorCode::TooManyFailures, os.str());
  }
  double mean = 0.0;
  for (double v : kept) mean += v;
  mean /= static_cast<double>(kept.size());
  double ss = 0.0;
  for (double v : kept) ss += (v - mean) * (v - mean);

  VarianceReport r;
  r.tau = tau_hat;
  r.se_tau = std::sqrt(ss / static_cast<double>(kept.size() - 1));
  r.method = VarianceMethod::Bootstrap;
  r.ci_kind = opt.ci_kind;
  r.n_boot = opt.n_boot;
  r.n_failed = n_failed;
  if (opt.ci_kind == CiKind::Wald) {
    r.ci95 = {tau_hat - kZ975 * r.se_tau, tau_hat + kZ975 * r.se_tau};
  } else {
    std::sort(kept.begin(), kept.end());
    r.ci95 = {detail::sorted_quantile(kept, 0.025), detail::sorted_quantile(kept, 0.975)};
  }
  return r;
}

// ---------------------------------------------------------------------------
// Estimation recipes

/// A complete estimation pipeline: propensity fit(s) and the effect.
///
/// For AteSeparate, `scheme` is the control-side weighting and its mirror
/// image is used for the treated side. For ATC, `scheme` applies to the
/// relabeled data. A nonempty `adaptive_grid` replaces the exponent of the
/// scheme family by the grid value with the smallest sandwich variance.
/// Nonempty `balance_cols` switch the propensity fit to GMM (ATT-type
/// estimands only).
struct Recipe {
  EstimandKind estimand = EstimandKind::ATT;
  WeightingScheme scheme = WeightingScheme::power(2.0);
  std::vector<double> adaptive_grid;
  Estimator estimator = Estimator::Hajek;
  std::vector<std::string> balance_cols;
  GmmOptions gmm;
  FitOptions fit;
};

struct RecipeResult {
  EffectEstimate effect;
  std::optional<VarianceReport> sandwich;
  std::optional<GmmFit> gmm;
  std::optional<double> chosen_alpha;
};

struct AdaptiveRow {
  double alpha = 0.0;
  bool ok = false;
  double tau = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct AdaptiveResult {
  std::size_t chosen_index = 0;
  double chosen_alpha = 0.0;
  std::vector<AdaptiveRow> rows;
  RecipeResult chosen;
};

/// Scheme of the same family as `base` with exponent alpha.
inline WeightingScheme with_alpha(const WeightingScheme& base, EstimandKind estimand, double alpha) {
  switch (base.kind) {
    case SchemeKind::PowerOneMinusPi: return WeightingScheme::power_rev(alpha);
    case SchemeKind::CombinedPower: return WeightingScheme::combined(alpha);
    case SchemeKind::PowerPi: return WeightingScheme::power(alpha);
    default:
      return estimand == EstimandKind::AteCombined ? WeightingScheme::combined(alpha) : WeightingScheme::power(alpha);
  }
}

namespace detail {

inline RecipeResult run_fixed(const Dataset& d, const Recipe& rc, bool with_sandwich) {
  RecipeResult out;
  const bool use_gmm = !rc.balance_cols.empty();
  if (use_gmm && (rc.estimand == EstimandKind::AteSeparate || rc.estimand == EstimandKind::AteCombined)) {
    fail(ErrorCode::Validation, "balance moments are supported for att, atc and ao only");
  }

  auto fit_one = [&](const Dataset& data, const WeightingScheme& scheme) -> PropensityFit {
    if (!use_gmm) return fit_nawt(data, scheme, rc.fit);
    auto g = fit_gmm(data, scheme, rc.balance_cols, rc.gmm);
    PropensityFit pf;
    pf.beta = g.beta;
    const auto fp = fitted_probabilities(data.x(), g.beta);
    pf.pi_hat = fp.pi;
    pf.n_clamped = fp.n_clamped;
    pf.separation_warning = static_cast<double>(fp.n_clamped) > 0.01 * static_cast<double>(data.n());
    pf.scheme = scheme;
    pf.converged = g.converged;
    pf.iterations = g.iterations;
    pf.score_norm = mean_score(data.x(), data.t(), fp.pi, scheme).lpNorm<Eigen::Infinity>();
    out.gmm = std::move(g);
    return pf;
  };

  switch (rc.estimand) {
    case EstimandKind::ATT: {
      const auto fit = fit_one(d, rc.scheme);
      out.effect = estimate_att(d, fit, rc.estimator);
      if (with_sandwich && !use_gmm && rc.estimator == Estimator::Hajek) out.sandwich = sandwich_att(d, fit, out.effect);
      break;
    }
    case EstimandKind::ATC: {
      const Dataset flipped = d.relabeled();
      const auto fit = fit_one(flipped, rc.scheme);
      out.effect = estimate_atc(d, fit, rc.estimator);
      if (with_sandwich && !use_gmm && rc.estimator == Estimator::Hajek) out.sandwich = sandwich_atc(d, fit, out.effect);
      break;
    }
    case EstimandKind::AO: {
      const auto fit = fit_one(d, rc.scheme);
      out.effect = estimate_ao(d, fit, rc.estimator);
      if (with_sandwich && !use_gmm && rc.estimator == Estimator::Hajek) out.sandwich = sandwich_ao(d, fit, out.effect);
      break;
    }
    case EstimandKind::AteSeparate: {
      const auto fit0 = fit_nawt(d, rc.scheme, rc.fit);
      const auto fit1 = fit_nawt(d, rc.scheme.mirrored(), rc.fit);
      out.effect = estimate_ate(d, fit0, fit1, EstimandKind::AteSeparate, rc.estimator);
      if (with_sandwich && rc.estimator == Estimator::Hajek) {
        out.sandwich = sandwich_ate_separate(d, fit0, fit1, out.effect);
      }
      break;
    }
    case EstimandKind::AteCombined: {
      const auto fit = fit_nawt(d, rc.scheme, rc.fit);
      out.effect = estimate_ate(d, fit, fit, EstimandKind::AteCombined, rc.estimator);
      if (with_sandwich && rc.estimator == Estimator::Hajek) out.sandwich = sandwich_ate_combined(d, fit, out.effect);
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Fits each exponent of the grid and keeps the one with the smallest
/// sandwich variance of tau. Ties go to the smaller exponent, then to the
/// earlier grid position. Exponents whose fit fails are excluded.
inline AdaptiveResult adaptive_select(const Dataset& d, const Recipe& base, const std::vector<double>& grid,
                                      unsigned threads = 1) {
  if (grid.empty()) fail(ErrorCode::Validation, "adaptive_select: alpha grid is empty");
  for (double a : grid) {
    if (!(a >= 0.0) || !std::isfinite(a)) fail(ErrorCode::Validation, "adaptive_select: alpha values must be >= 0");
  }
  if (!base.balance_cols.empty()) fail(ErrorCode::Validation, "adaptive_select: not available with balance moments");
  if (base.estimator != Estimator::Hajek) fail(ErrorCode::Validation, "adaptive_select: requires the Hajek estimator");

  std::vector<std::optional<RecipeResult>> results(grid.size());
  AdaptiveResult out;
  out.rows.resize(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t j) {
    Recipe rc = base;
    rc.adaptive_grid.clear();
    rc.scheme = with_alpha(base.scheme, base.estimand, grid[j]);
    auto& row = out.rows[j];
    row.alpha = grid[j];
    try {
      auto r = detail::run_fixed(d, rc, true);
      row.tau = r.effect.tau;
      row.se = r.sandwich->se_tau;
      row.variance = row.se * row.se;
      row.ok = std::isfinite(row.variance);
      if (row.ok) results[j] = std::move(r);
    } catch (const Error& e) {
      row.error = e.what();
    }
  });

  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!out.rows[j].ok) continue;
    if (!best) {
      best = j;
      continue;
    }
    const auto& a = out.rows[j];
    const auto& b = out.rows[*best];
    if (a.variance < b.variance || (a.variance == b.variance && a.alpha < b.alpha)) best = j;
  }
  if (!best) fail(ErrorCode::NonConvergence, "adaptive_select: every alpha in the grid failed");
  out.chosen_index = *best;
  out.chosen_alpha = grid[*best];
  out.chosen = std::move(*results[*best]);
  out.chosen.chosen_alpha = out.chosen_alpha;
  return out;
}

/// Runs a recipe end to end. The sandwich report is attached when requested
/// and available (Hajek estimator, score-based fits).
inline RecipeResult run_recipe(const Dataset& d, const Recipe& rc, bool with_sandwich = true) {
  if (!rc.adaptive_grid.empty()) return adaptive_select(d, rc, rc.adaptive_grid).chosen;
  return detail::run_fixed(d, rc, with_sandwich);
}

}  // namespace nawt
