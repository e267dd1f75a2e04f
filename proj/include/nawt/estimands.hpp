#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nawt/error.hpp"
#include "nawt/model.hpp"
#include "nawt/solver.hpp"

namespace nawt {

enum class Estimator { Hajek, HorvitzThompson };

inline std::string to_string(Estimator e) { return e == Estimator::Hajek ? "hajek" : "horvitz-thompson"; }

/// Point estimate with its unit weights. For AO, tau holds the mean outcome.
///
/// Horvitz-Thompson divides each weighted arm by a fixed count instead of
/// the weight total: n1 for the ATT control arm, n for both ATE arms and AO.
struct EffectEstimate {
  double tau = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd weights;
  EstimandKind estimand = EstimandKind::ATT;
  std::vector<PropensityFit> fits;  // two for AteSeparate: control side, then treated side
  Estimator estimator = Estimator::Hajek;
  double mu1 = std::numeric_limits<double>::quiet_NaN();
  double mu0 = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void require_outcome_where(const Dataset& d, double indicator, const char* what) {
  const auto& y = d.y();
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    if (d.t()[i] == indicator && !std::isfinite(y[i])) {
      fail(ErrorCode::Validation, std::string(what) + ": missing outcome at unit " + std::to_string(i));
    }
  }
}

inline void require_length(const Dataset& d, const Eigen::VectorXd& pi, const char* what) {
  if (pi.size() != d.n()) fail(ErrorCode::Validation, std::string(what) + ": probability vector has wrong length");
}

// Weighted mean of y over units where mask == 1.
inline double weighted_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& w, const Eigen::VectorXd& mask,
                            Estimator est, double fixed_denominator, const char* what) {
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (mask[i] == 0.0) continue;
    num += w[i] * y[i];
    den += w[i];
  }
  if (est == Estimator::HorvitzThompson) den = fixed_denominator;
  if (!(den > 0.0) || !std::isfinite(den)) fail(ErrorCode::ZeroDenominator, std::string(what) + ": weight total is zero");
  return num / den;
}

}  // namespace detail

/// ATT from fitted probabilities: treated weight 1, control weight pi/(1-pi).
inline EffectEstimate estimate_att(const Dataset& d, const Eigen::VectorXd& pi, Estimator est = Estimator::Hajek) {
  detail::require_length(d, pi, "estimate_att");
  detail::require_outcome_where(d, 1.0, "estimate_att");
  detail::require_outcome_where(d, 0.0, "estimate_att");
  EffectEstimate e;
  e.estimand = EstimandKind::ATT;
  e.estimator = est;
  e.weights.resize(d.n());
  const Eigen::VectorXd control = Eigen::VectorXd::Ones(d.n()) - d.t();
  for (Eigen::Index i = 0; i < d.n(); ++i) e.weights[i] = d.t()[i] == 1.0 ? 1.0 : pi[i] / (1.0 - pi[i]);
  const auto n1 = static_cast<double>(d.n_treated());
  e.mu1 = detail::weighted_mean(d.y(), e.weights, d.t(), Estimator::Hajek, n1, "estimate_att");
  e.mu0 = detail::weighted_mean(d.y(), e.weights, control, est, n1, "estimate_att");
  e.tau = e.mu1 - e.mu0;
  return e;
}

inline EffectEstimate estimate_att(const Dataset& d, const PropensityFit& fit, Estimator est = Estimator::Hajek) {
  auto e = estimate_att(d, fit.pi_hat, est);
  e.fits = {fit};
  return e;
}

/// ATE from a control-side fit (weights 1/(1-pi0)) and a treated-side fit
/// (weights 1/pi1). Pass the same probabilities twice for combined estimation.
inline EffectEstimate estimate_ate(const Dataset& d, const Eigen::VectorXd& pi0, const Eigen::VectorXd& pi1,
                                   EstimandKind kind = EstimandKind::AteSeparate, Estimator est = Estimator::Hajek) {
  if (kind != EstimandKind::AteSeparate && kind != EstimandKind::AteCombined) {
    fail(ErrorCode::Validation, "estimate_ate: estimand must be ate-separate or ate-combined");
  }
  detail::require_length(d, pi0, "estimate_ate");
  detail::require_length(d, pi1, "estimate_ate");
  detail::require_outcome_where(d, 1.0, "estimate_ate");
  detail::require_outcome_where(d, 0.0, "estimate_ate");
  EffectEstimate e;
  e.estimand = kind;
  e.estimator = est;
  e.weights.resize(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) e.weights[i] = d.t()[i] == 1.0 ? 1.0 / pi1[i] : 1.0 / (1.0 - pi0[i]);
  const Eigen::VectorXd control = Eigen::VectorXd::Ones(d.n()) - d.t();
  const auto n = static_cast<double>(d.n());
  e.mu1 = detail::weighted_mean(d.y(), e.weights, d.t(), est, n, "estimate_ate (treated arm)");
  e.mu0 = detail::weighted_mean(d.y(), e.weights, control, est, n, "estimate_ate (control arm)");
  e.tau = e.mu1 - e.mu0;
  return e;
}

inline EffectEstimate estimate_ate(const Dataset& d, const PropensityFit& fit0, const PropensityFit& fit1,
                                   EstimandKind kind = EstimandKind::AteSeparate, Estimator est = Estimator::Hajek) {
  auto e = estimate_ate(d, fit0.pi_hat, fit1.pi_hat, kind, est);
  if (kind == EstimandKind::AteSeparate) {
    e.fits = {fit0, fit1};
  } else {
    e.fits = {fit0};
  }
  return e;
}

/// Mean outcome under missingness: t is the missingness flag, observed units
/// weighted by 1/(1-pi).
inline EffectEstimate estimate_ao(const Dataset& d, const Eigen::VectorXd& pi, Estimator est = Estimator::Hajek) {
  detail::require_length(d, pi, "estimate_ao");
  detail::require_outcome_where(d, 0.0, "estimate_ao");
  EffectEstimate e;
  e.estimand = EstimandKind::AO;
  e.estimator = est;
  e.weights.resize(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) e.weights[i] = d.t()[i] == 1.0 ? 0.0 : 1.0 / (1.0 - pi[i]);
  const Eigen::VectorXd observed = Eigen::VectorXd::Ones(d.n()) - d.t();
  // Missing outcomes are NaN; zero them so 0 * NaN never enters the sums.
  Eigen::VectorXd y = d.y();
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    if (d.t()[i] == 1.0) y[i] = 0.0;
  }
  e.mu0 = detail::weighted_mean(y, e.weights, observed, est, static_cast<double>(d.n()), "estimate_ao");
  e.tau = e.mu0;
  return e;
}

inline EffectEstimate estimate_ao(const Dataset& d, const PropensityFit& fit, Estimator est = Estimator::Hajek) {
  auto e = estimate_ao(d, fit.pi_hat, est);
  e.fits = {fit};
  return e;
}

/// ATC by relabeling: pi_relabeled are probabilities of t = 0 fitted on the
/// relabeled data. Weights come back in original labels: controls 1,
/// treated (1-pi)/pi in terms of Pr(t = 1).
inline EffectEstimate estimate_atc(const Dataset& d, const Eigen::VectorXd& pi_relabeled,
                                   Estimator est = Estimator::Hajek) {
  const Dataset flipped = d.relabeled();
  auto e = estimate_att(flipped, pi_relabeled, est);
  e.estimand = EstimandKind::ATC;
  e.tau = -e.tau;
  std::swap(e.mu0, e.mu1);
  return e;
}

inline EffectEstimate estimate_atc(const Dataset& d, const PropensityFit& fit_on_relabeled,
                                   Estimator est = Estimator::Hajek) {
  auto e = estimate_atc(d, fit_on_relabeled.pi_hat, est);
  e.fits = {fit_on_relabeled};
  return e;
}

struct ImpactBin {
  double lo = 0.0;
  double hi = 0.0;
  Eigen::Index n_control = 0;
  double value = std::numeric_limits<double>::quiet_NaN();  // NaN when the bin holds no control unit
  bool empty() const { return n_control == 0; }
};

/// Binned relative importance of control units by fitted probability:
/// -mean over controls in the bin of (y - mu0)/(1 - pi)^2, mu0 the Hajek
/// control mean of the ATT.
inline std::vector<ImpactBin> relative_impact_profile(const Dataset& d, const Eigen::VectorXd& pi, int n_bins = 10) {
  if (n_bins < 1) fail(ErrorCode::Validation, "relative_impact_profile: n_bins must be positive");
  const auto att = estimate_att(d, pi);
  std::vector<ImpactBin> bins(static_cast<std::size_t>(n_bins));
  std::vector<double> sums(bins.size(), 0.0);
  for (int b = 0; b < n_bins; ++b) {
    bins[static_cast<std::size_t>(b)].lo = static_cast<double>(b) / n_bins;
    bins[static_cast<std::size_t>(b)].hi = static_cast<double>(b + 1) / n_bins;
  }
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    if (d.t()[i] == 1.0) continue;
    const int b = std::min(n_bins - 1, static_cast<int>(pi[i] * n_bins));
    const double r = 1.0 - pi[i];
    sums[static_cast<std::size_t>(b)] += (d.y()[i] - att.mu0) / (r * r);
    ++bins[static_cast<std::size_t>(b)].n_control;
  }
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].n_control > 0) bins[b].value = -sums[b] / static_cast<double>(bins[b].n_control);
  }
  return bins;
}

inline std::vector<ImpactBin> relative_impact_profile(const Dataset& d, const PropensityFit& fit, int n_bins = 10) {
  return relative_impact_profile(d, fit.pi_hat, n_bins);
}

}  // namespace nawt
