#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nawt/error.hpp"
#include "nawt/model.hpp"
#include "nawt/numerics.hpp"

namespace nawt {

struct PropensityFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd pi_hat;
  double score_norm = std::numeric_limits<double>::infinity();  // inf-norm of the mean score
  int iterations = 0;
  double pseudo_loglik = std::numeric_limits<double>::quiet_NaN();
  WeightingScheme scheme;
  bool converged = false;
  Eigen::Index n_clamped = 0;
  bool separation_warning = false;  // more than 1% of fitted probabilities clamped
};

struct FitOptions {
  double tol = 1e-9;
  int max_iter = 100;
  std::optional<Eigen::VectorXd> init;
  bool restart_from_mle = true;
  bool check_rank = true;
  bool throw_on_failure = true;
};

/// Per-unit score contributions (t_i - pi_i) omega(pi_i) x_i, one row per unit.
inline Eigen::MatrixXd score_contributions(const Dataset& d, const Eigen::VectorXd& pi,
                                           const WeightingScheme& scheme) {
  Eigen::VectorXd r(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) r[i] = (d.t()[i] - pi[i]) * omega(scheme, pi[i]);
  return d.x().array().colwise() * r.array();
}

namespace detail {

inline Eigen::VectorXd mean_score(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const Eigen::VectorXd& pi,
                                  const WeightingScheme& scheme) {
  Eigen::VectorXd r(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) r[i] = (t[i] - pi[i]) * omega(scheme, pi[i]);
  return x.transpose() * r / static_cast<double>(x.rows());
}

// d/d eta of (t - pi) omega(pi) for the logistic link.
inline double score_curvature(double t, double pi, const WeightingScheme& scheme) {
  return pi * (1.0 - pi) * (-omega(scheme, pi) + (t - pi) * omega_derivative(scheme, pi));
}

inline Eigen::MatrixXd mean_jacobian(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, const Eigen::VectorXd& pi,
                                     const WeightingScheme& scheme) {
  Eigen::VectorXd dvec(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) dvec[i] = score_curvature(t[i], pi[i], scheme);
  return x.transpose() * dvec.asDiagonal() * x / static_cast<double>(x.rows());
}

}  // namespace detail

/// Mean weighted score (1/n) sum (t_i - pi_i) omega(pi_i) x_i.
inline Eigen::VectorXd weighted_score(const Eigen::VectorXd& beta, const Dataset& d, const WeightingScheme& scheme) {
  if (beta.size() != d.k()) fail(ErrorCode::Validation, "weighted_score: beta has wrong length");
  const auto fp = fitted_probabilities(d.x(), beta);
  Eigen::VectorXd s = detail::mean_score(d.x(), d.t(), fp.pi, scheme);
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    if (!std::isfinite(s[j])) {
      for (Eigen::Index i = 0; i < d.n(); ++i) {
        const double r = (d.t()[i] - fp.pi[i]) * omega(scheme, fp.pi[i]);
        if (!std::isfinite(r * d.x()(i, j))) {
          fail(ErrorCode::NonFinite, "weighted_score: non-finite contribution from unit " + std::to_string(i));
        }
      }
      fail(ErrorCode::NonFinite, "weighted_score: non-finite sum in coordinate " + std::to_string(j));
    }
  }
  return s;
}

/// Mean score Jacobian d s / d beta^T.
inline Eigen::MatrixXd score_jacobian(const Eigen::VectorXd& beta, const Dataset& d, const WeightingScheme& scheme) {
  const auto fp = fitted_probabilities(d.x(), beta);
  return detail::mean_jacobian(d.x(), d.t(), fp.pi, scheme);
}

/// Per-unit pseudo-log-likelihood whose eta-derivative is (t - pi) omega(pi).
inline double unit_pseudo_loglik(double t, double eta, const WeightingScheme& scheme) {
  const double pi = logistic(eta);
  const double a = scheme.alpha;
  const bool treated = t == 1.0;
  switch (scheme.kind) {
    case SchemeKind::MleUnit:
      return treated ? std::log(pi) : std::log1p(-pi);
    case SchemeKind::PowerPi:
      return treated ? treated_loglik_term(pi, a) : control_loglik_term(pi, a);
    case SchemeKind::PowerOneMinusPi:
      return treated ? control_loglik_term(1.0 - pi, a) : treated_loglik_term(1.0 - pi, a);
    case SchemeKind::CombinedPower:
      return treated ? treated_loglik_term(pi, a) + control_loglik_term(1.0 - pi, a)
                     : control_loglik_term(pi, a) + treated_loglik_term(1.0 - pi, a);
    case SchemeKind::CbpsAtt:
      return treated ? eta : -std::exp(eta);
    case SchemeKind::CbpsAte:
      return treated ? eta - std::exp(-eta) : -eta - std::exp(eta);
  }
  return 0.0;
}

/// Pseudo-log-likelihood (a sum, not a mean) for the given weighting scheme.
/// For pi^alpha with alpha > 0 the control part is the hypergeometric term;
/// alpha = 0 is the binomial log-likelihood.
inline double pseudo_loglik(const Eigen::VectorXd& beta, const Dataset& d, const WeightingScheme& scheme) {
  const Eigen::VectorXd eta = d.x() * beta;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < d.n(); ++i) sum += unit_pseudo_loglik(d.t()[i], eta[i], scheme);
  return sum;
}

/// Column indices that are linearly dependent on earlier-pivoted columns,
/// by QR with column pivoting and threshold 1e-10 * largest |R_jj|.
inline std::vector<Eigen::Index> dependent_columns(const Eigen::MatrixXd& x) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::MatrixXd r = qr.matrixR().template triangularView<Eigen::Upper>();
  const Eigen::Index m = std::min(x.rows(), x.cols());
  const double largest = m > 0 ? std::abs(r(0, 0)) : 0.0;
  std::vector<Eigen::Index> dropped;
  const auto perm = qr.colsPermutation().indices();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const bool small = j >= m || std::abs(r(j, j)) <= 1e-10 * largest;
    if (small) dropped.push_back(perm[j]);
  }
  std::sort(dropped.begin(), dropped.end());
  return dropped;
}

inline void require_full_rank(const Dataset& d) {
  const auto dropped = dependent_columns(d.x());
  if (!dropped.empty()) {
    std::ostringstream os;
    os << "design matrix is rank deficient; dependent columns:";
    for (const auto j : dropped) os << ' ' << j << " ('" << d.names()[static_cast<std::size_t>(j)] << "')";
    fail(ErrorCode::RankDeficientDesign, os.str());
  }
}

namespace detail {

struct NewtonOutcome {
  Eigen::VectorXd beta;  // original coordinates
  double score_norm;
  int iterations;
  bool converged;
};

// Newton iterations on the mean score in column-scaled coordinates; the
// stopping rule is applied to the score in original coordinates. The score is
// the gradient of the mean pseudo-log-likelihood, so steps are safeguarded by
// requiring that likelihood to rise; this keeps the iterates away from the
// region where every fitted probability collapses and the weighted score
// vanishes spuriously. At the floating-point floor of the likelihood a step
// is accepted when it shrinks the score instead.
inline NewtonOutcome newton_on_score(const Dataset& d, const WeightingScheme& scheme, const Eigen::VectorXd& start,
                                     const FitOptions& opt) {
  const Eigen::Index k = d.k();
  const auto nd = static_cast<double>(d.n());
  Eigen::VectorXd scale(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double rms = std::sqrt(d.x().col(j).squaredNorm() / nd);
    scale[j] = rms > 0.0 ? rms : 1.0;
  }
  const Eigen::MatrixXd xs = d.x() * scale.cwiseInverse().asDiagonal();
  const Eigen::VectorXd& t = d.t();

  struct Point {
    Eigen::VectorXd b, pi, s;
    double loglik = 0.0;
  };
  auto eval = [&](const Eigen::VectorXd& bb, Point& p) {
    const Eigen::VectorXd eta = xs * bb;
    p.b = bb;
    p.pi.resize(eta.size());
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      if (!std::isfinite(eta[i])) return false;
      p.pi[i] = logistic(eta[i]);
      ll += unit_pseudo_loglik(t[i], eta[i], scheme);
    }
    p.loglik = ll / nd;
    p.s = mean_score(xs, t, p.pi, scheme);
    return p.s.allFinite() && std::isfinite(p.loglik);
  };
  auto orig_norm = [&](const Eigen::VectorXd& ss) { return ss.cwiseProduct(scale).lpNorm<Eigen::Infinity>(); };

  Point cur;
  if (!eval(start.cwiseProduct(scale), cur)) return {start, std::numeric_limits<double>::infinity(), 0, false};

  int iter = 0;
  while (true) {
    const double norm_now = orig_norm(cur.s);
    if (norm_now <= opt.tol) {
      // One more full Newton step: at quadratic convergence it takes beta from
      // score-tolerance accuracy to working precision.
      Point polished;
      const Eigen::VectorXd dir = (-mean_jacobian(xs, t, cur.pi, scheme)).partialPivLu().solve(cur.s);
      if (dir.allFinite() && eval(cur.b + dir, polished) && orig_norm(polished.s) < norm_now) cur = std::move(polished);
      return {cur.b.cwiseQuotient(scale), orig_norm(cur.s), iter, true};
    }
    if (iter >= opt.max_iter) return {cur.b.cwiseQuotient(scale), norm_now, iter, false};
    ++iter;

    // Ascent direction for the pseudo-log-likelihood: Newton when -J is
    // positive definite, otherwise -J shifted until it is.
    const Eigen::MatrixXd neg_jac = -mean_jacobian(xs, t, cur.pi, scheme);
    Eigen::VectorXd dir;
    Eigen::LLT<Eigen::MatrixXd> llt(neg_jac);
    if (llt.info() == Eigen::Success) {
      dir = llt.solve(cur.s);
    } else {
      const Eigen::MatrixXd sym = 0.5 * (neg_jac + neg_jac.transpose());
      const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym, Eigen::EigenvaluesOnly).eigenvalues()[0];
      const double shift = -lo + 1e-3 * std::max(1e-8, sym.diagonal().cwiseAbs().maxCoeff());
      dir = (sym + shift * Eigen::MatrixXd::Identity(k, k)).llt().solve(cur.s);
    }
    if (!dir.allFinite()) return {cur.b.cwiseQuotient(scale), norm_now, iter, false};

    const double slope = cur.s.dot(dir);
    const double floor = 1e-13 * (1.0 + std::abs(cur.loglik));
    double step = 1.0;
    bool accepted = false;
    Point next;
    for (int h = 0; h < 50; ++h, step *= 0.5) {
      if (!eval(cur.b + step * dir, next)) continue;
      const double gain = next.loglik - cur.loglik;
      if (gain >= 1e-4 * step * slope && gain > 0.0) {
        accepted = true;
        break;
      }
      if (std::abs(gain) <= floor && next.s.squaredNorm() < cur.s.squaredNorm()) {
        accepted = true;
        break;
      }
    }
    if (!accepted) return {cur.b.cwiseQuotient(scale), norm_now, iter, false};
    cur = std::move(next);
  }
}

}  // namespace detail

/// Solves the weighted score equation for the logistic propensity model.
inline PropensityFit fit_nawt(const Dataset& d, const WeightingScheme& scheme, const FitOptions& opt = {}) {
  if (opt.check_rank) require_full_rank(d);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d.k());
  const Eigen::VectorXd start = opt.init ? *opt.init : zero;
  if (start.size() != d.k()) fail(ErrorCode::Validation, "fit_nawt: initial beta has wrong length");

  auto best = detail::newton_on_score(d, scheme, start, opt);
  int total_iter = best.iterations;
  if (!best.converged && opt.restart_from_mle && scheme.kind != SchemeKind::MleUnit) {
    FitOptions mle_opt = opt;
    mle_opt.check_rank = false;
    mle_opt.restart_from_mle = false;
    mle_opt.init.reset();
    mle_opt.throw_on_failure = false;
    const auto mle = detail::newton_on_score(d, WeightingScheme::mle(), zero, mle_opt);
    if (mle.converged) {
      auto again = detail::newton_on_score(d, scheme, mle.beta, opt);
      total_iter += mle.iterations + again.iterations;
      if (again.converged || again.score_norm < best.score_norm) best = again;
    }
  }

  PropensityFit fit;
  fit.beta = best.beta;
  fit.scheme = scheme;
  fit.iterations = total_iter;
  const auto fp = fitted_probabilities(d.x(), fit.beta);
  fit.pi_hat = fp.pi;
  fit.n_clamped = fp.n_clamped;
  fit.separation_warning = static_cast<double>(fp.n_clamped) > 0.01 * static_cast<double>(d.n());
  fit.score_norm = detail::mean_score(d.x(), d.t(), fp.pi, scheme).lpNorm<Eigen::Infinity>();
  // Under separation the score vanishes only because the fitted
  // probabilities hit the clamp while beta runs off; that is not a root.
  fit.converged = best.converged && fit.score_norm <= opt.tol && !fit.separation_warning;
  try {
    fit.pseudo_loglik = pseudo_loglik(fit.beta, d, scheme);
  } catch (const Error&) {
    fit.pseudo_loglik = std::numeric_limits<double>::quiet_NaN();
  }
  if (!fit.converged && opt.throw_on_failure) {
    std::ostringstream os;
    os << "fit_nawt(" << scheme.name() << ") did not converge: score norm " << fit.score_norm << " after "
       << fit.iterations << " iterations";
    if (fit.separation_warning) os << " (" << fit.n_clamped << " fitted probabilities clamped: separation)";
    fail(ErrorCode::NonConvergence, os.str());
  }
  return fit;
}

}  // namespace nawt
