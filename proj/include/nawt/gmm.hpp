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
#include "nawt/solver.hpp"

namespace nawt {

enum class WeightMatrixKind { Identity, ContinuouslyUpdating };

inline std::string to_string(WeightMatrixKind k) {
  return k == WeightMatrixKind::Identity ? "identity" : "continuously-updating";
}

struct GmmOptions {
  WeightMatrixKind weight_matrix_kind = WeightMatrixKind::ContinuouslyUpdating;
  bool include_score = true;  // false: balance moments only
  double tol = 1e-12;         // relative objective change at which iteration stops
  int max_iter = 200;
};

struct GmmFit {
  Eigen::VectorXd beta;
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd moment_values;  // score moments first (if used), then balance moments
  WeightMatrixKind weight_matrix_kind = WeightMatrixKind::ContinuouslyUpdating;
  std::vector<std::string> balance_cols;
  WeightingScheme scheme;
  bool include_score = true;
  Eigen::VectorXd pi_hat;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_trace;  // objective after each accepted step, starting point first
};

/// Balance covariates x~ for the moment conditions, taken from named columns.
inline Eigen::MatrixXd balance_matrix(const Dataset& d, const std::vector<std::string>& cols) {
  Eigen::MatrixXd out(d.n(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = d.x().col(d.column_index(cols[j]));
  return out;
}

/// Per-unit stacked moments and their mean Jacobian for the ATT-type
/// score/balance system.
struct MomentSystem {
  const Dataset& data;
  const Eigen::MatrixXd& balance;
  WeightingScheme scheme;
  bool include_score;

  Eigen::Index k() const { return data.k(); }
  Eigen::Index n_moments() const { return (include_score ? data.k() : 0) + balance.cols(); }

  /// n x m matrix of g_i.
  Eigen::MatrixXd unit_moments(const Eigen::VectorXd& pi) const {
    const Eigen::Index n = data.n();
    Eigen::MatrixXd g(n, n_moments());
    const Eigen::Index off = include_score ? k() : 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = data.t()[i];
      if (include_score) g.row(i).head(k()) = (t - pi[i]) * omega(scheme, pi[i]) * data.x().row(i);
      g.row(i).segment(off, balance.cols()) = (t - (1.0 - t) * pi[i] / (1.0 - pi[i])) * balance.row(i);
    }
    return g;
  }

  Eigen::MatrixXd mean_jacobian(const Eigen::VectorXd& pi) const {
    const Eigen::Index n = data.n();
    Eigen::MatrixXd jac(n_moments(), k());
    const Eigen::Index off = include_score ? k() : 0;
    if (include_score) jac.topRows(k()) = detail::mean_jacobian(data.x(), data.t(), pi, scheme);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = -(1.0 - data.t()[i]) * pi[i] / (1.0 - pi[i]);
    jac.bottomRows(balance.cols()) = balance.transpose() * w.asDiagonal() * data.x() / static_cast<double>(n);
    (void)off;
    return jac;
  }

  /// Covariance of g_i with t integrated out given covariates.
  Eigen::MatrixXd conditional_covariance(const Eigen::VectorXd& pi) const {
    const Eigen::Index n = data.n();
    const Eigen::Index m = n_moments();
    const Eigen::Index off = include_score ? k() : 0;
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd a(n), b(n), c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = omega(scheme, pi[i]);
      a[i] = w * w * pi[i] * (1.0 - pi[i]);
      b[i] = w * pi[i];
      c[i] = pi[i] / (1.0 - pi[i]);
    }
    const auto& x = data.x();
    if (include_score) {
      sigma.topLeftCorner(k(), k()) = x.transpose() * a.asDiagonal() * x;
      sigma.block(0, off, k(), balance.cols()) = x.transpose() * b.asDiagonal() * balance;
      sigma.block(off, 0, balance.cols(), k()) = sigma.block(0, off, k(), balance.cols()).transpose();
    }
    sigma.bottomRightCorner(balance.cols(), balance.cols()) = balance.transpose() * c.asDiagonal() * balance;
    return sigma / static_cast<double>(n);
  }
};

namespace detail {

struct GmmState {
  Eigen::VectorXd pi;
  Eigen::VectorXd gbar;
  Eigen::MatrixXd weight;
  double objective = std::numeric_limits<double>::infinity();
  bool ok = false;
  double condition = 0.0;
};

inline GmmState gmm_state(const MomentSystem& sys, const Eigen::VectorXd& beta, WeightMatrixKind kind) {
  GmmState st;
  const Eigen::VectorXd eta = sys.data.x() * beta;
  if (!eta.allFinite()) return st;
  st.pi.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) st.pi[i] = logistic(eta[i]);
  st.gbar = sys.unit_moments(st.pi).colwise().mean().transpose();
  if (!st.gbar.allFinite()) return st;
  const Eigen::Index m = sys.n_moments();
  if (kind == WeightMatrixKind::Identity) {
    st.weight = Eigen::MatrixXd::Identity(m, m);
    st.condition = 1.0;
  } else {
    const Eigen::MatrixXd sigma = sys.conditional_covariance(st.pi);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    const double hi = es.eigenvalues().maxCoeff();
    const double lo = es.eigenvalues().minCoeff();
    st.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(st.condition < 1e14)) return st;
    st.weight = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }
  st.objective = st.gbar.dot(st.weight * st.gbar);
  st.ok = std::isfinite(st.objective);
  return st;
}

struct GmmRun {
  Eigen::VectorXd beta;
  GmmState state;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

inline GmmRun gmm_descend(const MomentSystem& sys, const Eigen::VectorXd& start, const GmmOptions& opt) {
  GmmRun run;
  run.beta = start;
  run.state = gmm_state(sys, start, opt.weight_matrix_kind);
  if (!run.state.ok) return run;
  run.trace.push_back(run.state.objective);
  const Eigen::Index k = sys.k();

  for (run.iterations = 0; run.iterations < opt.max_iter;) {
    ++run.iterations;
    const double q = run.state.objective;
    if (q <= 1e-30) {
      run.converged = true;
      break;
    }
    // Gauss-Newton direction with the weight matrix frozen at the current point.
    const Eigen::MatrixXd g = sys.mean_jacobian(run.state.pi);
    const Eigen::MatrixXd gtw = g.transpose() * run.state.weight;
    Eigen::MatrixXd normal = gtw * g;
    normal += 1e-12 * normal.diagonal().cwiseAbs().maxCoeff() * Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd dir = -normal.ldlt().solve(gtw * run.state.gbar);

    auto line_search = [&](const Eigen::VectorXd& d) -> std::optional<std::pair<Eigen::VectorXd, GmmState>> {
      double step = 1.0;
      for (int h = 0; h < 40; ++h, step *= 0.5) {
        Eigen::VectorXd b = run.beta + step * d;
        auto st = gmm_state(sys, b, opt.weight_matrix_kind);
        if (st.ok && st.objective < q) return std::make_pair(std::move(b), std::move(st));
      }
      return std::nullopt;
    };

    auto next = dir.allFinite() ? line_search(dir) : std::nullopt;
    if (!next) {
      // Fall back to the numerical gradient of the full objective.
      auto obj = [&](const Eigen::VectorXd& b) {
        const auto st = gmm_state(sys, b, opt.weight_matrix_kind);
        return st.ok ? st.objective : std::numeric_limits<double>::infinity();
      };
      const double h = 1e-7 * std::max(1.0, run.beta.norm());
      const Eigen::VectorXd grad = finite_diff_gradient(obj, run.beta, h);
      if (grad.allFinite() && grad.norm() > 0.0) {
        const Eigen::VectorXd d = -grad * (q / grad.squaredNorm());
        next = line_search(d);
      }
    }
    if (!next) {
      run.converged = true;  // no descent direction left at working precision
      break;
    }
    const double q_new = next->second.objective;
    const double step_norm = (next->first - run.beta).lpNorm<Eigen::Infinity>();
    run.beta = std::move(next->first);
    run.state = std::move(next->second);
    run.trace.push_back(q_new);
    if (q - q_new <= opt.tol * (q + 1e-300) || step_norm <= 1e-12 * (1.0 + run.beta.lpNorm<Eigen::Infinity>())) {
      run.converged = true;
      break;
    }
  }
  return run;
}

}  // namespace detail

/// Over-identified (or just-identified) GMM on the weighted score and
/// covariate-balance moments. Starts from beta = 0 and from the MLE and keeps
/// the lower objective.
inline GmmFit fit_gmm(const Dataset& d, const WeightingScheme& scheme, const Eigen::MatrixXd& balance,
                      std::vector<std::string> balance_cols, const GmmOptions& opt = {}) {
  if (balance.rows() != d.n()) fail(ErrorCode::Validation, "fit_gmm: balance matrix has wrong row count");
  if (balance.cols() == 0 && !opt.include_score) fail(ErrorCode::Validation, "fit_gmm: no moment conditions");
  require_full_rank(d);
  const MomentSystem sys{d, balance, scheme, opt.include_score};
  if (sys.n_moments() < d.k()) fail(ErrorCode::Validation, "fit_gmm: fewer moment conditions than parameters");

  std::vector<Eigen::VectorXd> starts{Eigen::VectorXd::Zero(d.k())};
  FitOptions mle_opt;
  mle_opt.throw_on_failure = false;
  mle_opt.check_rank = false;
  const auto mle = fit_nawt(d, WeightingScheme::mle(), mle_opt);
  if (mle.converged) starts.push_back(mle.beta);

  std::optional<detail::GmmRun> best;
  double worst_condition = 0.0;
  for (const auto& s : starts) {
    auto run = detail::gmm_descend(sys, s, opt);
    if (!run.state.ok) {
      worst_condition = std::max(worst_condition, run.state.condition);
      continue;
    }
    if (!best || run.state.objective < best->state.objective) best = std::move(run);
  }
  if (!best) {
    if (opt.weight_matrix_kind == WeightMatrixKind::ContinuouslyUpdating) {
      std::ostringstream os;
      os << "fit_gmm: moment covariance is singular (condition number " << worst_condition << ")";
      fail(ErrorCode::SingularMatrix, os.str());
    }
    fail(ErrorCode::NonConvergence, "fit_gmm: objective could not be evaluated from any start");
  }
  if (!best->converged) {
    std::ostringstream os;
    os << "fit_gmm: no convergence after " << best->iterations << " iterations (objective "
       << best->state.objective << ")";
    fail(ErrorCode::NonConvergence, os.str());
  }

  GmmFit fit;
  fit.beta = best->beta;
  fit.objective = best->state.objective;
  fit.moment_values = best->state.gbar;
  fit.weight_matrix_kind = opt.weight_matrix_kind;
  fit.balance_cols = std::move(balance_cols);
  fit.scheme = scheme;
  fit.include_score = opt.include_score;
  fit.pi_hat = best->state.pi;
  fit.converged = true;
  fit.iterations = best->iterations;
  fit.objective_trace = std::move(best->trace);
  return fit;
}

inline GmmFit fit_gmm(const Dataset& d, const WeightingScheme& scheme, const std::vector<std::string>& balance_cols,
                      const GmmOptions& opt = {}) {
  return fit_gmm(d, scheme, balance_matrix(d, balance_cols), balance_cols, opt);
}

/// Sandwich covariance of beta for the GMM fit:
/// (G'AG)^-1 G'A Sigma A G (G'AG)^-1 / n with Sigma the sample mean of g g'.
inline Eigen::MatrixXd gmm_beta_vcov(const Dataset& d, const GmmFit& fit, const Eigen::MatrixXd& balance) {
  const MomentSystem sys{d, balance, fit.scheme, fit.include_score};
  const auto st = detail::gmm_state(sys, fit.beta, fit.weight_matrix_kind);
  if (!st.ok) fail(ErrorCode::SingularMatrix, "gmm_beta_vcov: weight matrix unavailable at the estimate");
  const Eigen::MatrixXd g = sys.mean_jacobian(st.pi);
  const Eigen::MatrixXd units = sys.unit_moments(st.pi);
  const Eigen::MatrixXd sigma = units.transpose() * units / static_cast<double>(d.n());
  const Eigen::MatrixXd& a = st.weight;
  const Eigen::MatrixXd bread = (g.transpose() * a * g).inverse();
  Eigen::MatrixXd v = bread * g.transpose() * a * sigma * a * g * bread / static_cast<double>(d.n());
  return 0.5 * (v + v.transpose());
}

}  // namespace nawt
