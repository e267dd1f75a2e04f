#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "nawt/estimands.hpp"
#include "nawt/inference.hpp"
#include "nawt/simulation.hpp"

using namespace nawt;

namespace {

Dataset small(std::initializer_list<double> t, std::initializer_list<double> y) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::VectorXd tv(n), yv(n);
  std::copy(t.begin(), t.end(), tv.data());
  std::copy(y.begin(), y.end(), yv.data());
  return Dataset(Eigen::MatrixXd::Ones(n, 1), tv, yv, {kInterceptName});
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

Dataset scenario_a(std::uint64_t seed, Eigen::Index n) {
  RngStream rng(seed, 0);
  return generate_main('a', n, rng).data;
}

// Sandwich from per-unit estimating functions psi(theta) with a
// finite-difference Jacobian; shares nothing with the library's analytic
// derivatives.
using PsiFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

double oracle_se_last(const PsiFn& psi, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd p0 = psi(theta);
  const auto n = static_cast<double>(p0.rows());
  const Eigen::Index k = theta.size();
  Eigen::MatrixXd h(k, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta[c]));
    Eigen::VectorXd up = theta, down = theta;
    up[c] += step;
    down[c] -= step;
    h.col(c) = (psi(up).colwise().mean() - psi(down).colwise().mean()).transpose() / (2.0 * step);
  }
  const Eigen::MatrixXd hinv = h.inverse();
  const Eigen::MatrixXd v = hinv * (p0.transpose() * p0 / n) * hinv.transpose() / n;
  return std::sqrt(v(k - 1, k - 1));
}

Eigen::VectorXd probs(const Dataset& d, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = d.x() * beta;
  return eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
}

double sample_var(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Point estimates

TEST(Att, HandFixture) {
  const auto d = small({1, 1, 0, 0}, {3, 5, 1, 2});
  const auto e = estimate_att(d, vec({0.8, 0.6, 0.5, 0.25}));
  EXPECT_NEAR(e.tau, 2.75, 1e-15);
  EXPECT_DOUBLE_EQ(e.mu1, 4.0);
  EXPECT_NEAR(e.mu0, 1.25, 1e-15);
  const auto ht = estimate_att(d, vec({0.8, 0.6, 0.5, 0.25}), Estimator::HorvitzThompson);
  EXPECT_NEAR(ht.tau, 4.0 - (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(Att, ConstantPropensityGivesDifferenceInMeans) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index n = 30;
    Eigen::VectorXd t(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      t[i] = i % 3 == 0 ? 1.0 : 0.0;
      y[i] = nd(gen);
    }
    const Dataset d(Eigen::MatrixXd::Ones(n, 1), t, y, {"c"});
    double s1 = 0, s0 = 0;
    for (Eigen::Index i = 0; i < n; ++i) (t[i] == 1.0 ? s1 : s0) += y[i];
    const double want = s1 / 10.0 - s0 / 20.0;
    EXPECT_NEAR(estimate_att(d, Eigen::VectorXd::Constant(n, u(gen))).tau, want, 1e-12);
    EXPECT_NEAR(estimate_atc(d, Eigen::VectorXd::Constant(n, u(gen))).tau, want, 1e-12);
    EXPECT_NEAR(estimate_ate(d, Eigen::VectorXd::Constant(n, 0.5), Eigen::VectorXd::Constant(n, 0.5)).tau, want, 1e-12);
  }
}

TEST(Att, ConstantControlOutcomeIgnoresPropensity) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  const auto d = small({1, 1, 1, 0, 0, 0}, {2, 4, 9, 7, 7, 7});
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd pi(6);
    for (auto& p : pi) p = u(gen);
    EXPECT_NEAR(estimate_att(d, pi).tau, 5.0 - 7.0, 1e-12);
  }
}

TEST(Ao, HandFixture) {
  Eigen::VectorXd y = vec({0, 2, 4});
  y[0] = std::nan("");
  const Dataset d(Eigen::MatrixXd::Ones(3, 1), vec({1, 0, 0}), y, {"c"});
  const auto e = estimate_ao(d, vec({0.5, 0.5, 0.25}));
  EXPECT_NEAR(e.tau, 2.8, 1e-14);
  const auto constant = estimate_ao(d, Eigen::VectorXd::Constant(3, 0.3));
  EXPECT_NEAR(constant.tau, 3.0, 1e-14);
}

TEST(Ate, HorvitzThompsonDividesByN) {
  const auto d = small({1, 1, 0, 0}, {3, 5, 1, 2});
  const auto e = estimate_ate(d, vec({0.5, 0.5, 0.5, 0.5}), vec({0.5, 0.5, 0.5, 0.5}), EstimandKind::AteSeparate,
                              Estimator::HorvitzThompson);
  EXPECT_NEAR(e.mu1, (6.0 + 10.0) / 4.0, 1e-15);
  EXPECT_NEAR(e.mu0, (2.0 + 4.0) / 4.0, 1e-15);
  EXPECT_THROW(estimate_ate(d, vec({0.5, 0.5, 0.5, 0.5}), vec({0.5, 0.5, 0.5, 0.5}), EstimandKind::ATT), Error);
}

TEST(Atc, RelabelingIdentity) {
  const auto d = small({1, 1, 0, 0}, {3, 5, 1, 2});
  const Eigen::VectorXd pi_rel = vec({0.3, 0.45, 0.6, 0.8});
  const auto atc = estimate_atc(d, pi_rel);
  EXPECT_NEAR(atc.tau, -estimate_att(d.relabeled(), pi_rel).tau, 1e-15);
  EXPECT_EQ(atc.weights[2], 1.0);
  EXPECT_NEAR(atc.weights[0], 0.3 / 0.7, 1e-15);
}

TEST(Atc, SymmetricDataMatchesAtt) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  const Eigen::Index half = 40;
  Eigen::MatrixXd x(2 * half, 2);
  Eigen::VectorXd t(2 * half), y(2 * half);
  for (Eigen::Index i = 0; i < half; ++i) {
    const double v = nd(gen);
    x.row(i) << 1.0, v;
    x.row(half + i) << 1.0, v;
    t[i] = 1.0;
    t[half + i] = 0.0;
    y[i] = 2.0 + v + nd(gen);
    y[half + i] = v + nd(gen);
  }
  const Dataset d(x, t, y, {kInterceptName, "v"});
  Recipe att, atc;
  att.scheme = atc.scheme = WeightingScheme::mle();
  atc.estimand = EstimandKind::ATC;
  EXPECT_NEAR(run_recipe(d, att).effect.tau, run_recipe(d, atc).effect.tau, 1e-9);
}

TEST(Estimands, MissingOutcomeRejected) {
  Eigen::VectorXd y = vec({1, 2, 3, 4});
  y[2] = std::nan("");
  const Dataset d(Eigen::MatrixXd::Ones(4, 1), vec({1, 1, 0, 0}), y, {"c"});
  EXPECT_THROW(estimate_att(d, Eigen::VectorXd::Constant(4, 0.5)), Error);
  EXPECT_THROW(estimate_att(d, Eigen::VectorXd::Constant(3, 0.5)), Error);
}

// ---------------------------------------------------------------------------
// Relative impact profile

TEST(Impact, TwoControlsCancel) {
  const auto d = small({1, 0, 0}, {5, 0, 2});
  const auto bins = relative_impact_profile(d, vec({0.7, 0.5, 0.5}));
  ASSERT_EQ(bins.size(), 10u);
  EXPECT_EQ(bins[5].n_control, 2);
  EXPECT_NEAR(bins[5].value, 0.0, 1e-15);
  EXPECT_TRUE(bins[0].empty());
  EXPECT_TRUE(std::isnan(bins[0].value));
}

TEST(Impact, ConstantControlOutcomeIsFlat) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  const Eigen::Index n = 200;
  Eigen::VectorXd t(n), y(n), pi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t[i] = i % 2 == 0 ? 1.0 : 0.0;
    y[i] = t[i] == 1.0 ? u(gen) : 3.5;
    pi[i] = u(gen);
  }
  const Dataset d(Eigen::MatrixXd::Ones(n, 1), t, y, {"c"});
  for (const auto& b : relative_impact_profile(d, pi, 8)) {
    if (!b.empty()) EXPECT_NEAR(b.value, 0.0, 1e-10);
  }
}

TEST(Impact, GrowsTowardHighPropensityInScenarioA) {
  const auto d = scenario_a(12, 5000);
  const auto fit = fit_nawt(d, WeightingScheme::mle());
  const auto bins = relative_impact_profile(d, fit);
  auto mean_abs = [&](int lo, int hi) {
    double s = 0.0;
    int c = 0;
    for (int b = lo; b <= hi; ++b) {
      if (!bins[static_cast<std::size_t>(b)].empty()) {
        s += std::abs(bins[static_cast<std::size_t>(b)].value);
        ++c;
      }
    }
    return s / c;
  };
  EXPECT_GT(mean_abs(7, 9), 3.0 * mean_abs(0, 2));
}

// ---------------------------------------------------------------------------
// Sandwich variance

TEST(Sandwich, AttMatchesNumericJacobianOracle) {
  const auto d = scenario_a(13, 800);
  for (const auto& s : {WeightingScheme::power(2.0), WeightingScheme::mle(), WeightingScheme::cbps_att()}) {
    const auto fit = fit_nawt(d, s);
    const auto e = estimate_att(d, fit);
    const auto rep = sandwich_att(d, fit, e);
    const Eigen::Index k = d.k();
    Eigen::VectorXd theta(k + 3);
    theta << fit.beta, e.mu0, e.mu1, e.tau;
    const PsiFn psi = [&](const Eigen::VectorXd& th) {
      const Eigen::VectorXd pi = probs(d, th.head(k));
      Eigen::MatrixXd out(d.n(), k + 3);
      for (Eigen::Index i = 0; i < d.n(); ++i) {
        const double t = d.t()[i], y = d.y()[i];
        out.row(i).head(k) = (t - pi[i]) * omega(s, pi[i]) * d.x().row(i);
        out(i, k) = (1.0 - t) * pi[i] / (1.0 - pi[i]) * (y - th[k]);
        out(i, k + 1) = t * (y - th[k + 1]);
        out(i, k + 2) = th[k + 1] - th[k] - th[k + 2];
      }
      return out;
    };
    EXPECT_NEAR(rep.se_tau, oracle_se_last(psi, theta), 1e-5 * rep.se_tau) << s.name();
    EXPECT_EQ(rep.param_names.back(), "tau");
    EXPECT_NEAR(rep.ci95.second - rep.ci95.first, 2.0 * kZ975 * rep.se_tau, 1e-12);
  }
}

TEST(Sandwich, AteSeparateMatchesNumericJacobianOracle) {
  const auto d = scenario_a(14, 800);
  const auto s0 = WeightingScheme::power(2.0), s1 = s0.mirrored();
  const auto f0 = fit_nawt(d, s0), f1 = fit_nawt(d, s1);
  const auto e = estimate_ate(d, f0, f1);
  const auto rep = sandwich_ate_separate(d, f0, f1, e);
  const Eigen::Index k = d.k();
  Eigen::VectorXd theta(2 * k + 3);
  theta << f0.beta, e.mu0, f1.beta, e.mu1, e.tau;
  const PsiFn psi = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd p0 = probs(d, th.head(k));
    const Eigen::VectorXd p1 = probs(d, th.segment(k + 1, k));
    Eigen::MatrixXd out(d.n(), 2 * k + 3);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      const double t = d.t()[i], y = d.y()[i];
      out.row(i).head(k) = (t - p0[i]) * omega(s0, p0[i]) * d.x().row(i);
      out(i, k) = (1.0 - t) / (1.0 - p0[i]) * (y - th[k]);
      out.row(i).segment(k + 1, k) = (t - p1[i]) * omega(s1, p1[i]) * d.x().row(i);
      out(i, 2 * k + 1) = t / p1[i] * (y - th[2 * k + 1]);
      out(i, 2 * k + 2) = th[2 * k + 1] - th[k] - th[2 * k + 2];
    }
    return out;
  };
  EXPECT_NEAR(rep.se_tau, oracle_se_last(psi, theta), 1e-5 * rep.se_tau);
}

TEST(Sandwich, AteCombinedAndAtcAndAoMatchOracles) {
  const auto d = scenario_a(15, 600);
  const Eigen::Index k = d.k();
  {
    const auto s = WeightingScheme::combined(2.0);
    const auto f = fit_nawt(d, s);
    const auto e = estimate_ate(d, f, f, EstimandKind::AteCombined);
    const auto rep = sandwich_ate_combined(d, f, e);
    Eigen::VectorXd theta(k + 3);
    theta << f.beta, e.mu0, e.mu1, e.tau;
    const PsiFn psi = [&](const Eigen::VectorXd& th) {
      const Eigen::VectorXd p = probs(d, th.head(k));
      Eigen::MatrixXd out(d.n(), k + 3);
      for (Eigen::Index i = 0; i < d.n(); ++i) {
        const double t = d.t()[i], y = d.y()[i];
        out.row(i).head(k) = (t - p[i]) * omega(s, p[i]) * d.x().row(i);
        out(i, k) = (1.0 - t) / (1.0 - p[i]) * (y - th[k]);
        out(i, k + 1) = t / p[i] * (y - th[k + 1]);
        out(i, k + 2) = th[k + 1] - th[k] - th[k + 2];
      }
      return out;
    };
    EXPECT_NEAR(rep.se_tau, oracle_se_last(psi, theta), 1e-5 * rep.se_tau);
  }
  {
    const auto s = WeightingScheme::power(2.0);
    const auto flipped = d.relabeled();
    const auto f = fit_nawt(flipped, s);
    const auto e = estimate_atc(d, f);
    const auto rep = sandwich_atc(d, f, e);
    const auto att_flipped = sandwich_att(flipped, f, estimate_att(flipped, f));
    EXPECT_NEAR(rep.se_tau, att_flipped.se_tau, 1e-12 * rep.se_tau);
    EXPECT_NEAR(rep.tau, -att_flipped.tau, 1e-12);
  }
  {
    // Treat the treated units as having a missing outcome.
    Eigen::VectorXd y = d.y();
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      if (d.t()[i] == 1.0) y[i] = std::nan("");
    }
    const Dataset m(d.x(), d.t(), y, d.names());
    const auto s = WeightingScheme::power_rev(1.0);
    const auto f = fit_nawt(m, s);
    const auto e = estimate_ao(m, f);
    const auto rep = sandwich_ao(m, f, e);
    Eigen::VectorXd theta(k + 1);
    theta << f.beta, e.tau;
    const PsiFn psi = [&](const Eigen::VectorXd& th) {
      const Eigen::VectorXd p = probs(m, th.head(k));
      Eigen::MatrixXd out(m.n(), k + 1);
      for (Eigen::Index i = 0; i < m.n(); ++i) {
        const double t = m.t()[i];
        out.row(i).head(k) = (t - p[i]) * omega(s, p[i]) * m.x().row(i);
        out(i, k) = t == 1.0 ? 0.0 : (y[i] - th[k]) / (1.0 - p[i]);
      }
      return out;
    };
    EXPECT_NEAR(rep.se_tau, oracle_se_last(psi, theta), 1e-5 * rep.se_tau);
  }
}

TEST(Sandwich, HalfPropensityGivesTwoSampleStandardError) {
  RngStream rng(16, 0);
  const Eigen::Index n = 10000;
  Eigen::VectorXd t(n), y(n);
  std::vector<double> y1, y0;
  for (Eigen::Index i = 0; i < n; ++i) {
    t[i] = i % 2 == 0 ? 1.0 : 0.0;
    y[i] = (t[i] == 1.0 ? 3.0 : 1.0) + (t[i] == 1.0 ? 2.0 : 1.0) * rng.normal();
    (t[i] == 1.0 ? y1 : y0).push_back(y[i]);
  }
  const Dataset d(Eigen::MatrixXd::Ones(n, 1), t, y, {kInterceptName});
  const auto fit = fit_nawt(d, WeightingScheme::mle());
  EXPECT_NEAR(fit.pi_hat[0], 0.5, 1e-12);
  const auto rep = sandwich_att(d, fit, estimate_att(d, fit));
  const double classical = std::sqrt(sample_var(y1) / 5000.0 + sample_var(y0) / 5000.0);
  EXPECT_NEAR(rep.se_tau, classical, 0.1 * classical);
}

TEST(Sandwich, IndependentArmsAteSeparate) {
  RngStream rng(17, 0);
  const Eigen::Index n = 10000;
  Eigen::VectorXd t(n), y(n);
  std::vector<double> y1, y0;
  for (Eigen::Index i = 0; i < n; ++i) {
    t[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    y[i] = t[i] == 1.0 ? 5.0 + 3.0 * rng.normal() : rng.normal();
    (t[i] == 1.0 ? y1 : y0).push_back(y[i]);
  }
  const Dataset d(Eigen::MatrixXd::Ones(n, 1), t, y, {kInterceptName});
  Recipe rc;
  rc.estimand = EstimandKind::AteSeparate;
  rc.scheme = WeightingScheme::power(1.0);
  const auto res = run_recipe(d, rc);
  const double want = std::sqrt(sample_var(y1) / static_cast<double>(y1.size()) +
                                sample_var(y0) / static_cast<double>(y0.size()));
  EXPECT_NEAR(res.sandwich->se_tau, want, 0.1 * want);
}

TEST(Sandwich, ConstantTreatedArm) {
  RngStream rng(18, 0);
  const Eigen::Index n = 4000;
  Eigen::VectorXd t(n), y(n);
  std::vector<double> y0;
  for (Eigen::Index i = 0; i < n; ++i) {
    t[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    y[i] = t[i] == 1.0 ? 7.0 : rng.normal();
    if (t[i] == 0.0) y0.push_back(y[i]);
  }
  const Dataset d(Eigen::MatrixXd::Ones(n, 1), t, y, {kInterceptName});
  const auto f0 = fit_nawt(d, WeightingScheme::mle()), f1 = f0;
  const auto e = estimate_ate(d, f0, f1);
  const auto rep = sandwich_ate_separate(d, f0, f1, e);
  const auto idx = static_cast<Eigen::Index>(
      std::find(rep.param_names.begin(), rep.param_names.end(), "mu1") - rep.param_names.begin());
  EXPECT_LT(rep.vcov(idx, idx), 1e-20);
  const double mu0_se = std::sqrt(sample_var(y0) / static_cast<double>(y0.size()));
  EXPECT_NEAR(rep.se_tau, mu0_se, 0.05 * mu0_se);
}

TEST(Sandwich, SingularHessianRejected) {
  const Eigen::MatrixXd psi = Eigen::MatrixXd::Ones(5, 2);
  Eigen::MatrixXd h(2, 2);
  h << 1, 1, 1, 1;
  try {
    stacked_sandwich(psi, h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularMatrix);
  }
}

TEST(Sandwich, RequiresHajek) {
  const auto d = scenario_a(19, 300);
  const auto fit = fit_nawt(d, WeightingScheme::mle());
  const auto e = estimate_att(d, fit, Estimator::HorvitzThompson);
  EXPECT_THROW(sandwich_att(d, fit, e), Error);
}

// ---------------------------------------------------------------------------
// Bootstrap

TEST(Bootstrap, ConstantPipelineHasZeroSe) {
  const auto d = scenario_a(20, 100);
  BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 1;
  const auto r = bootstrap_se(d, [](const Dataset&) { return 3.0; }, 3.0, opt);
  EXPECT_EQ(r.se_tau, 0.0);
  EXPECT_EQ(r.n_failed, 0);
}

TEST(Bootstrap, DeterministicAcrossRunsAndThreads) {
  const auto d = scenario_a(21, 300);
  Recipe rc;
  auto pipeline = [&](const Dataset& dd) { return run_recipe(dd, rc, false).effect.tau; };
  BootstrapOptions opt;
  opt.n_boot = 120;
  opt.seed = 99;
  const auto a = bootstrap_se(d, pipeline, 0.0, opt);
  const auto b = bootstrap_se(d, pipeline, 0.0, opt);
  opt.threads = 4;
  const auto c = bootstrap_se(d, pipeline, 0.0, opt);
  EXPECT_EQ(a.se_tau, b.se_tau);
  EXPECT_EQ(a.se_tau, c.se_tau);
  opt.seed = 100;
  EXPECT_NE(bootstrap_se(d, pipeline, 0.0, opt).se_tau, a.se_tau);
}

TEST(Bootstrap, PercentileIntervalAndValidation) {
  const auto d = scenario_a(22, 200);
  BootstrapOptions opt;
  opt.n_boot = 200;
  opt.seed = 5;
  opt.ci_kind = CiKind::Percentile;
  const auto r = bootstrap_se(d, [](const Dataset& dd) { return dd.y().mean(); }, d.y().mean(), opt);
  EXPECT_LT(r.ci95.first, d.y().mean());
  EXPECT_GT(r.ci95.second, d.y().mean());
  opt.n_boot = 50;
  EXPECT_THROW(bootstrap_se(d, [](const Dataset&) { return 0.0; }, 0.0, opt), Error);
}

TEST(Bootstrap, TooManyFailures) {
  const auto d = scenario_a(23, 100);
  BootstrapOptions opt;
  opt.n_boot = 100;
  opt.seed = 3;
  int calls = 0;
  auto flaky = [&](const Dataset&) -> double {
    if (++calls % 10 == 0) fail(ErrorCode::NonConvergence, "flaky");
    return 1.0;
  };
  try {
    bootstrap_se(d, flaky, 1.0, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyFailures);
  }
}

TEST(Bootstrap, AgreesWithSandwich) {
  const auto d = scenario_a(24, 2000);
  Recipe rc;
  const auto res = run_recipe(d, rc);
  BootstrapOptions opt;
  opt.n_boot = 300;
  opt.seed = 7;
  const auto boot = bootstrap_se(d, [&](const Dataset& dd) { return run_recipe(dd, rc, false).effect.tau; },
                                 res.effect.tau, opt);
  EXPECT_NEAR(boot.se_tau / res.sandwich->se_tau, 1.0, 0.15);
}

// ---------------------------------------------------------------------------
// Adaptive selection

TEST(Adaptive, SingletonGrid) {
  const auto d = scenario_a(25, 500);
  Recipe rc;
  const auto r = adaptive_select(d, rc, {0.0});
  EXPECT_EQ(r.chosen_alpha, 0.0);
  const auto ipw = run_recipe(d, [] {
    Recipe m;
    m.scheme = WeightingScheme::mle();
    return m;
  }());
  EXPECT_NEAR(r.chosen.effect.tau, ipw.effect.tau, 1e-9);
}

TEST(Adaptive, PicksMinimumVarianceWithTieRule) {
  const auto d = scenario_a(26, 500);
  Recipe rc;
  const auto r = adaptive_select(d, rc, {3.0, 1.0, 2.0, 1.0}, 2);
  std::size_t best = 0;
  for (std::size_t j = 1; j < r.rows.size(); ++j) {
    if (r.rows[j].variance < r.rows[best].variance) best = j;
  }
  EXPECT_EQ(r.chosen_alpha, r.rows[best].alpha);
  EXPECT_EQ(r.rows[1].variance, r.rows[3].variance);
  if (r.chosen_alpha == 1.0) EXPECT_EQ(r.chosen_index, 1u);
  EXPECT_EQ(r.chosen.chosen_alpha.value(), r.chosen_alpha);
}

TEST(Adaptive, ValidatesGrid) {
  const auto d = scenario_a(27, 200);
  Recipe rc;
  EXPECT_THROW(adaptive_select(d, rc, {}), Error);
  EXPECT_THROW(adaptive_select(d, rc, {-1.0}), Error);
}

// ---------------------------------------------------------------------------
// Recipes

TEST(Recipe, GmmBalanceRoute) {
  const auto d = scenario_a(28, 600);
  Recipe rc;
  rc.balance_cols = {"x1", "x2"};
  const auto r = run_recipe(d, rc);
  ASSERT_TRUE(r.gmm.has_value());
  EXPECT_FALSE(r.sandwich.has_value());
  EXPECT_TRUE(std::isfinite(r.effect.tau));
  rc.estimand = EstimandKind::AteSeparate;
  EXPECT_THROW(run_recipe(d, rc), Error);
}

TEST(Recipe, ScenarioAAteSeparateNearTruth) {
  const auto d = scenario_a(29, 1000);
  Recipe rc;
  rc.estimand = EstimandKind::AteSeparate;
  const auto r = run_recipe(d, rc);
  EXPECT_NEAR(r.effect.tau, 10.0, 4.0 * r.sandwich->se_tau);
  ASSERT_EQ(r.effect.fits.size(), 2u);
  EXPECT_EQ(r.effect.fits[1].scheme, WeightingScheme::power_rev(2.0));
}
