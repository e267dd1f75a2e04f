#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nawt/error.hpp"
#include "nawt/estimands.hpp"
#include "nawt/gmm.hpp"
#include "nawt/inference.hpp"
#include "nawt/model.hpp"
#include "nawt/simulation.hpp"
#include "nawt/solver.hpp"

namespace nawt::cli {

using Json = nlohmann::ordered_json;

/// Everything one invocation needs. Filled from an optional config file
/// (`key = value` lines, `#` comments) with command-line flags taking
/// precedence.
struct RunConfig {
  std::string command;
  std::string input;
  std::string treatment = "t";
  std::string outcome = "y";
  std::string covariates;  // comma separated; empty means every other column
  bool no_intercept = false;
  std::string estimand = "att";
  std::string scheme = "power";
  double alpha = 2.0;
  std::string alpha_grid;  // comma separated
  std::string balance;     // comma separated
  std::string weight_matrix = "cu";
  std::string variance = "sandwich";
  int n_boot = 500;
  std::string ci = "wald";
  std::string estimator = "hajek";
  std::string scenario;
  std::optional<long long> n;
  int replicates = 500;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
  unsigned threads = 1;
  std::optional<double> b01, b02, b03;
  int treated_model = 1;
  std::string ps_model = "true";
  int grid_points = 20;
  bool large_sample = false;
  int n_bins = 10;

  /// Settings that influence results, one `key=value` per line. Output
  /// location, format and thread count are left out.
  std::string normalized() const {
    std::ostringstream os;
    auto opt_d = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
    os << "command=" << command << "\ninput=" << input << "\ntreatment=" << treatment << "\noutcome=" << outcome
       << "\ncovariates=" << covariates << "\nintercept=" << !no_intercept << "\nestimand=" << estimand
       << "\nscheme=" << scheme << "\nalpha=" << format_double(alpha) << "\nalpha_grid=" << alpha_grid
       << "\nbalance=" << balance << "\nweight_matrix=" << weight_matrix << "\nvariance=" << variance
       << "\nn_boot=" << n_boot << "\nci=" << ci << "\nestimator=" << estimator << "\nscenario=" << scenario
       << "\nn=" << (n ? std::to_string(*n) : "-") << "\nreplicates=" << replicates
       << "\nseed=" << (seed ? std::to_string(*seed) : "-") << "\nb01=" << opt_d(b01) << "\nb02=" << opt_d(b02)
       << "\nb03=" << opt_d(b03) << "\ntreated_model=" << treated_model << "\nps_model=" << ps_model
       << "\ngrid_points=" << grid_points << "\nlarge_sample=" << large_sample << "\nn_bins=" << n_bins << "\n";
    return os.str();
  }
};

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(c.normalized()); }

// ---------------------------------------------------------------------------
// Parsing helpers

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

inline std::vector<double> parse_grid(const std::string& s, std::vector<double> fallback) {
  if (s.empty()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    const auto v = detail::parse_double(item);
    if (!v || !(*v >= 0.0)) fail(ErrorCode::Validation, "alpha grid entry '" + item + "' is not a number >= 0");
    out.push_back(*v);
  }
  if (out.empty()) fail(ErrorCode::Validation, "alpha grid is empty");
  return out;
}

inline WeightingScheme parse_scheme(const std::string& name, double alpha) {
  if (name == "mle") return WeightingScheme::mle();
  if (name == "power") return WeightingScheme::power(alpha);
  if (name == "power-rev") return WeightingScheme::power_rev(alpha);
  if (name == "combined") return WeightingScheme::combined(alpha);
  if (name == "cbps-att") return WeightingScheme::cbps_att();
  if (name == "cbps-ate") return WeightingScheme::cbps_ate();
  fail(ErrorCode::Validation, "unknown scheme '" + name + "'");
}

inline Estimator parse_estimator(const std::string& s) {
  if (s == "hajek") return Estimator::Hajek;
  if (s == "ht" || s == "horvitz-thompson") return Estimator::HorvitzThompson;
  fail(ErrorCode::Validation, "unknown estimator '" + s + "'");
}

inline std::uint64_t require_seed(const RunConfig& c) {
  if (!c.seed) fail(ErrorCode::Validation, "--seed is required for command '" + c.command + "'");
  return *c.seed;
}

struct ParseOutcome {
  RunConfig config;
  std::optional<int> exit_now;  // set for --help
  std::string help;
};

inline ParseOutcome parse_args(int argc, const char* const* argv) {
  ParseOutcome po;
  RunConfig& c = po.config;
  CLI::App app{"Estimand-tailored propensity weighting: fit, simulate, scan-alpha, illustrate", "nawt"};
  app.set_config("--config", "", "Read `key = value` settings from a file; flags override it");
  app.allow_config_extras(false);
  app.add_option("--command", c.command, "fit | simulate | scan-alpha | illustrate")
      ->check(CLI::IsMember({"fit", "simulate", "scan-alpha", "illustrate"}));
  app.add_option("--input", c.input, "CSV file for fit and single-dataset scan-alpha");
  app.add_option("--treatment", c.treatment, "Indicator column (treatment, or missingness for ao)");
  app.add_option("--outcome", c.outcome, "Outcome column");
  // List options: config files hand CLI11 `a,b` as separate values, so they
  // are collected as vectors and joined back after parsing.
  std::vector<std::string> covariates, alpha_grid, balance;
  auto* cov_opt = app.add_option("--covariates", covariates, "Comma-separated covariate columns (default: all others)")
                      ->delimiter(',');
  app.add_flag("--no-intercept", c.no_intercept, "Do not prepend an intercept column");
  app.add_option("--estimand", c.estimand)
      ->check(CLI::IsMember({"att", "atc", "ate", "ate-separate", "ate-combined", "ao"}));
  app.add_option("--scheme", c.scheme)
      ->check(CLI::IsMember({"mle", "power", "power-rev", "combined", "cbps-att", "cbps-ate"}));
  app.add_option("--alpha", c.alpha, "Exponent of the power weighting");
  auto* grid_opt =
      app.add_option("--alpha-grid", alpha_grid, "Comma-separated exponents (adaptive selection / scan)")->delimiter(',');
  auto* bal_opt =
      app.add_option("--balance", balance, "Comma-separated balance columns; switches to GMM")->delimiter(',');
  app.add_option("--weight-matrix", c.weight_matrix, "GMM weight: cu | identity")
      ->check(CLI::IsMember({"cu", "identity"}));
  app.add_option("--variance", c.variance)->check(CLI::IsMember({"sandwich", "bootstrap"}));
  app.add_option("--n-boot", c.n_boot);
  app.add_option("--ci", c.ci, "wald | percentile (bootstrap only)")->check(CLI::IsMember({"wald", "percentile"}));
  app.add_option("--estimator", c.estimator)->check(CLI::IsMember({"hajek", "ht", "horvitz-thompson"}));
  app.add_option("--scenario", c.scenario)->check(CLI::IsMember({"a", "b", "c", "cubic", "discrete"}));
  long long n_value = 0;
  auto* n_opt = app.add_option("--n", n_value, "Sample size");
  app.add_option("--replicates", c.replicates);
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value);
  app.add_option("--out", c.out, "Output path (stdout when absent)");
  app.add_option("--format", c.format)->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--threads", c.threads, "Worker threads");
  double b01 = 0, b02 = 0, b03 = 0;
  auto* b01_opt = app.add_option("--b01", b01, "Cubic control-arm linear coefficient");
  auto* b02_opt = app.add_option("--b02", b02, "Cubic control-arm quadratic coefficient");
  auto* b03_opt = app.add_option("--b03", b03, "Cubic control-arm cubic coefficient");
  app.add_option("--treated-model", c.treated_model)->check(CLI::Range(1, 3));
  app.add_option("--ps-model", c.ps_model)->check(CLI::IsMember({"true", "mis1", "mis2"}));
  app.add_option("--grid-points", c.grid_points, "Cubic grid points sampled when no coefficients are given");
  app.add_flag("--large-sample", c.large_sample, "One large replicate per cubic grid point");
  app.add_option("--n-bins", c.n_bins, "Bins of the relative-impact profile");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    po.exit_now = 0;
    po.help = app.help();
    return po;
  } catch (const CLI::ParseError& e) {
    fail(ErrorCode::Validation, e.what());
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
    return out;
  };
  if (cov_opt->count() > 0) c.covariates = join(covariates);
  if (grid_opt->count() > 0) c.alpha_grid = join(alpha_grid);
  if (bal_opt->count() > 0) c.balance = join(balance);
  if (n_opt->count() > 0) c.n = n_value;
  if (seed_opt->count() > 0) c.seed = seed_value;
  if (b01_opt->count() > 0) c.b01 = b01;
  if (b02_opt->count() > 0) c.b02 = b02;
  if (b03_opt->count() > 0) c.b03 = b03;
  if (c.command.empty()) fail(ErrorCode::Validation, "--command is required");
  return po;
}

// ---------------------------------------------------------------------------
// Output

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// Row-oriented CSV text builder with round-trip number formatting.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : width_(header.size()) { add(header); }

  CsvTable& row() {
    rows_.emplace_back();
    return *this;
  }
  CsvTable& cell(const std::string& s) {
    rows_.back().push_back(csv_cell(s));
    return *this;
  }
  CsvTable& cell(double v) {
    rows_.back().push_back(format_double(v));
    return *this;
  }
  CsvTable& cell(long long v) {
    rows_.back().push_back(std::to_string(v));
    return *this;
  }
  CsvTable& cell(int v) { return cell(static_cast<long long>(v)); }
  CsvTable& cell(bool v) {
    rows_.back().push_back(v ? "true" : "false");
    return *this;
  }

  std::string str() const {
    std::string out;
    for (const auto& r : rows_) {
      if (r.size() != width_) throw std::logic_error("CsvTable: ragged row");
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (j) out += ',';
        out += r[j];
      }
      out += '\n';
    }
    return out;
  }

 private:
  void add(const std::vector<std::string>& cells) {
    rows_.emplace_back();
    for (const auto& c : cells) rows_.back().push_back(csv_cell(c));
  }
  std::size_t width_;
  std::vector<std::vector<std::string>> rows_;
};

inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open output file '" + path + "'");
  f << text;
  if (!f) fail(ErrorCode::Io, "failed writing output file '" + path + "'");
}

inline Json provenance(const RunConfig& c) {
  Json j;
  j["command"] = c.command;
  j["config_hash"] = config_hash(c);
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// fit

namespace detail {

inline Json fit_json(const Dataset& d, const PropensityFit& f, const std::string& role) {
  Json j;
  j["role"] = role;
  j["scheme"] = f.scheme.name();
  Json beta = Json::object();
  for (Eigen::Index k = 0; k < d.k(); ++k) beta[d.names()[static_cast<std::size_t>(k)]] = num(f.beta[k]);
  j["beta"] = beta;
  j["pi_hat"] = {{"min", num(f.pi_hat.minCoeff())},
                 {"mean", num(f.pi_hat.mean())},
                 {"max", num(f.pi_hat.maxCoeff())},
                 {"n_clamped", f.n_clamped}};
  j["converged"] = f.converged;
  j["score_norm"] = num(f.score_norm);
  j["iterations"] = f.iterations;
  j["pseudo_loglik"] = num(f.pseudo_loglik);
  j["separation_warning"] = f.separation_warning;
  return j;
}

struct BalanceRow {
  std::string covariate;
  double treated = 0.0, control = 0.0, target = 0.0;
};

// Weighted covariate means by arm under the estimate's weights, next to the
// unweighted mean of the population the estimand targets.
inline std::vector<BalanceRow> balance_table(const Dataset& d, const EffectEstimate& e) {
  std::vector<BalanceRow> rows;
  for (Eigen::Index j = 0; j < d.k(); ++j) {
    const auto& name = d.names()[static_cast<std::size_t>(j)];
    if (name == kInterceptName) continue;
    double s1 = 0, w1 = 0, s0 = 0, w0 = 0, all = 0, n_t = 0, n_c = 0, sum_t = 0, sum_c = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      const double x = d.x()(i, j);
      all += x;
      if (d.t()[i] == 1.0) {
        s1 += e.weights[i] * x;
        w1 += e.weights[i];
        sum_t += x;
        ++n_t;
      } else {
        s0 += e.weights[i] * x;
        w0 += e.weights[i];
        sum_c += x;
        ++n_c;
      }
    }
    BalanceRow r;
    r.covariate = name;
    r.treated = w1 > 0 ? s1 / w1 : std::numeric_limits<double>::quiet_NaN();
    r.control = w0 > 0 ? s0 / w0 : std::numeric_limits<double>::quiet_NaN();
    switch (e.estimand) {
      case EstimandKind::ATT: r.target = sum_t / n_t; break;
      case EstimandKind::ATC: r.target = sum_c / n_c; break;
      default: r.target = all / static_cast<double>(d.n()); break;
    }
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<std::string> fit_roles(EstimandKind e) {
  switch (e) {
    case EstimandKind::AteSeparate: return {"control_side", "treated_side"};
    case EstimandKind::ATC: return {"relabeled"};
    default: return {"propensity"};
  }
}

}  // namespace detail

inline int cmd_fit(const RunConfig& c, std::ostream& out) {
  if (c.input.empty()) fail(ErrorCode::Validation, "--input is required for fit");
  const EstimandKind estimand = parse_estimand(c.estimand);
  CsvColumns cols;
  cols.treatment = c.treatment;
  cols.outcome = c.outcome;
  cols.covariates = split_list(c.covariates);
  cols.intercept = !c.no_intercept;
  cols.allow_missing_outcome = estimand == EstimandKind::AO;
  const Dataset d = load_csv(c.input, cols);

  Recipe rc;
  rc.estimand = estimand;
  rc.scheme = parse_scheme(c.scheme, c.alpha);
  rc.estimator = parse_estimator(c.estimator);
  rc.adaptive_grid = c.alpha_grid.empty() ? std::vector<double>{} : parse_grid(c.alpha_grid, {});
  rc.balance_cols = split_list(c.balance);
  rc.gmm.weight_matrix_kind =
      c.weight_matrix == "identity" ? WeightMatrixKind::Identity : WeightMatrixKind::ContinuouslyUpdating;
  for (const auto& b : rc.balance_cols) (void)d.column_index(b);
  const bool bootstrap = c.variance == "bootstrap";
  if (!rc.balance_cols.empty() && !bootstrap) {
    fail(ErrorCode::Validation, "--balance (GMM) requires --variance bootstrap");
  }
  if (!bootstrap && rc.estimator != Estimator::Hajek) {
    fail(ErrorCode::Validation, "sandwich variance requires the hajek estimator; use --variance bootstrap");
  }

  std::optional<AdaptiveResult> adaptive;
  RecipeResult res;
  if (!rc.adaptive_grid.empty()) {
    adaptive = adaptive_select(d, rc, rc.adaptive_grid, c.threads);
    res = adaptive->chosen;
  } else {
    res = run_recipe(d, rc, !bootstrap);
  }

  VarianceReport var;
  if (bootstrap) {
    BootstrapOptions bo;
    bo.n_boot = c.n_boot;
    bo.seed = require_seed(c);
    bo.threads = c.threads;
    bo.ci_kind = c.ci == "percentile" ? CiKind::Percentile : CiKind::Wald;
    Recipe boot_rc = rc;
    var = bootstrap_se(d, [&](const Dataset& dd) { return run_recipe(dd, boot_rc, false).effect.tau; },
                       res.effect.tau, bo);
  } else {
    var = *res.sandwich;
  }

  const auto roles = detail::fit_roles(estimand);
  const auto balance = detail::balance_table(d, res.effect);

  if (c.format == "csv") {
    CsvTable t({"field", "value"});
    auto kv = [&](const std::string& k, double v) { t.row().cell(k).cell(v); };
    auto ks = [&](const std::string& k, const std::string& v) { t.row().cell(k).cell(v); };
    ks("command", "fit");
    ks("config_hash", config_hash(c));
    ks("seed", c.seed ? std::to_string(*c.seed) : "");
    ks("estimand", to_string(estimand));
    ks("estimator", to_string(rc.estimator));
    kv("n", static_cast<double>(d.n()));
    kv("n_treated", static_cast<double>(d.n_treated()));
    kv("tau", res.effect.tau);
    kv("se", var.se_tau);
    kv("ci95_lo", var.ci95.first);
    kv("ci95_hi", var.ci95.second);
    ks("variance_method", to_string(var.method));
    if (res.chosen_alpha) kv("chosen_alpha", *res.chosen_alpha);
    for (std::size_t f = 0; f < res.effect.fits.size(); ++f) {
      const auto& fit = res.effect.fits[f];
      const std::string p = roles[f] + ":";
      ks(p + "scheme", fit.scheme.name());
      for (Eigen::Index k = 0; k < d.k(); ++k) kv(p + "beta:" + d.names()[static_cast<std::size_t>(k)], fit.beta[k]);
      kv(p + "pi_hat_min", fit.pi_hat.minCoeff());
      kv(p + "pi_hat_mean", fit.pi_hat.mean());
      kv(p + "pi_hat_max", fit.pi_hat.maxCoeff());
      kv(p + "n_clamped", static_cast<double>(fit.n_clamped));
      ks(p + "converged", fit.converged ? "true" : "false");
      kv(p + "score_norm", fit.score_norm);
      kv(p + "iterations", fit.iterations);
      kv(p + "pseudo_loglik", fit.pseudo_loglik);
    }
    for (const auto& b : balance) {
      kv("balance:" + b.covariate + ":treated", b.treated);
      kv("balance:" + b.covariate + ":control", b.control);
      kv("balance:" + b.covariate + ":target", b.target);
    }
    write_text(c.out, t.str(), out);
    return 0;
  }

  Json j = provenance(c);
  j["input"] = c.input;
  j["estimand"] = to_string(estimand);
  j["estimator"] = to_string(rc.estimator);
  j["n"] = d.n();
  j["n_treated"] = d.n_treated();
  j["tau"] = num(res.effect.tau);
  j["se"] = num(var.se_tau);
  j["ci95"] = {num(var.ci95.first), num(var.ci95.second)};
  j["variance_method"] = to_string(var.method);
  if (bootstrap) {
    j["n_boot"] = var.n_boot;
    j["n_boot_failed"] = var.n_failed;
  }
  if (!std::isnan(res.effect.mu1)) j["mu1"] = num(res.effect.mu1);
  if (!std::isnan(res.effect.mu0)) j["mu0"] = num(res.effect.mu0);
  j["beta"] = detail::fit_json(d, res.effect.fits.front(), roles.front())["beta"];
  const auto& first = res.effect.fits.front();
  j["pi_hat"] = {{"min", num(first.pi_hat.minCoeff())},
                 {"mean", num(first.pi_hat.mean())},
                 {"max", num(first.pi_hat.maxCoeff())},
                 {"n_clamped", first.n_clamped}};
  Json fits = Json::array();
  for (std::size_t f = 0; f < res.effect.fits.size(); ++f) fits.push_back(detail::fit_json(d, res.effect.fits[f], roles[f]));
  Json diag;
  diag["converged"] = std::all_of(res.effect.fits.begin(), res.effect.fits.end(), [](const auto& f) { return f.converged; });
  diag["score_norm"] = num(first.score_norm);
  diag["iterations"] = first.iterations;
  diag["separation_warning"] =
      std::any_of(res.effect.fits.begin(), res.effect.fits.end(), [](const auto& f) { return f.separation_warning; });
  diag["fits"] = fits;
  Json bal = Json::array();
  for (const auto& b : balance) {
    bal.push_back({{"covariate", b.covariate}, {"treated", num(b.treated)}, {"control", num(b.control)},
                   {"target", num(b.target)}});
  }
  diag["balance"] = bal;
  if (res.gmm) {
    Json moments = Json::array();
    for (Eigen::Index m = 0; m < res.gmm->moment_values.size(); ++m) moments.push_back(num(res.gmm->moment_values[m]));
    diag["gmm"] = {{"objective", num(res.gmm->objective)},
                   {"weight_matrix", to_string(res.gmm->weight_matrix_kind)},
                   {"balance_cols", res.gmm->balance_cols},
                   {"moment_values", moments},
                   {"iterations", res.gmm->iterations}};
  }
  if (adaptive) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < adaptive->rows.size(); ++r) {
      const auto& row = adaptive->rows[r];
      rows.push_back({{"alpha", num(row.alpha)}, {"ok", row.ok}, {"tau", num(row.tau)}, {"variance", num(row.variance)},
                      {"chosen", r == adaptive->chosen_index}});
    }
    diag["adaptive"] = {{"chosen_alpha", num(adaptive->chosen_alpha)}, {"grid", rows}};
  }
  if (estimand == EstimandKind::ATT) {
    Json prof = Json::array();
    for (const auto& b : relative_impact_profile(d, first.pi_hat, c.n_bins)) {
      prof.push_back({{"lo", num(b.lo)}, {"hi", num(b.hi)}, {"n_control", b.n_control}, {"value", num(b.value)}});
    }
    diag["relative_impact"] = prof;
  }
  j["diagnostics"] = diag;
  write_text(c.out, j.dump(2) + "\n", out);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate / scan-alpha

namespace detail {

inline EstimandKind sim_estimand(const RunConfig& c) {
  const auto e = parse_estimand(c.estimand);
  if (e == EstimandKind::AO) fail(ErrorCode::Validation, "simulation scenarios do not support the ao estimand");
  return e;
}

inline void check_replicates(const RunConfig& c) {
  if (c.replicates < 1) fail(ErrorCode::Validation, "--replicates must be at least 1");
}

inline CubicSpec cubic_from(const RunConfig& c) {
  CubicSpec s;
  s.b01 = c.b01.value_or(0.0);
  s.b02 = c.b02.value_or(0.0);
  s.b03 = c.b03.value_or(0.0);
  s.treated_model = c.treated_model;
  s.ps_model = parse_ps_model(c.ps_model);
  return s;
}

inline bool cubic_point_given(const RunConfig& c) { return c.b01 || c.b02 || c.b03; }

inline ScenarioSpec scenario_from(const RunConfig& c, EstimandKind estimand, long long default_n) {
  ScenarioSpec s;
  s.estimand = estimand;
  s.n = c.n.value_or(default_n);
  if (c.scenario == "a" || c.scenario == "b" || c.scenario == "c") {
    s.family = ScenarioFamily::Main;
    s.variant = c.scenario[0];
  } else if (c.scenario == "cubic") {
    s.family = ScenarioFamily::Cubic;
    s.cubic = cubic_from(c);
  } else if (c.scenario == "discrete") {
    fail(ErrorCode::Validation, "the discrete scenario is produced by the illustrate command");
  } else {
    fail(ErrorCode::Validation, "--scenario is required (a, b, c or cubic)");
  }
  return s;
}

const std::vector<std::string> kMcColumns = {"scenario", "n", "estimand", "replicates", "seed", "config_hash",
                                             "true_tau", "method", "scheme", "bias", "rmse", "coverage95",
                                             "variance", "mean_se", "n_replicates", "n_failed", "chosen",
                                             "benchmark_bias", "benchmark_rmse", "benchmark_coverage95"};

inline void mc_rows_csv(CsvTable& t, const RunConfig& c, const McReport& r, std::optional<std::size_t> chosen) {
  for (std::size_t m = 0; m < r.rows.size(); ++m) {
    const auto& row = r.rows[m];
    const auto bench = benchmark_reference(r.scenario, row.label);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    t.row()
        .cell(r.scenario.label())
        .cell(static_cast<long long>(r.scenario.n))
        .cell(to_string(r.scenario.estimand))
        .cell(r.replicates)
        .cell(std::to_string(r.seed))
        .cell(config_hash(c))
        .cell(r.true_tau)
        .cell(row.label)
        .cell(row.scheme)
        .cell(row.bias)
        .cell(row.rmse)
        .cell(row.coverage95)
        .cell(row.variance)
        .cell(row.mean_se)
        .cell(row.n_replicates)
        .cell(row.n_failed)
        .cell(chosen && *chosen == m)
        .cell(bench ? bench->bias : nan)
        .cell(bench ? bench->rmse : nan)
        .cell(bench ? bench->coverage95 : nan);
  }
}

inline Json mc_json(const McReport& r, std::optional<std::size_t> chosen) {
  Json j;
  j["scenario"] = r.scenario.label();
  j["n"] = r.scenario.n;
  j["estimand"] = to_string(r.scenario.estimand);
  j["replicates"] = r.replicates;
  j["true_tau"] = num(r.true_tau);
  Json rows = Json::array();
  for (std::size_t m = 0; m < r.rows.size(); ++m) {
    const auto& row = r.rows[m];
    Json jr;
    jr["method"] = row.label;
    jr["scheme"] = row.scheme;
    jr["bias"] = num(row.bias);
    jr["rmse"] = num(row.rmse);
    jr["coverage95"] = num(row.coverage95);
    jr["variance"] = num(row.variance);
    jr["mean_se"] = num(row.mean_se);
    jr["n_replicates"] = row.n_replicates;
    jr["n_failed"] = row.n_failed;
    if (chosen) jr["chosen"] = *chosen == m;
    if (!row.chosen_alpha.empty()) {
      Json counts = Json::object();
      std::map<std::string, int> tally;
      for (double a : row.chosen_alpha) {
        if (std::isfinite(a)) ++tally[format_double(a)];
      }
      for (const auto& [k, v] : tally) counts[k] = v;
      jr["chosen_alpha_counts"] = counts;
    }
    if (const auto bench = benchmark_reference(r.scenario, row.label)) {
      jr["benchmark"] = {{"bias", bench->bias}, {"rmse", bench->rmse}, {"coverage95", bench->coverage95},
                         {"table", bench->table}};
    } else {
      jr["benchmark"] = nullptr;
    }
    rows.push_back(jr);
  }
  j["rows"] = rows;
  return j;
}

// Grid point with the smallest RMSE; ties go to the earlier row.
inline std::optional<std::size_t> min_rmse_row(const McReport& r) {
  std::optional<std::size_t> best;
  for (std::size_t m = 0; m < r.rows.size(); ++m) {
    if (!std::isfinite(r.rows[m].rmse)) continue;
    if (!best || r.rows[m].rmse < r.rows[*best].rmse) best = m;
  }
  return best;
}

inline void emit_mc(const RunConfig& c, const std::vector<McReport>& reports,
                    const std::vector<std::optional<std::size_t>>& chosen, std::ostream& out) {
  if (c.format == "csv") {
    CsvTable t(kMcColumns);
    for (std::size_t i = 0; i < reports.size(); ++i) mc_rows_csv(t, c, reports[i], chosen[i]);
    write_text(c.out, t.str(), out);
    return;
  }
  Json j = provenance(c);
  Json tables = Json::array();
  for (std::size_t i = 0; i < reports.size(); ++i) tables.push_back(mc_json(reports[i], chosen[i]));
  j["tables"] = tables;
  write_text(c.out, j.dump(2) + "\n", out);
}

}  // namespace detail

inline int cmd_simulate(const RunConfig& c, std::ostream& out) {
  detail::check_replicates(c);
  const auto seed = require_seed(c);
  const auto estimand = detail::sim_estimand(c);
  McOptions mo;
  mo.threads = c.threads;

  if (c.scenario != "cubic") {
    const auto spec = detail::scenario_from(c, estimand, 1000);
    const auto rep = run_monte_carlo(spec, default_methods(estimand, c.alpha), c.replicates, seed, mo);
    detail::emit_mc(c, {rep}, {std::nullopt}, out);
    return 0;
  }

  const auto grid = parse_grid(c.alpha_grid, {0.0, 2.0, 4.0});
  auto methods = alpha_scan_methods(estimand, grid);
  methods.push_back(adaptive_method(estimand, grid));
  const auto ps = parse_ps_model(c.ps_model);
  if (c.grid_points < 1) fail(ErrorCode::Validation, "--grid-points must be at least 1");
  const auto points = detail::cubic_point_given(c)
                          ? std::vector<CubicSpec>{detail::cubic_from(c)}
                          : sample_cubic_grid(static_cast<std::size_t>(c.grid_points), seed, ps);

  if (c.large_sample) {
    const auto n = c.n.value_or(kLargeSampleN);
    const auto rows = large_sample_sweep(points, methods, estimand, seed, n, c.threads);
    if (c.format == "csv") {
      CsvTable t({"b01", "b02", "b03", "treated_model", "ps_model", "n", "seed", "config_hash", "method", "true_tau",
                  "tau", "scaled_se", "ok"});
      for (const auto& r : rows) {
        t.row()
            .cell(r.spec.b01)
            .cell(r.spec.b02)
            .cell(r.spec.b03)
            .cell(r.spec.treated_model)
            .cell(to_string(r.spec.ps_model))
            .cell(static_cast<long long>(n))
            .cell(std::to_string(seed))
            .cell(config_hash(c))
            .cell(r.label)
            .cell(r.true_tau)
            .cell(r.tau)
            .cell(r.scaled_se)
            .cell(r.ok);
      }
      write_text(c.out, t.str(), out);
    } else {
      Json j = provenance(c);
      j["n"] = n;
      Json arr = Json::array();
      for (const auto& r : rows) {
        arr.push_back({{"b01", r.spec.b01}, {"b02", r.spec.b02}, {"b03", r.spec.b03},
                       {"treated_model", r.spec.treated_model}, {"ps_model", to_string(r.spec.ps_model)},
                       {"method", r.label}, {"true_tau", num(r.true_tau)}, {"tau", num(r.tau)},
                       {"scaled_se", num(r.scaled_se)}, {"ok", r.ok}});
      }
      j["rows"] = arr;
      write_text(c.out, j.dump(2) + "\n", out);
    }
    return 0;
  }

  std::vector<McReport> reports;
  for (const auto& p : points) {
    ScenarioSpec spec;
    spec.family = ScenarioFamily::Cubic;
    spec.cubic = p;
    spec.n = c.n.value_or(400);
    spec.estimand = estimand;
    reports.push_back(run_monte_carlo(spec, methods, c.replicates, seed, mo));
  }
  detail::emit_mc(c, reports, std::vector<std::optional<std::size_t>>(reports.size()), out);
  return 0;
}

inline int cmd_scan_alpha(const RunConfig& c, std::ostream& out) {
  if (!c.input.empty()) {
    // Single dataset: sandwich variance per exponent, adaptive choice flagged.
    const auto estimand = parse_estimand(c.estimand);
    CsvColumns cols;
    cols.treatment = c.treatment;
    cols.outcome = c.outcome;
    cols.covariates = split_list(c.covariates);
    cols.intercept = !c.no_intercept;
    cols.allow_missing_outcome = estimand == EstimandKind::AO;
    const Dataset d = load_csv(c.input, cols);
    Recipe rc;
    rc.estimand = estimand;
    rc.scheme = parse_scheme(c.scheme, c.alpha);
    const auto grid = parse_grid(c.alpha_grid, {0.0, 2.0, 4.0});
    const auto res = adaptive_select(d, rc, grid, c.threads);
    if (c.format == "csv") {
      CsvTable t({"alpha", "ok", "tau", "se", "variance", "chosen", "config_hash"});
      for (std::size_t r = 0; r < res.rows.size(); ++r) {
        const auto& row = res.rows[r];
        t.row().cell(row.alpha).cell(row.ok).cell(row.tau).cell(row.se).cell(row.variance).cell(r == res.chosen_index).cell(
            config_hash(c));
      }
      write_text(c.out, t.str(), out);
      return 0;
    }
    Json j = provenance(c);
    j["mode"] = "adaptive";
    j["input"] = c.input;
    j["estimand"] = to_string(estimand);
    j["chosen_alpha"] = num(res.chosen_alpha);
    Json rows = Json::array();
    for (std::size_t r = 0; r < res.rows.size(); ++r) {
      const auto& row = res.rows[r];
      Json jr{{"alpha", num(row.alpha)}, {"ok", row.ok},           {"tau", num(row.tau)},
              {"se", num(row.se)},       {"variance", num(row.variance)}, {"chosen", r == res.chosen_index}};
      if (!row.ok) jr["error"] = row.error;
      rows.push_back(jr);
    }
    j["rows"] = rows;
    write_text(c.out, j.dump(2) + "\n", out);
    return 0;
  }

  detail::check_replicates(c);
  const auto seed = require_seed(c);
  const auto estimand = detail::sim_estimand(c);
  const auto grid = parse_grid(c.alpha_grid, {0.0, 1.0, 2.0, 3.0});
  const auto spec = detail::scenario_from(c, estimand, c.scenario == "cubic" ? 400 : 1000);
  McOptions mo;
  mo.threads = c.threads;
  const auto rep = run_monte_carlo(spec, alpha_scan_methods(estimand, grid), c.replicates, seed, mo);
  detail::emit_mc(c, {rep}, {detail::min_rmse_row(rep)}, out);
  return 0;
}

// ---------------------------------------------------------------------------
// illustrate

struct IllustrationLevel {
  int x;
  Eigen::Index n;
  double pi_true, pi_np, pi_mle, pi_nawt;
};

struct IllustrationSummary {
  std::vector<IllustrationLevel> levels;
  double mean_abs_pi_mle = 0, mean_abs_pi_nawt = 0;  // levels with nonparametric pi > 0.5
  double mean_abs_w_mle = 0, mean_abs_w_nawt = 0;    // same levels, odds weights pi/(1-pi)
  int n_levels_used = 0;
};

inline double odds(double p) { return p / (1.0 - p); }

/// Discrete one-covariate illustration: nonparametric, MLE and power(alpha)
/// propensity estimates per covariate level.
inline IllustrationSummary illustrate_discrete(Eigen::Index n, std::uint64_t seed, double alpha) {
  RngStream rng(seed, 0);
  const auto ill = generate_discrete_illustration(n, rng);
  const auto mle = fit_nawt(ill.data, WeightingScheme::mle());
  const auto nawt = fit_nawt(ill.data, WeightingScheme::power(alpha));
  IllustrationSummary s;
  for (const auto& lv : ill.levels) {
    Eigen::Vector2d row(1.0, lv.x);
    s.levels.push_back({lv.x, lv.n, lv.true_pi, lv.fraction, logistic_pi(mle.beta, row), logistic_pi(nawt.beta, row)});
  }
  for (const auto& lv : s.levels) {
    if (!(lv.pi_np > 0.5)) continue;
    ++s.n_levels_used;
    s.mean_abs_pi_mle += std::abs(lv.pi_mle - lv.pi_np);
    s.mean_abs_pi_nawt += std::abs(lv.pi_nawt - lv.pi_np);
    s.mean_abs_w_mle += std::abs(odds(lv.pi_mle) - odds(lv.pi_np));
    s.mean_abs_w_nawt += std::abs(odds(lv.pi_nawt) - odds(lv.pi_np));
  }
  if (s.n_levels_used > 0) {
    const double k = s.n_levels_used;
    s.mean_abs_pi_mle /= k;
    s.mean_abs_pi_nawt /= k;
    s.mean_abs_w_mle /= k;
    s.mean_abs_w_nawt /= k;
  }
  return s;
}

inline const std::vector<double>& illustration_true_pis() {
  static const std::vector<double> v{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  return v;
}

/// Expected pseudo-log-likelihood at fitted pi_hat when the true propensity
/// is p: p l1(pi_hat) + (1 - p) l0(pi_hat).
inline double expected_att_loglik(double p, double pi_hat, double alpha) {
  return p * treated_loglik_term(pi_hat, alpha) + (1.0 - p) * control_loglik_term(pi_hat, alpha);
}

inline double expected_mle_loglik(double p, double pi_hat) {
  return p * std::log(pi_hat) + (1.0 - p) * std::log1p(-pi_hat);
}

inline int cmd_illustrate(const RunConfig& c, std::ostream& out) {
  const auto seed = require_seed(c);
  const auto n = c.n.value_or(200'000);
  const auto s = illustrate_discrete(n, seed, c.alpha);
  const auto& ps = illustration_true_pis();

  std::vector<std::string> curve_cols{"pi", "l_att1", "l_att0", "l_mle1", "l_mle0"};
  for (double p : ps) curve_cols.push_back("expected_att_" + format_double(p));
  for (double p : ps) curve_cols.push_back("expected_mle_" + format_double(p));
  std::vector<std::vector<double>> curves;
  for (int k = 1; k <= 99; ++k) {
    const double pi = k / 100.0;
    std::vector<double> r{pi, treated_loglik_term(pi, c.alpha), control_loglik_term(pi, c.alpha), std::log(pi),
                          std::log1p(-pi)};
    for (double p : ps) r.push_back(expected_att_loglik(p, pi, c.alpha));
    for (double p : ps) r.push_back(expected_mle_loglik(p, pi));
    curves.push_back(std::move(r));
  }

  if (c.format == "csv") {
    CsvTable lv({"x", "n", "pi_true", "pi_np", "pi_mle", "pi_nawt", "w_np", "w_mle", "w_nawt", "config_hash"});
    for (const auto& l : s.levels) {
      lv.row()
          .cell(l.x)
          .cell(static_cast<long long>(l.n))
          .cell(l.pi_true)
          .cell(l.pi_np)
          .cell(l.pi_mle)
          .cell(l.pi_nawt)
          .cell(odds(l.pi_np))
          .cell(odds(l.pi_mle))
          .cell(odds(l.pi_nawt))
          .cell(config_hash(c));
    }
    CsvTable cv(curve_cols);
    for (const auto& r : curves) {
      cv.row();
      for (double v : r) cv.cell(v);
    }
    if (c.out.empty()) {
      out << lv.str() << "\n" << cv.str();
    } else {
      std::string stem = c.out;
      if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".csv") stem.resize(stem.size() - 4);
      write_text(stem + "_discrete.csv", lv.str(), out);
      write_text(stem + "_loglik.csv", cv.str(), out);
    }
    return 0;
  }

  Json j = provenance(c);
  j["n"] = n;
  j["alpha"] = c.alpha;
  Json levels = Json::array();
  for (const auto& l : s.levels) {
    levels.push_back({{"x", l.x}, {"n", l.n}, {"pi_true", num(l.pi_true)}, {"pi_np", num(l.pi_np)},
                      {"pi_mle", num(l.pi_mle)}, {"pi_nawt", num(l.pi_nawt)}, {"w_np", num(odds(l.pi_np))},
                      {"w_mle", num(odds(l.pi_mle))}, {"w_nawt", num(odds(l.pi_nawt))}});
  }
  j["discrete"] = levels;
  j["summary"] = {{"levels_with_pi_np_above_half", s.n_levels_used},
                  {"mean_abs_pi_mle", num(s.mean_abs_pi_mle)},
                  {"mean_abs_pi_nawt", num(s.mean_abs_pi_nawt)},
                  {"mean_abs_w_mle", num(s.mean_abs_w_mle)},
                  {"mean_abs_w_nawt", num(s.mean_abs_w_nawt)}};
  Json cj = Json::object();
  for (std::size_t col = 0; col < curve_cols.size(); ++col) {
    Json arr = Json::array();
    for (const auto& r : curves) arr.push_back(num(r[col]));
    cj[curve_cols[col]] = arr;
  }
  j["loglik_curves"] = cj;
  write_text(c.out, j.dump(2) + "\n", out);
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline Json error_json(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", std::string(error_code_name(code))}, {"message", message}, {"exit_code", exit_code_for(code)}}}};
}

inline int dispatch(const RunConfig& c, std::ostream& out) {
  if (c.command == "fit") return cmd_fit(c, out);
  if (c.command == "simulate") return cmd_simulate(c, out);
  if (c.command == "scan-alpha") return cmd_scan_alpha(c, out);
  if (c.command == "illustrate") return cmd_illustrate(c, out);
  fail(ErrorCode::Validation, "unknown command '" + c.command + "'");
}

/// Runs one invocation. Errors go to `err` as a JSON object and map to exit
/// codes 2 (configuration or data), 3 (numerical failure) and 4 (I/O).
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    const auto po = parse_args(argc, argv);
    if (po.exit_now) {
      out << po.help;
      return *po.exit_now;
    }
    return dispatch(po.config, out);
  } catch (const Error& e) {
    err << error_json(e.code(), e.what()).dump() << "\n";
    return exit_code_for(e.code());
  } catch (const CLI::Error& e) {
    err << error_json(ErrorCode::Validation, e.what()).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << Json{{"error", {{"code", "internal_error"}, {"message", e.what()}, {"exit_code", 1}}}}.dump() << "\n";
    return 1;
  }
}

}  // namespace nawt::cli
