#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nawt/error.hpp"

namespace nawt {

/// Fitted probabilities are kept inside [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-12;

// ---------------------------------------------------------------------------
// Dataset

/// Covariates, a binary indicator and an optional outcome.
///
/// The indicator is a treatment flag for causal estimands and a missingness
/// flag (1 = outcome missing) for the average-outcome estimand. Missing
/// outcomes are stored as NaN. Immutable once built.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd x, Eigen::VectorXd t, std::optional<Eigen::VectorXd> y,
          std::vector<std::string> names)
      : x_(std::move(x)), t_(std::move(t)), y_(std::move(y)), names_(std::move(names)) {
    validate();
  }

  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::VectorXd& t() const { return t_; }
  bool has_outcome() const { return y_.has_value(); }
  const Eigen::VectorXd& y() const {
    if (!y_) fail(ErrorCode::Validation, "dataset has no outcome column");
    return *y_;
  }
  const std::vector<std::string>& names() const { return names_; }

  Eigen::Index n() const { return x_.rows(); }
  Eigen::Index k() const { return x_.cols(); }
  Eigen::Index n_treated() const { return n_treated_; }
  Eigen::Index n_control() const { return n() - n_treated_; }

  /// Same units with the indicator flipped, t -> 1 - t.
  Dataset relabeled() const {
    return Dataset(x_, Eigen::VectorXd::Ones(n()) - t_, y_, names_);
  }

  /// Rows picked by index, repeats allowed (bootstrap resampling).
  Dataset subset(const std::vector<Eigen::Index>& rows) const {
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(rows.size()), k());
    Eigen::VectorXd ts(static_cast<Eigen::Index>(rows.size()));
    std::optional<Eigen::VectorXd> ys;
    if (y_) ys = Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = rows[r];
      const auto ri = static_cast<Eigen::Index>(r);
      xs.row(ri) = x_.row(i);
      ts[ri] = t_[i];
      if (y_) (*ys)[ri] = (*y_)[i];
    }
    return Dataset(std::move(xs), std::move(ts), std::move(ys), names_);
  }

  Eigen::Index column_index(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
      fail(ErrorCode::Validation, "unknown column '" + std::string(name) + "'");
    }
    return static_cast<Eigen::Index>(it - names_.begin());
  }

 private:
  void validate() {
    if (x_.rows() < 2) fail(ErrorCode::Validation, "dataset needs at least 2 units");
    if (t_.size() != x_.rows()) fail(ErrorCode::Validation, "indicator length does not match covariate rows");
    if (static_cast<Eigen::Index>(names_.size()) != x_.cols()) {
      fail(ErrorCode::Validation, "covariate names do not match covariate columns");
    }
    if (y_ && y_->size() != x_.rows()) fail(ErrorCode::Validation, "outcome length does not match covariate rows");
    for (Eigen::Index i = 0; i < x_.rows(); ++i) {
      for (Eigen::Index j = 0; j < x_.cols(); ++j) {
        if (!std::isfinite(x_(i, j))) {
          fail(ErrorCode::NonFinite, "non-finite covariate at unit " + std::to_string(i) + ", column '" +
                                         names_[static_cast<std::size_t>(j)] + "'");
        }
      }
      if (t_[i] != 0.0 && t_[i] != 1.0) {
        fail(ErrorCode::Validation, "indicator at unit " + std::to_string(i) + " is not 0/1");
      }
      if (y_ && std::isinf((*y_)[i])) {
        fail(ErrorCode::NonFinite, "infinite outcome at unit " + std::to_string(i));
      }
    }
    n_treated_ = static_cast<Eigen::Index>(t_.sum());
    if (n_treated_ == 0 || n_treated_ == x_.rows()) {
      fail(ErrorCode::EmptyClass, "both indicator classes must be nonempty");
    }
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd t_;
  std::optional<Eigen::VectorXd> y_;
  std::vector<std::string> names_;
  Eigen::Index n_treated_ = 0;
};

// ---------------------------------------------------------------------------
// Weighting schemes

enum class SchemeKind { MleUnit, PowerPi, PowerOneMinusPi, CombinedPower, CbpsAtt, CbpsAte };

/// The omega(pi) multiplier applied to the logistic score.
struct WeightingScheme {
  SchemeKind kind = SchemeKind::MleUnit;
  double alpha = 0.0;

  static WeightingScheme mle() { return {SchemeKind::MleUnit, 0.0}; }
  static WeightingScheme power(double a) { return {SchemeKind::PowerPi, checked(a)}; }
  static WeightingScheme power_rev(double a) { return {SchemeKind::PowerOneMinusPi, checked(a)}; }
  static WeightingScheme combined(double a) { return {SchemeKind::CombinedPower, checked(a)}; }
  static WeightingScheme cbps_att() { return {SchemeKind::CbpsAtt, 0.0}; }
  static WeightingScheme cbps_ate() { return {SchemeKind::CbpsAte, 0.0}; }

  bool has_alpha() const {
    return kind == SchemeKind::PowerPi || kind == SchemeKind::PowerOneMinusPi || kind == SchemeKind::CombinedPower;
  }

  /// Mirror image under t -> 1 - t: pi^a <-> (1 - pi)^a.
  WeightingScheme mirrored() const {
    switch (kind) {
      case SchemeKind::PowerPi: return power_rev(alpha);
      case SchemeKind::PowerOneMinusPi: return power(alpha);
      default: return *this;
    }
  }

  std::string name() const {
    std::ostringstream os;
    switch (kind) {
      case SchemeKind::MleUnit: return "mle";
      case SchemeKind::PowerPi: os << "power(" << alpha << ")"; break;
      case SchemeKind::PowerOneMinusPi: os << "power-rev(" << alpha << ")"; break;
      case SchemeKind::CombinedPower: os << "combined(" << alpha << ")"; break;
      case SchemeKind::CbpsAtt: return "cbps-att";
      case SchemeKind::CbpsAte: return "cbps-ate";
    }
    return os.str();
  }

  friend bool operator==(const WeightingScheme&, const WeightingScheme&) = default;

 private:
  static double checked(double a) {
    if (!(a >= 0.0) || !std::isfinite(a)) fail(ErrorCode::Domain, "weighting exponent alpha must be finite and >= 0");
    return a;
  }
};

inline void require_open_unit(double pi, const char* what) {
  if (!(pi > 0.0 && pi < 1.0)) fail(ErrorCode::Domain, std::string(what) + ": pi must lie in (0, 1)");
}

// pow with 0^0 = 1 and no derivative blow-up at alpha = 0.
inline double power_or_one(double base, double alpha) { return alpha == 0.0 ? 1.0 : std::pow(base, alpha); }

inline double omega(const WeightingScheme& s, double pi) {
  require_open_unit(pi, "omega");
  switch (s.kind) {
    case SchemeKind::MleUnit: return 1.0;
    case SchemeKind::PowerPi: return power_or_one(pi, s.alpha);
    case SchemeKind::PowerOneMinusPi: return power_or_one(1.0 - pi, s.alpha);
    case SchemeKind::CombinedPower: return power_or_one(pi, s.alpha) + power_or_one(1.0 - pi, s.alpha);
    case SchemeKind::CbpsAtt: return 1.0 / (1.0 - pi);
    case SchemeKind::CbpsAte: return 1.0 / (pi * (1.0 - pi));
  }
  return 1.0;
}

/// d omega / d pi.
inline double omega_derivative(const WeightingScheme& s, double pi) {
  require_open_unit(pi, "omega_derivative");
  const double a = s.alpha;
  switch (s.kind) {
    case SchemeKind::MleUnit: return 0.0;
    case SchemeKind::PowerPi: return a == 0.0 ? 0.0 : a * std::pow(pi, a - 1.0);
    case SchemeKind::PowerOneMinusPi: return a == 0.0 ? 0.0 : -a * std::pow(1.0 - pi, a - 1.0);
    case SchemeKind::CombinedPower:
      return a == 0.0 ? 0.0 : a * std::pow(pi, a - 1.0) - a * std::pow(1.0 - pi, a - 1.0);
    case SchemeKind::CbpsAtt: return 1.0 / ((1.0 - pi) * (1.0 - pi));
    case SchemeKind::CbpsAte: return -(1.0 - 2.0 * pi) / (pi * pi * (1.0 - pi) * (1.0 - pi));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Estimands

enum class EstimandKind { ATT, ATC, AteSeparate, AteCombined, AO };

inline std::string to_string(EstimandKind e) {
  switch (e) {
    case EstimandKind::ATT: return "att";
    case EstimandKind::ATC: return "atc";
    case EstimandKind::AteSeparate: return "ate-separate";
    case EstimandKind::AteCombined: return "ate-combined";
    case EstimandKind::AO: return "ao";
  }
  return "?";
}

inline EstimandKind parse_estimand(std::string_view s) {
  if (s == "att") return EstimandKind::ATT;
  if (s == "atc") return EstimandKind::ATC;
  if (s == "ate-separate" || s == "ate") return EstimandKind::AteSeparate;
  if (s == "ate-combined") return EstimandKind::AteCombined;
  if (s == "ao") return EstimandKind::AO;
  fail(ErrorCode::Validation, "unknown estimand '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Logistic link

/// Sigmoid of a linear predictor, clamped to [kProbClamp, 1 - kProbClamp].
inline double logistic(double eta) {
  double p;
  if (eta >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-eta));
  } else {
    const double e = std::exp(eta);
    p = e / (1.0 + e);
  }
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

inline double logistic_pi(const Eigen::VectorXd& beta, const Eigen::VectorXd& x_row) {
  if (beta.size() != x_row.size()) fail(ErrorCode::Validation, "logistic_pi: dimension mismatch");
  const double eta = x_row.dot(beta);
  if (!std::isfinite(eta)) fail(ErrorCode::NonFinite, "logistic_pi: non-finite linear predictor");
  return logistic(eta);
}

struct FittedProbabilities {
  Eigen::VectorXd pi;
  Eigen::Index n_clamped = 0;
};

inline FittedProbabilities fitted_probabilities(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  FittedProbabilities out{Eigen::VectorXd(x.rows()), 0};
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (!std::isfinite(eta[i])) fail(ErrorCode::NonFinite, "non-finite linear predictor at unit " + std::to_string(i));
    out.pi[i] = logistic(eta[i]);
    if (out.pi[i] <= kProbClamp || out.pi[i] >= 1.0 - kProbClamp) ++out.n_clamped;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvColumns {
  std::string treatment;
  std::optional<std::string> outcome;
  std::vector<std::string> covariates;  // empty: every other column
  bool intercept = true;
  bool allow_missing_outcome = false;  // blank outcomes allowed where the indicator is 1
};

inline constexpr const char* kInterceptName = "(Intercept)";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  for (auto& s : cells) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline Dataset load_csv(const std::string& path, const CsvColumns& spec) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Parse, path + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);

  auto find_col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::Validation, path + ": unknown column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t t_col = find_col(spec.treatment);
  const std::optional<std::size_t> y_col =
      spec.outcome ? std::optional<std::size_t>(find_col(*spec.outcome)) : std::nullopt;

  std::vector<std::string> cov_names = spec.covariates;
  if (cov_names.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j != t_col && (!y_col || j != *y_col)) cov_names.push_back(header[j]);
    }
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& c : cov_names) cov_cols.push_back(find_col(c));

  std::vector<double> xs, ts, ys;
  std::size_t row = 1;  // header is line 1
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      fail(ErrorCode::Parse, path + ": line " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                 " fields, expected " + std::to_string(header.size()));
    }
    const auto t = detail::parse_double(cells[t_col]);
    if (!t || (*t != 0.0 && *t != 1.0)) {
      fail(ErrorCode::Parse, path + ": line " + std::to_string(row) + ", column '" + header[t_col] + "': value '" +
                                 cells[t_col] + "' is not 0 or 1");
    }
    ts.push_back(*t);
    for (const auto j : cov_cols) {
      const auto v = detail::parse_double(cells[j]);
      if (!v || !std::isfinite(*v)) {
        fail(ErrorCode::Parse, path + ": line " + std::to_string(row) + ", column '" + header[j] +
                                   "': '" + cells[j] + "' is not a finite number");
      }
      xs.push_back(*v);
    }
    if (y_col) {
      const auto& cell = cells[*y_col];
      if (cell.empty() || cell == "NA") {
        if (!(spec.allow_missing_outcome && *t == 1.0)) {
          fail(ErrorCode::Parse, path + ": line " + std::to_string(row) + ", column '" + header[*y_col] +
                                     "': missing outcome");
        }
        ys.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        const auto v = detail::parse_double(cell);
        if (!v || !std::isfinite(*v)) {
          fail(ErrorCode::Parse, path + ": line " + std::to_string(row) + ", column '" + header[*y_col] +
                                     "': '" + cell + "' is not a finite number");
        }
        ys.push_back(*v);
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(ts.size());
  const auto p = static_cast<Eigen::Index>(cov_cols.size());
  const Eigen::Index offset = spec.intercept ? 1 : 0;
  Eigen::MatrixXd x(n, p + offset);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (spec.intercept) x(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) x(i, j + offset) = xs[static_cast<std::size_t>(i * p + j)];
  }
  std::vector<std::string> names;
  if (spec.intercept) names.emplace_back(kInterceptName);
  names.insert(names.end(), cov_names.begin(), cov_names.end());
  std::optional<Eigen::VectorXd> y;
  if (y_col) y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  return Dataset(std::move(x), Eigen::Map<Eigen::VectorXd>(ts.data(), n), std::move(y), std::move(names));
}

/// Writes the dataset back out; the intercept column is dropped and missing
/// outcomes become blank cells.
inline void write_csv(const Dataset& d, const std::string& path, const std::string& treatment = "t",
                      const std::string& outcome = "y") {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < d.k(); ++j) {
    if (d.names()[static_cast<std::size_t>(j)] != kInterceptName) cols.push_back(j);
  }
  out << treatment;
  if (d.has_outcome()) out << ',' << outcome;
  for (const auto j : cols) out << ',' << d.names()[static_cast<std::size_t>(j)];
  out << '\n';
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    out << (d.t()[i] == 1.0 ? "1" : "0");
    if (d.has_outcome()) {
      out << ',';
      if (!std::isnan(d.y()[i])) out << format_double(d.y()[i]);
    }
    for (const auto j : cols) out << ',' << format_double(d.x()(i, j));
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace nawt
