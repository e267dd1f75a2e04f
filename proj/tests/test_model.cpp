#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "nawt/model.hpp"

namespace fs = std::filesystem;
using namespace nawt;

namespace {

std::string fixture(const char* name) { return std::string(NAWT_FIXTURE_DIR) + "/" + name; }

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no nawt::Error thrown";
  return ErrorCode::Io;
}

}  // namespace

TEST(Logistic, ZeroBetaGivesHalf) {
  const Eigen::VectorXd beta = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd x(3);
  x << 1.0, -4.0, 17.0;
  EXPECT_DOUBLE_EQ(logistic_pi(beta, x), 0.5);
}

TEST(Logistic, OddsThreeToOne) {
  Eigen::VectorXd beta(1), x(1);
  beta << std::log(3.0);
  x << 1.0;
  EXPECT_NEAR(logistic_pi(beta, x), 0.75, 1e-15);
}

TEST(Logistic, SaturationIsClamped) {
  EXPECT_EQ(logistic(50.0), 1.0 - kProbClamp);
  EXPECT_EQ(logistic(-50.0), kProbClamp);
}

TEST(Logistic, DimensionMismatch) {
  EXPECT_EQ(code_of([] { logistic_pi(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)); }), ErrorCode::Validation);
}

TEST(Omega, TableValues) {
  EXPECT_DOUBLE_EQ(omega(WeightingScheme::power(2.0), 0.5), 0.25);
  EXPECT_DOUBLE_EQ(omega(WeightingScheme::cbps_att(), 0.5), 2.0);
  EXPECT_NEAR(omega(WeightingScheme::combined(2.0), 0.3), 0.58, 1e-15);
  EXPECT_DOUBLE_EQ(omega(WeightingScheme::mle(), 0.9), 1.0);
  EXPECT_NEAR(omega(WeightingScheme::power_rev(3.0), 0.2), 0.512, 1e-15);
  EXPECT_DOUBLE_EQ(omega(WeightingScheme::cbps_ate(), 0.5), 4.0);
  EXPECT_DOUBLE_EQ(omega(WeightingScheme::power(0.0), 0.7), 1.0);
}

TEST(Omega, DerivativeMatchesFiniteDifference) {
  const WeightingScheme schemes[] = {WeightingScheme::mle(),         WeightingScheme::power(2.5),
                                     WeightingScheme::power_rev(1.5), WeightingScheme::combined(2.0),
                                     WeightingScheme::cbps_att(),     WeightingScheme::cbps_ate()};
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  for (const auto& s : schemes) {
    for (int rep = 0; rep < 25; ++rep) {
      const double p = u(gen), h = 1e-6;
      const double fd = (omega(s, p + h) - omega(s, p - h)) / (2.0 * h);
      EXPECT_NEAR(omega_derivative(s, p), fd, 1e-6 * (1.0 + std::abs(fd))) << s.name() << " pi=" << p;
    }
  }
}

TEST(Omega, RejectsBoundaryAndNegativeAlpha) {
  EXPECT_EQ(code_of([] { omega(WeightingScheme::mle(), 1.0); }), ErrorCode::Domain);
  EXPECT_EQ(code_of([] { WeightingScheme::power(-1.0); }), ErrorCode::Domain);
}

TEST(Scheme, MirrorAndNames) {
  EXPECT_EQ(WeightingScheme::power(2.0).mirrored(), WeightingScheme::power_rev(2.0));
  EXPECT_EQ(WeightingScheme::power_rev(1.0).mirrored(), WeightingScheme::power(1.0));
  EXPECT_EQ(WeightingScheme::cbps_att().mirrored(), WeightingScheme::cbps_att());
  EXPECT_EQ(WeightingScheme::power(2.0).name(), "power(2)");
  EXPECT_EQ(WeightingScheme::combined(2.5).name(), "combined(2.5)");
  EXPECT_EQ(WeightingScheme::cbps_ate().name(), "cbps-ate");
}

TEST(Estimand, ParseAndPrint) {
  for (auto e : {EstimandKind::ATT, EstimandKind::ATC, EstimandKind::AteSeparate, EstimandKind::AteCombined,
                 EstimandKind::AO}) {
    EXPECT_EQ(parse_estimand(to_string(e)), e);
  }
  EXPECT_EQ(parse_estimand("ate"), EstimandKind::AteSeparate);
  EXPECT_EQ(code_of([] { parse_estimand("att2"); }), ErrorCode::Validation);
}

TEST(Dataset, Validation) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  Eigen::VectorXd t(3);
  t << 1, 0, 2;
  EXPECT_EQ(code_of([&] { Dataset(x, t, std::nullopt, {"c"}); }), ErrorCode::Validation);
  t << 1, 1, 1;
  EXPECT_EQ(code_of([&] { Dataset(x, t, std::nullopt, {"c"}); }), ErrorCode::EmptyClass);
  t << 1, 0, 0;
  EXPECT_EQ(code_of([&] { Dataset(x, t, std::nullopt, {"a", "b"}); }), ErrorCode::Validation);
  x(1, 0) = std::nan("");
  EXPECT_EQ(code_of([&] { Dataset(x, t, std::nullopt, {"c"}); }), ErrorCode::NonFinite);
}

TEST(Dataset, RelabelAndSubset) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 0.1, 1, 0.2, 1, 0.3, 1, 0.4;
  Eigen::VectorXd t(4), y(4);
  t << 1, 1, 0, 0;
  y << 3, 5, 1, 2;
  const Dataset d(x, t, y, {"(Intercept)", "z"});
  const auto r = d.relabeled();
  EXPECT_EQ(r.n_treated(), 2);
  EXPECT_EQ(r.t(), (Eigen::VectorXd(4) << 0, 0, 1, 1).finished());
  const auto s = d.subset({3, 0, 0});
  EXPECT_EQ(s.n(), 3);
  EXPECT_DOUBLE_EQ(s.x()(0, 1), 0.4);
  EXPECT_DOUBLE_EQ(s.y()[2], 3.0);
  EXPECT_EQ(d.column_index("z"), 1);
  EXPECT_EQ(code_of([&] { d.column_index("w"); }), ErrorCode::Validation);
}

TEST(Csv, FourRowFixture) {
  const auto d = load_csv(fixture("four_rows.csv"), {"t", "y", {}, true, false});
  EXPECT_EQ(d.n(), 4);
  EXPECT_EQ(d.n_treated(), 2);
  EXPECT_EQ(d.k(), 2);
  EXPECT_EQ(d.names()[0], kInterceptName);
  EXPECT_DOUBLE_EQ(d.y()[1], 5.0);
  EXPECT_DOUBLE_EQ(d.x()(3, 1), 2.0);
}

TEST(Csv, BadTreatmentNamesRow) {
  try {
    load_csv(fixture("bad_treatment.csv"), {"t", "y", {}, true, false});
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Parse);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'2'"), std::string::npos) << msg;
  }
}

TEST(Csv, MissingOutcomesAllowedOnlyForFlaggedRows) {
  const auto d = load_csv(fixture("ao_blanks.csv"), {"m", "y", {}, true, true});
  EXPECT_EQ(d.n(), 5);
  EXPECT_EQ(d.n_treated(), 2);
  EXPECT_TRUE(std::isnan(d.y()[0]));
  EXPECT_DOUBLE_EQ(d.y()[2], 4.0);
  EXPECT_EQ(code_of([] { load_csv(fixture("ao_blanks.csv"), {"m", "y", {}, true, false}); }), ErrorCode::Parse);
}

TEST(Csv, UnknownColumnAndMissingFile) {
  try {
    load_csv(fixture("four_rows.csv"), {"t", "y", {"x9"}, true, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Validation);
    EXPECT_NE(std::string(e.what()).find("x9"), std::string::npos);
  }
  EXPECT_EQ(code_of([] { load_csv(fixture("nope.csv"), {"t", "y", {}, true, false}); }), ErrorCode::Io);
}

TEST(Csv, WriteThenReadRoundTrips) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd;
  const Eigen::Index n = 50;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd t(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = nd(gen);
    x(i, 2) = nd(gen) * 1e-7;
    t[i] = i % 3 == 0 ? 1.0 : 0.0;
    y[i] = i % 3 == 0 ? std::nan("") : nd(gen) * 1e5;
  }
  const Dataset d(x, t, y, {kInterceptName, "a", "b"});
  const auto path = (fs::temp_directory_path() / "nawt_roundtrip.csv").string();
  write_csv(d, path, "m", "y");
  const auto back = load_csv(path, {"m", "y", {}, true, true});
  std::remove(path.c_str());
  EXPECT_EQ(back.x(), d.x());
  EXPECT_EQ(back.t(), d.t());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(y[i])) {
      EXPECT_TRUE(std::isnan(back.y()[i]));
    } else {
      EXPECT_EQ(back.y()[i], y[i]);
    }
  }
}

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int rep = 0; rep < 5000; ++rep) {
    const std::uint64_t b = bits(gen);
    double v;
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    const auto s = format_double(v);
    EXPECT_EQ(detail::parse_double(s).value(), v) << s;
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}
