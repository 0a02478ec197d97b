#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "mrgp/data.hpp"
#include "mrgp/errors.hpp"

using namespace mrgp;

namespace {

PendulumConfig deterministic_pendulum() {
  PendulumConfig cfg;
  cfg.diffusion = 0.0;
  cfg.obs_noise = 0.0;
  cfg.subsample = 1;
  return cfg;
}

// Index of the largest periodogram ordinate over k = 1 .. T/2.
long dominant_bin(const Eigen::VectorXd& x) {
  const long T = x.size();
  const Eigen::VectorXd c = x.array() - x.mean();
  long best = 1;
  double best_p = -1.0;
  for (long k = 1; k <= T / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (long t = 0; t < T; ++t)
      acc += c(t) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(T));
    if (std::norm(acc) > best_p) {
      best_p = std::norm(acc);
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST(Pendulum, EnergyDecaysWithDamping) {
  PendulumConfig cfg = deterministic_pendulum();
  cfg.T_out = 20000;
  RngStream rng(1);
  const PendulumPath p = simulate_pendulum(cfg, rng);
  // Compare one second apart; the symplectic step only wobbles the energy
  // within a period.
  const long gap = 1000;
  for (long i = 0; i + gap < p.theta.size(); i += 250) {
    EXPECT_LT(pendulum_energy(cfg, p.theta(i + gap), p.omega(i + gap)), pendulum_energy(cfg, p.theta(i), p.omega(i)))
        << "at step " << i;
  }
}

TEST(Pendulum, SmallAnglePeriod) {
  PendulumConfig cfg = deterministic_pendulum();
  cfg.damping = 0.0;
  cfg.theta0 = 0.05;
  cfg.T_out = 20000;
  RngStream rng(2);
  const PendulumPath p = simulate_pendulum(cfg, rng);
  std::vector<double> ups;
  for (long i = 0; i + 1 < p.theta.size(); ++i)
    if (p.theta(i) < 0.0 && p.theta(i + 1) >= 0.0)
      ups.push_back((static_cast<double>(i) + p.theta(i) / (p.theta(i) - p.theta(i + 1))) * cfg.dt_sim);
  ASSERT_GE(ups.size(), 5u);
  const double period = (ups.back() - ups.front()) / static_cast<double>(ups.size() - 1);
  const double want = 2.0 * std::numbers::pi / std::sqrt(cfg.g_over_l);
  EXPECT_NEAR(period, want, 0.02 * want);
}

TEST(Pendulum, ThinningMatchesSubsampledRun) {
  PendulumConfig fine;
  fine.subsample = 1;
  fine.T_out = 400;
  PendulumConfig coarse = fine;
  coarse.subsample = 2;
  coarse.T_out = 200;
  RngStream r1(3), r2(3);
  const Dataset a = gen_pendulum(fine, r1), b = gen_pendulum(coarse, r2);
  for (long k = 0; k < 200; ++k) EXPECT_EQ(a.y(2 * k, 0), b.y(k, 0));
  EXPECT_DOUBLE_EQ(b.dt, 2.0 * fine.dt_sim);
}

TEST(Pendulum, ReproducibleAndSeedSensitive) {
  PendulumConfig cfg;
  cfg.T_out = 300;
  RngStream a(4), b(4), c(5);
  const Dataset da = gen_pendulum(cfg, a), db = gen_pendulum(cfg, b), dc = gen_pendulum(cfg, c);
  EXPECT_EQ(da.y, db.y);
  EXPECT_NE(da.y, dc.y);
  EXPECT_EQ(da.input_dim(), 0);
}

TEST(Pendulum, RejectsCoarseStep) {
  PendulumConfig cfg;
  cfg.dt_sim = 0.1;
  RngStream rng(6);
  EXPECT_THROW(gen_pendulum(cfg, rng), InvalidConfig);
}

TEST(MultiScale, ObservationIsTruthPlusNoise) {
  MultiScaleConfig cfg;
  cfg.T = 1000;
  RngStream rng(7);
  const MultiScaleData d = gen_multiscale(cfg, rng);
  EXPECT_EQ(d.data.y.rows(), 1000);
  EXPECT_EQ(d.data.u.cols(), 2);
  EXPECT_LT((d.data.y.col(0) - d.truth.col(0) - d.truth.col(1) - d.noise).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MultiScale, ZeroAmplitudeRemovesChannel) {
  MultiScaleConfig cfg;
  cfg.T = 800;
  cfg.fast.amplitude = 0.0;
  RngStream r1(8);
  const MultiScaleData no_fast = gen_multiscale(cfg, r1);
  EXPECT_EQ(no_fast.truth.col(0).cwiseAbs().maxCoeff(), 0.0);
  cfg.fast.amplitude = 0.5;
  cfg.slow.amplitude = 0.0;
  cfg.obs_noise = 0.0;
  RngStream r2(8);
  const MultiScaleData no_slow = gen_multiscale(cfg, r2);
  EXPECT_EQ(no_slow.truth.col(1).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LT((no_slow.data.y.col(0) - no_slow.truth.col(0)).norm(), 1e-14);
}

TEST(MultiScale, SpectralPeaksAtConfiguredPeriods) {
  MultiScaleConfig cfg;
  cfg.T = 3600;
  RngStream rng(9);
  const MultiScaleData d = gen_multiscale(cfg, rng);
  const double T = static_cast<double>(cfg.T);
  EXPECT_NEAR(static_cast<double>(dominant_bin(d.truth.col(0))), T / cfg.fast.period, 2.0);
  EXPECT_NEAR(static_cast<double>(dominant_bin(d.truth.col(1))), T / cfg.slow.period, 1.0);
}

TEST(MultiScale, ConfigFromJson) {
  const MultiScaleConfig cfg = multiscale_config_from_json(R"({"T": 500, "fast": {"period": 10}})");
  EXPECT_EQ(cfg.T, 500);
  EXPECT_EQ(cfg.fast.period, 10.0);
  EXPECT_EQ(cfg.slow.period, 600.0);
  EXPECT_THROW(multiscale_config_from_json(R"({"bogus": 1})"), InvalidConfig);
  EXPECT_THROW(pendulum_config_from_json(R"({"T_out": "x"})"), InvalidConfig);
}

TEST(Normalize, ZeroMeanUnitPopulationVariance) {
  RngStream rng(10);
  const Dataset raw = make_dataset(3.0 + 2.0 * rng.normal_matrix(50, 2).array(), -1.0 + 0.5 * rng.normal_matrix(50, 1).array());
  const Dataset n = normalize(raw);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(n.u.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR((n.u.col(j).array() - n.u.col(j).mean()).square().mean(), 1.0, 1e-12);
  }
  EXPECT_NEAR(n.y.mean(), 0.0, 1e-12);
  EXPECT_LT((n.normalization.y.invert(n.y) - raw.y).norm(), 1e-12);
  EXPECT_LT((n.normalization.u.invert(n.u) - raw.u).norm(), 1e-12);
}

TEST(Normalize, ConstantColumnWarnsAndKeepsScale) {
  Eigen::MatrixXd y(4, 1);
  y << 2.0, 2.0, 2.0, 2.0;
  std::vector<std::string> warnings;
  const Dataset n = normalize(make_dataset(Eigen::MatrixXd(4, 0), y), &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(n.normalization.y.std(0), 1.0);
  EXPECT_EQ(n.y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Normalize, TrainingTransformAppliesToHeldOutRows) {
  RngStream rng(11);
  const Dataset raw = make_dataset(rng.normal_matrix(20, 1), rng.normal_matrix(20, 1));
  const Normalization fit = fit_normalization(head_rows(raw, 10));
  const Dataset all = apply_normalization(raw, fit);
  EXPECT_LT((all.y - fit.y.apply(raw.y)).norm(), 1e-14);
  EXPECT_NEAR(all.y.topRows(10).mean(), 0.0, 1e-12);
  EXPECT_THROW(apply_normalization(make_dataset(Eigen::MatrixXd(20, 0), raw.y), fit), DimensionMismatch);
}

TEST(Csv, RoundTripIsExact) {
  RngStream rng(12);
  Dataset d = make_dataset(rng.normal_matrix(7, 2), rng.normal_matrix(7, 1), 0.1);
  const Dataset back = parse_csv(to_csv(d));
  EXPECT_EQ(back.u, d.u);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.t, d.t);
  EXPECT_DOUBLE_EQ(back.dt, 0.1);
}

TEST(Csv, MissingColumnNamed) {
  try {
    parse_csv("t,u1,u3,y1\n0,1,2,3\n1,1,2,3\n");
    FAIL() << "expected MalformedHeader";
  } catch (const MalformedHeader& e) {
    EXPECT_EQ(e.column(), "u2");
  }
  EXPECT_THROW(parse_csv("time,y1\n0,1\n1,2\n"), MalformedHeader);
  EXPECT_THROW(parse_csv("t,u1\n0,1\n1,2\n"), MalformedHeader);
}

TEST(Csv, IrregularSpacingReportsRow) {
  try {
    parse_csv("t,y1\n0,1\n1,2\n2,3\n3.5,4\n4.5,5\n");
    FAIL() << "expected NonUniformSpacing";
  } catch (const NonUniformSpacing& e) {
    EXPECT_EQ(e.row(), 3);
  }
}

TEST(Csv, NonFiniteCellReportsRow) {
  try {
    parse_csv("t,y1\n0,1\n1,nan\n2,3\n");
    FAIL() << "expected NonFiniteValue";
  } catch (const NonFiniteValue& e) {
    EXPECT_EQ(e.row(), 1);
  }
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9, 1e22}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.1), "0.1");
}
