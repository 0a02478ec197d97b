#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mrgp/data.hpp"
#include "mrgp/errors.hpp"
#include "mrgp/evaluation.hpp"
#include "test_util.hpp"

using namespace mrgp;
using mrgp::testing::make_model;
using mrgp::testing::random_component;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Drift survives (it does not depend on the kernel scale) while every
// source of randomness is pushed to ~1e-10.
ComponentParams near_deterministic(int D, int Du, RngStream& rng) {
  ComponentParams c = random_component(D, Du, 4, rng);
  for (auto& k : c.kernels) k = RbfKernel(1e-10, k.lengthscales);
  for (auto& q : c.q_fM) q.chol = 1e-10 * Eigen::MatrixXd::Identity(4, 4);
  c.S0_chol *= 1e-6;
  c.Q_diag.setConstant(1e-12);
  return c;
}

}  // namespace

TEST(Metrics, PerfectPrediction) {
  RngStream rng(1);
  const Eigen::MatrixXd y = rng.normal_matrix(10, 2);
  const Metrics m = compute_metrics({y, Eigen::MatrixXd::Ones(10, 2)}, y);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_NEAR(m.nll, 2.0 * kHalfLog2Pi, 1e-14);
}

TEST(Metrics, ZeroPredictionOnStandardizedSeries) {
  RngStream rng(2);
  const Dataset d = normalize(make_dataset(Eigen::MatrixXd(500, 0), rng.normal_matrix(500, 1)));
  const Metrics m = compute_metrics({Eigen::MatrixXd::Zero(500, 1), Eigen::MatrixXd::Ones(500, 1)}, d.y);
  EXPECT_NEAR(m.rmse, 1.0, 1e-12);
  EXPECT_NEAR(m.nll, kHalfLog2Pi + 0.5, 1e-12);
}

TEST(Metrics, HandComputedRange) {
  Eigen::MatrixXd y(3, 1), mu(3, 1), var(3, 1);
  y << 1.0, 2.0, 4.0;
  mu << 0.0, 2.0, 3.0;
  var << 1.0, 4.0, 0.25;
  const Metrics all = compute_metrics({mu, var}, y);
  EXPECT_NEAR(all.rmse, std::sqrt(2.0 / 3.0), 1e-15);
  const double nll0 = 0.5 * 1.0 + kHalfLog2Pi;
  const double nll1 = 0.5 * std::log(4.0) + kHalfLog2Pi;
  const double nll2 = 0.5 * (4.0 + std::log(0.25)) + kHalfLog2Pi;
  EXPECT_NEAR(all.nll, (nll0 + nll1 + nll2) / 3.0, 1e-14);
  const Metrics tail = compute_metrics({mu, var}, y, 1, 2);
  EXPECT_NEAR(tail.rmse, std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(tail.nll, (nll1 + nll2) / 2.0, 1e-14);
  EXPECT_THROW(compute_metrics({mu, var}, y, 2, 2), DimensionMismatch);
  EXPECT_THROW(compute_metrics({mu, var}, Eigen::MatrixXd::Zero(4, 1)), DimensionMismatch);
}

TEST(Denormalize, MapsMomentsToRawUnits) {
  ColumnTransform t;
  t.mean = Eigen::Vector2d(1.0, -2.0);
  t.std = Eigen::Vector2d(2.0, 0.5);
  Eigen::MatrixXd mu(1, 2), var(1, 2);
  mu << 0.5, 2.0;
  var << 1.0, 4.0;
  const Prediction p = denormalize({mu, var}, t);
  EXPECT_DOUBLE_EQ(p.mean(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(p.mean(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(p.var(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(p.var(0, 1), 1.0);
}

TEST(Predict, DeterministicModelVarianceIsObservationNoise) {
  RngStream rng(3);
  const Model m = make_model({near_deterministic(2, 1, rng)}, 1, 1, 1.0, 0.3);
  const Dataset d = make_dataset(rng.normal_matrix(15, 1), rng.normal_matrix(15, 1));
  RngStream pr(4);
  const Prediction p = predict(m, d, 8, pr);
  EXPECT_LT((p.var.array() - 0.3).abs().maxCoeff(), 1e-8);
  EXPECT_GT(p.mean.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Predict, ComponentMeansAdd) {
  RngStream rng(5);
  const ComponentParams a = near_deterministic(1, 1, rng), b = near_deterministic(2, 1, rng);
  const Dataset d = make_dataset(rng.normal_matrix(12, 1), rng.normal_matrix(12, 1));
  RngStream r1(6), r2(6), r3(6);
  const Prediction pab = predict(make_model({a, b}, 1, 1), d, 4, r1);
  const Prediction pa = predict(make_model({a}, 1, 1), d, 4, r2);
  const Prediction pb = predict(make_model({b}, 1, 1), d, 4, r3);
  // The transition variance floor leaves a few 1e-5 of path noise.
  EXPECT_LT((pab.mean - pa.mean - pb.mean).cwiseAbs().maxCoeff(), 2e-4);
}

TEST(Predict, ReproducibleGivenStream) {
  RngStream rng(7);
  const Model m = make_model({random_component(1, 0, 3, rng)}, 0, 1);
  const Dataset d = make_dataset(Eigen::MatrixXd(10, 0), rng.normal_matrix(10, 1));
  RngStream a(8), b(8);
  const Prediction pa = predict(m, d, 5, a), pb = predict(m, d, 5, b);
  EXPECT_EQ(pa.mean, pb.mean);
  EXPECT_EQ(pa.var, pb.var);
  EXPECT_GT(pa.var.minCoeff(), 0.3);
}
