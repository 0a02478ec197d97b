#include <gtest/gtest.h>

#include <cmath>

#include "mrgp/errors.hpp"
#include "mrgp/gauss.hpp"

using namespace mrgp;

namespace {

const double kLog2Pi = std::log(2.0 * M_PI);

Eigen::MatrixXd random_spd(int n, RngStream& rng, double ridge = 0.5) {
  const Eigen::MatrixXd A = rng.normal_matrix(n, n);
  return A * A.transpose() + ridge * Eigen::MatrixXd::Identity(n, n);
}

// Dense-inverse evaluation of the Gaussian log density.
double logpdf_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& m, const Eigen::MatrixXd& S) {
  const Eigen::VectorXd r = x - m;
  return -0.5 * (x.size() * kLog2Pi + std::log(S.determinant()) + r.dot(S.inverse() * r));
}

}  // namespace

TEST(CholPsd, Identity) {
  EXPECT_TRUE(chol_psd(Eigen::MatrixXd::Identity(3, 3)).isApprox(Eigen::MatrixXd::Identity(3, 3)));
}

TEST(CholPsd, DiagonalSquareRoots) {
  Eigen::Matrix2d m;
  m << 4, 0, 0, 9;
  Eigen::Matrix2d want;
  want << 2, 0, 0, 3;
  EXPECT_LT((chol_psd(m) - want).norm(), 1e-14);
}

TEST(CholPsd, WishartReconstruction) {
  RngStream rng(11);
  const Eigen::MatrixXd X = rng.normal_matrix(5, 8);
  const Eigen::MatrixXd W = X * X.transpose();
  const Eigen::MatrixXd L = chol_psd(W);
  EXPECT_LT((L * L.transpose() - W).norm() / W.norm(), 1e-10);
  EXPECT_TRUE(L.isLowerTriangular());
}

TEST(CholPsd, IdempotentInEffect) {
  RngStream rng(12);
  const Eigen::MatrixXd L = chol_psd(random_spd(4, rng));
  const Eigen::MatrixXd L2 = chol_psd(L * L.transpose());
  EXPECT_LT((L2 - L).norm() / L.norm(), 1e-10);
}

TEST(CholPsd, SingularNeedsJitter) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(3, 3);
  const CholeskyFactor f = chol_psd_factor(m);
  EXPECT_GT(f.jitter, 0.0);
  EXPECT_LT((f.lower * f.lower.transpose() - m).norm(), 1e-2);
}

TEST(CholPsd, IndefiniteThrows) {
  Eigen::Matrix2d m;
  m << 1, 0, 0, -1;
  EXPECT_THROW(chol_psd(m), NotPositiveDefinite);
}

TEST(Gaussian, CovarianceIsSymmetrizedAndReconstructs) {
  RngStream rng(13);
  Eigen::MatrixXd S = random_spd(4, rng);
  S(0, 1) += 1e-13;  // slight asymmetry as from round-off
  const Gaussian g(Eigen::VectorXd::Zero(4), S);
  EXPECT_LT((g.cov() - g.cov().transpose()).norm(), 1e-12 * g.cov().norm());
  EXPECT_LT((g.chol() * g.chol().transpose() - g.cov()).norm() / g.cov().norm(), 1e-10);
}

TEST(MvnSample, ZeroCovarianceReturnsMean) {
  RngStream rng(1);
  const Eigen::Vector3d m(1, -2, 3);
  const Gaussian g(m, Eigen::Matrix3d::Zero());
  EXPECT_EQ(mvn_sample(g, rng), Eigen::VectorXd(m));
}

TEST(MvnSample, MeanWithinClt) {
  RngStream rng(2);
  const Gaussian g(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity());
  const int n = 100000;
  Eigen::Vector2d s = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) s += mvn_sample(g, rng);
  s /= n;
  EXPECT_LT(s.cwiseAbs().maxCoeff(), 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(MvnSample, Deterministic) {
  RngStream a(99), b(99);
  const Gaussian g(Eigen::Vector2d(1, 2), Eigen::Matrix2d::Identity());
  EXPECT_EQ(mvn_sample(g, a), mvn_sample(g, b));
}

TEST(MvnLogpdf, StandardNormalAtZero) {
  const Gaussian g(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_NEAR(mvn_logpdf(Eigen::VectorXd::Zero(1), g), -0.9189385332046727, 1e-14);
}

TEST(MvnLogpdf, AtMean) {
  RngStream rng(3);
  const Eigen::MatrixXd S = random_spd(3, rng);
  const Eigen::VectorXd m = rng.normal_vector(3);
  const Gaussian g(m, S);
  EXPECT_NEAR(mvn_logpdf(m, g), -0.5 * (3 * kLog2Pi + std::log(S.determinant())), 1e-12);
}

TEST(MvnLogpdf, MatchesDenseInverse) {
  RngStream rng(4);
  for (int k = 0; k < 10; ++k) {
    const Eigen::MatrixXd S = random_spd(3, rng);
    const Eigen::VectorXd m = rng.normal_vector(3), x = rng.normal_vector(3);
    EXPECT_NEAR(mvn_logpdf(x, Gaussian(m, S)), logpdf_oracle(x, m, S), 1e-10);
  }
}

TEST(MvnLogpdf, IntegratesToOne) {
  const double mu = 0.3, sd = 1.7;
  const Gaussian g(Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, sd * sd));
  const int n = 20000;
  const double lo = mu - 8 * sd, h = 16 * sd / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * std::exp(mvn_logpdf(Eigen::VectorXd::Constant(1, lo + i * h), g));
  }
  EXPECT_NEAR(s * h, 1.0, 1e-6);
}

TEST(KlGaussian, IdenticalIsZero) {
  RngStream rng(5);
  const Gaussian g(rng.normal_vector(3), random_spd(3, rng));
  EXPECT_NEAR(kl_gaussian(g, g), 0.0, 1e-10);
}

TEST(KlGaussian, ShiftedUnitVariance) {
  const Gaussian q(Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Identity(1, 1));
  const Gaussian p(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_NEAR(kl_gaussian(q, p), 0.5, 1e-14);
}

TEST(KlGaussian, NonNegativeOnRandomPairs) {
  RngStream rng(6);
  for (int k = 0; k < 50; ++k) {
    const Gaussian q(rng.normal_vector(3), random_spd(3, rng, 0.1));
    const Gaussian p(rng.normal_vector(3), random_spd(3, rng, 0.1));
    EXPECT_GE(kl_gaussian(q, p), -1e-12);
  }
}

TEST(KlGaussian, MatchesMonteCarlo) {
  RngStream rng(7);
  const Gaussian q(rng.normal_vector(4), random_spd(4, rng, 1.0));
  const Gaussian p(rng.normal_vector(4), random_spd(4, rng, 1.0));
  const int n = 1000000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = mvn_sample(q, rng);
    const double v = mvn_logpdf(x, q) - mvn_logpdf(x, p);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(kl_gaussian(q, p), mean, 3 * se);
}

TEST(AffineCondition, NoCoupling) {
  RngStream rng(8);
  const Gaussian prior(rng.normal_vector(2), random_spd(2, rng));
  const Eigen::VectorXd a = rng.normal_vector(2);
  const Eigen::MatrixXd A = random_spd(2, rng);
  const AffineConditioning r = affine_condition(prior, a, Eigen::MatrixXd::Zero(2, 2), A);
  EXPECT_LT((r.marginal_x.mean() - a).norm(), 1e-12);
  EXPECT_LT((r.marginal_x.cov() - A).norm(), 1e-12);
  const Gaussian back = r.y_given_x.given(rng.normal_vector(2));
  EXPECT_LT((back.mean() - prior.mean()).norm(), 1e-12);
  EXPECT_LT((back.cov() - prior.cov()).norm(), 1e-12);
}

TEST(AffineCondition, DeterministicShift) {
  const Eigen::Vector2d a(1, 2), b(-1, 0.5);
  Eigen::Matrix2d B;
  B << 2, 0.3, 0.3, 1;
  const AffineConditioning r =
      affine_condition(Gaussian(b, B), a, Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Zero());
  EXPECT_LT((r.marginal_x.mean() - (a + b)).norm(), 1e-12);
  EXPECT_LT((r.marginal_x.cov() - B).norm(), 1e-12);
}

TEST(AffineCondition, TwoFactorizationsAgree) {
  RngStream rng(9);
  const Gaussian prior(rng.normal_vector(2), random_spd(2, rng));
  const Eigen::VectorXd a = rng.normal_vector(2);
  const Eigen::MatrixXd F = rng.normal_matrix(2, 2), A = random_spd(2, rng);
  const AffineConditioning r = affine_condition(prior, a, F, A);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd x = rng.normal_vector(2), y = rng.normal_vector(2);
    const double lhs = logpdf_oracle(x, a + F * y, A) + logpdf_oracle(y, prior.mean(), prior.cov());
    const double rhs = mvn_logpdf(y, r.y_given_x.given(x)) + mvn_logpdf(x, r.marginal_x);
    EXPECT_NEAR(lhs, rhs, 1e-9);
  }
}

TEST(BlockInverse, Decoupled) {
  RngStream rng(10);
  const Eigen::MatrixXd A = random_spd(2, rng), D = random_spd(3, rng);
  const Eigen::MatrixXd inv = block_inverse(A, Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 2), D);
  EXPECT_LT((inv.topLeftCorner(2, 2) - A.inverse()).norm(), 1e-10);
  EXPECT_LT((inv.bottomRightCorner(3, 3) - D.inverse()).norm(), 1e-10);
  EXPECT_LT(inv.topRightCorner(2, 3).norm(), 1e-14);
}

TEST(BlockInverse, ScalarBlocks) {
  const Eigen::MatrixXd two = Eigen::MatrixXd::Constant(1, 1, 2.0), one = Eigen::MatrixXd::Constant(1, 1, 1.0);
  Eigen::Matrix2d want;
  want << 2.0 / 3, -1.0 / 3, -1.0 / 3, 2.0 / 3;
  EXPECT_LT((block_inverse(two, one, one, two) - want).norm(), 1e-14);
}

TEST(BlockInverse, MultiplyBack) {
  RngStream rng(11);
  const Eigen::MatrixXd M = random_spd(4, rng) + rng.normal_matrix(4, 4) * 0.1;
  const Eigen::MatrixXd inv = block_inverse(M.topLeftCorner(2, 2), M.topRightCorner(2, 2),
                                            M.bottomLeftCorner(2, 2), M.bottomRightCorner(2, 2));
  EXPECT_LT((inv * M - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-9);
}
