#include <gtest/gtest.h>

#include <cmath>

#include "mrgp/rng.hpp"

using mrgp::RngStream;

TEST(Rng, SameSeedSameSequence) {
  RngStream a(42, 3), b(42, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
}

TEST(Rng, StreamsDiffer) {
  RngStream a(42, 0), b(42, 1);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a() == b();
  EXPECT_EQ(equal, 0);
}

TEST(Rng, SplitIgnoresParentPosition) {
  RngStream a(7), b(7);
  for (int i = 0; i < 10; ++i) b();
  RngStream ca = a.split(5), cb = b.split(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(ca.normal(), cb.normal());
}

TEST(Rng, UniformMoments) {
  RngStream r(1);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 1e-3);
}

TEST(Rng, NormalMoments) {
  RngStream r(2);
  const Eigen::VectorXd z = r.normal_vector(200000);
  EXPECT_NEAR(z.mean(), 0.0, 4.0 / std::sqrt(200000.0));
  EXPECT_NEAR((z.array() - z.mean()).square().mean(), 1.0, 0.02);
}

TEST(Rng, UniformIntCoversInclusiveRange) {
  RngStream r(3);
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 40000; ++i) {
    const long k = r.uniform_int(2, 5);
    ASSERT_GE(k, 2);
    ASSERT_LE(k, 5);
    ++counts[k - 2];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}
