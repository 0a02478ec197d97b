#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mrgp/errors.hpp"
#include "mrgp/inference.hpp"
#include "test_util.hpp"

using namespace mrgp;
using mrgp::testing::make_model;
using mrgp::testing::random_component;

namespace {

// KL(N(m, S) || N(0, P)) written out directly.
double kl_to_zero_mean(const Eigen::VectorXd& m, const Eigen::MatrixXd& S, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd Pinv = P.inverse();
  return 0.5 * ((Pinv * S).trace() + m.dot(Pinv * m) - static_cast<double>(m.size()) +
                std::log(P.determinant() / S.determinant()));
}

PathDraws zero_draws(int S, int D, Eigen::Index M, int steps) {
  PathDraws d;
  d.z0 = Eigen::MatrixXd::Zero(S, D);
  for (int i = 0; i < D; ++i) d.f_eps.push_back(Eigen::MatrixXd::Zero(M, S));
  for (int i = 0; i < steps; ++i) d.step_eps.push_back(Eigen::MatrixXd::Zero(S, D));
  return d;
}

Dataset noise_data(long T, int Du, int Dy, RngStream& rng) {
  return make_dataset(rng.normal_matrix(T, Du), rng.normal_matrix(T, Dy));
}

}  // namespace

TEST(KlTerms, ZeroWhenPosteriorEqualsPrior) {
  RngStream rng(1);
  ComponentParams c = random_component(2, 1, 3, rng);
  Model m = make_model({c}, 1, 1);
  const ComponentDynamics dyn(m.components[0]);
  for (int d = 0; d < 2; ++d) {
    m.components[0].q_fM[static_cast<std::size_t>(d)].mean.setZero();
    m.components[0].q_fM[static_cast<std::size_t>(d)].chol = dyn.p_fM(d).chol();
  }
  m.components[0].m0 = m.prior_x0[0].mean();
  m.components[0].S0_chol = m.prior_x0[0].chol();
  const KlTerms kl = kl_terms(m);
  EXPECT_NEAR(kl.x0, 0.0, 1e-10);
  EXPECT_NEAR(kl.fM, 0.0, 1e-8);
}

TEST(KlTerms, SumsOverComponentsAndDimensions) {
  RngStream rng(2);
  const Model m = make_model({random_component(2, 0, 3, rng), random_component(1, 0, 4, rng, 5)}, 0, 1);
  double x0 = 0.0, fM = 0.0;
  for (int l = 0; l < 2; ++l) {
    const ComponentParams& c = m.components[static_cast<std::size_t>(l)];
    x0 += kl_to_zero_mean(c.m0, c.S0(), Eigen::MatrixXd::Identity(c.dim, c.dim));
    for (int d = 0; d < c.dim; ++d) {
      const auto& q = c.q_fM[static_cast<std::size_t>(d)];
      const Eigen::MatrixXd K = ComponentDynamics(c).p_fM(d).cov();
      fM += kl_to_zero_mean(q.mean, q.chol * q.chol.transpose(), K);
    }
  }
  const KlTerms kl = kl_terms(m);
  EXPECT_NEAR(kl.x0, x0, 1e-10);
  EXPECT_NEAR(kl.fM, fM, 1e-6 * std::abs(fM));
}

TEST(PartialResidual, SubtractsEveryOtherComponent) {
  RngStream rng(3);
  const Dataset data = noise_data(6, 0, 2, rng);
  CachedLatents cache(3);
  const Eigen::MatrixXd p0 = rng.normal_matrix(6, 3), p1 = rng.normal_matrix(6, 2), p2 = rng.normal_matrix(6, 4);
  cache.set(0, p0, 5);
  cache.set(1, p1, 5);
  cache.set(2, p2, 5);
  EXPECT_LT((partial_residual(data, cache, 1) - (data.y - p0.leftCols(2) - p2.leftCols(2))).norm(), 1e-14);
  EXPECT_LT((partial_residual(data, cache, 0) - (data.y - p1 - p2.leftCols(2))).norm(), 1e-14);
}

TEST(PartialResidual, SingleComponentIsTheData) {
  RngStream rng(4);
  const Dataset data = noise_data(5, 0, 1, rng);
  EXPECT_EQ(partial_residual(data, CachedLatents(1), 0), data.y);
}

TEST(PartialResidual, MissingCacheThrows) {
  RngStream rng(5);
  const Dataset data = noise_data(5, 0, 1, rng);
  CachedLatents cache(2);
  cache.set(1, rng.normal_matrix(5, 1), 1);
  EXPECT_NO_THROW(partial_residual(data, cache, 0));
  EXPECT_THROW(partial_residual(data, cache, 1), MissingCache);
}

TEST(ElboMinibatch, WindowTooLongCarriesMinimumLength) {
  RngStream rng(6);
  const Model m = make_model({random_component(1, 0, 3, rng)}, 0, 1);
  const Dataset data = noise_data(20, 0, 1, rng);
  try {
    elbo_minibatch(m, data, std::nullopt, CachedLatents(1), BatchSpec{3, 7, 1}, 2, rng);
    FAIL() << "expected WindowTooLong";
  } catch (const WindowTooLong& e) {
    EXPECT_EQ(e.min_length(), 21);
  }
}

// With the other component's cached path equal to its simulated sample the
// per-component bound on the residual equals the joint bound.
TEST(ElboWithDraws, ComponentBoundMatchesJointWhenCacheIsExact) {
  RngStream rng(7);
  const Model m = make_model({random_component(2, 1, 3, rng), random_component(1, 1, 3, rng)}, 1, 1);
  const long T = 9;
  const Dataset data = noise_data(T, 1, 1, rng);
  const BatchSpec batch{1, static_cast<int>(T), 0};
  const ElboDraws draws = draw_elbo_noise(m, T, std::nullopt, batch, 1, rng);
  ASSERT_EQ(draws.start, 0);
  const ElboEstimate joint = elbo_with_draws(m, data, data.y, std::nullopt, batch, draws);

  const Eigen::MatrixXd u_win = transition_inputs(data.u, 0, 1, 0, static_cast<int>(T));
  const ComponentParams& c0 = m.components[0];
  const LatentPath p0 = simulate_fullmc(ComponentDynamics(c0), u_win, SdeStep::make(c0, m.dt, m.dt),
                                        static_cast<int>(T), 0, draws.paths[0]);
  CachedLatents cache(2);
  cache.set(0, p0.samples[0], 1);
  ElboDraws own;
  own.start = 0;
  own.paths = {draws.paths[1]};
  const ElboEstimate part = elbo_with_draws(m, data, partial_residual(data, cache, 1), 1, batch, own);
  EXPECT_NEAR(part.value, joint.value, 1e-10 * std::abs(joint.value));
}

// Start averaging: a frozen latent path makes every row's likelihood fixed,
// and the mean of the single-row estimates over all starts must equal the
// full-sequence sum.
TEST(ElboWithDraws, AverageOverStartsRecoversFullSum) {
  RngStream rng(8);
  ComponentParams c = random_component(2, 0, 3, rng);
  for (auto& q : c.q_fM) q.mean.setZero();
  Model m = make_model({c}, 0, 1, 1.0, 0.4);
  const long T = 8;
  const Dataset data = noise_data(T, 0, 1, rng);
  double oracle = 0.0;
  for (long t = 0; t < T; ++t) {
    const double r = data.y(t, 0) - c.m0(0);
    oracle += -0.5 * (r * r / 0.4 + std::log(2.0 * std::numbers::pi * 0.4));
  }
  double avg = 0.0;
  for (long s = 0; s < T; ++s) {
    ElboDraws d;
    d.start = s;
    d.paths = {zero_draws(1, 2, 3, 3)};
    avg += elbo_with_draws(m, data, data.y, std::nullopt, BatchSpec{1, 1, 2}, d).loglik_term;
  }
  EXPECT_NEAR(avg / static_cast<double>(T), oracle, 1e-10);
  ElboDraws full;
  full.paths = {zero_draws(1, 2, 3, static_cast<int>(T))};
  EXPECT_NEAR(elbo_with_draws(m, data, data.y, std::nullopt, BatchSpec{1, static_cast<int>(T), 0}, full).loglik_term,
              oracle, 1e-10);
}

TEST(ElboWithDraws, LargeNoiseFlattensLikelihood) {
  RngStream rng(9);
  const Model a0 = make_model({random_component(1, 0, 3, rng)}, 0, 1);
  const Model b0 = make_model({random_component(1, 0, 3, rng)}, 0, 1);
  const Dataset data = noise_data(10, 0, 1, rng);
  const BatchSpec batch{1, 10, 0};
  const ElboDraws draws = draw_elbo_noise(a0, 10, std::nullopt, batch, 4, rng);
  double prev = 1e300;
  for (double omega : {1e1, 1e3, 1e5}) {
    Model a = a0, b = b0;
    a.emission.obs_noise_diag.setConstant(omega);
    b.emission.obs_noise_diag.setConstant(omega);
    const double gap = std::abs(elbo_with_draws(a, data, data.y, std::nullopt, batch, draws).loglik_term -
                                elbo_with_draws(b, data, data.y, std::nullopt, batch, draws).loglik_term);
    EXPECT_LT(gap, prev / 50.0);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(ElboMinibatch, VarianceShrinksWithSamples) {
  RngStream rng(10);
  const Model m = make_model({random_component(2, 0, 3, rng)}, 0, 1);
  const Dataset data = noise_data(12, 0, 1, rng);
  const BatchSpec batch{2, 6, 2};  // T = R B pins the start to 0
  auto variance = [&](int S) {
    RngStream r(100 + S);
    Eigen::VectorXd v(400);
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v(i) = elbo_minibatch(m, data, std::nullopt, CachedLatents(1), batch, S, r).loglik_term;
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
  };
  const double ratio = variance(1) / variance(16);
  EXPECT_GT(ratio, 8.0);
  EXPECT_LT(ratio, 32.0);
}

TEST(ElboValueAndGrad, MatchesPlainEstimateAndRespectsMask) {
  RngStream rng(11);
  const Model m = make_model({random_component(1, 1, 3, rng), random_component(1, 1, 3, rng, 2)}, 1, 1);
  const Dataset data = noise_data(12, 1, 1, rng);
  const ParamLayout layout(m);
  const Eigen::VectorXd theta = pack(m, layout);
  const BatchSpec batch{2, 4, 1};
  const ElboDraws draws = draw_elbo_noise(m, 12, 1, batch, 3, rng);
  CachedLatents cache(2);
  cache.set(0, rng.normal_matrix(12, 1), 1);
  const Eigen::MatrixXd targets = partial_residual(data, cache, 1);
  const std::vector<char> mask = layout.trainable_mask(1);
  const ElboGradient g = elbo_value_and_grad(layout, theta, m, data, targets, 1, batch, draws, mask);
  const ElboEstimate plain = elbo_with_draws(unpack(theta, layout, m), data, targets, 1, batch, draws);
  EXPECT_NEAR(g.estimate.value, plain.value, 1e-9 * std::abs(plain.value));
  for (std::size_t i = 0; i < layout.blocks().size(); ++i) {
    const ParamBlock& b = layout.blocks()[i];
    if (!mask[i]) EXPECT_EQ(g.grad.segment(b.offset, b.size).norm(), 0.0) << b.name;
  }
  EXPECT_GT(g.grad.segment(layout.block("c1.d0.mM").offset, 3).norm(), 0.0);
}
