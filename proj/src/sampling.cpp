#include "mrgp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mrgp/errors.hpp"

namespace mrgp {

Eigen::MatrixXd LatentPath::mean() const {
  if (samples.empty()) return {};
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(samples.front().rows(), samples.front().cols());
  for (const auto& s : samples) m += s;
  return m / static_cast<double>(samples.size());
}

Eigen::MatrixXd LatentPath::dimension(int d) const {
  Eigen::MatrixXd out(num_samples(), length());
  for (Eigen::Index s = 0; s < num_samples(); ++s) out.row(s) = samples[static_cast<std::size_t>(s)].col(d).transpose();
  return out;
}

PathDraws PathDraws::sample(int S, int D, Eigen::Index M, int steps, RngStream& rng) {
  PathDraws p;
  p.z0 = rng.normal_matrix(S, D);
  for (int d = 0; d < D; ++d) p.f_eps.push_back(rng.normal_matrix(M, S));
  p.step_eps.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) p.step_eps.push_back(rng.normal_matrix(S, D));
  return p;
}

Eigen::MatrixXd transition_inputs(const Eigen::MatrixXd& u, long t0, int R, int B0, int B) {
  const long T = static_cast<long>(u.rows());
  Eigen::MatrixXd out(B0 + B, u.cols());
  for (int i = 0; i < B0 + B; ++i) {
    const long row = std::clamp(t0 + static_cast<long>(i - B0 - 1) * R, 0L, std::max(T - 1, 0L));
    if (u.cols() > 0) out.row(i) = u.row(row);
  }
  return out;
}

namespace {

void check_window(const ComponentDynamics& dyn, const Eigen::MatrixXd& u_window, int B, int B0,
                  const PathDraws& draws) {
  if (B < 1 || B0 < 0) throw InvalidConfig("window needs B >= 1 and B0 >= 0");
  if (u_window.rows() != B0 + B) throw DimensionMismatch("u_window must have B0 + B rows");
  if (u_window.cols() != dyn.params().input_dim()) throw DimensionMismatch("u_window has the wrong input dimension");
  if (static_cast<int>(draws.step_eps.size()) < B0 + B) throw DimensionMismatch("not enough step draws");
  if (draws.z0.cols() != dyn.dim()) throw DimensionMismatch("initial draws have the wrong dimension");
}

Eigen::VectorXd initial_state(const ComponentParams& c, const PathDraws& draws, Eigen::Index s) {
  return c.m0 + c.S0_chol.triangularView<Eigen::Lower>() * draws.z0.row(s).transpose();
}

}  // namespace

LatentPath simulate_fullmc(const ComponentDynamics& dyn, const Eigen::MatrixXd& u_window, const SdeStep& step,
                           int B, int B0, const PathDraws& draws) {
  check_window(dyn, u_window, B, B0, draws);
  const ComponentParams& c = dyn.params();
  const int D = c.dim;
  LatentPath path;
  path.scheme = Scheme::FullMC;
  for (Eigen::Index s = 0; s < draws.num_samples(); ++s) {
    std::vector<Eigen::VectorXd> weights;
    for (int d = 0; d < D; ++d) {
      const auto i = static_cast<std::size_t>(d);
      const Eigen::VectorXd f = c.q_fM[i].mean + c.q_fM[i].chol.triangularView<Eigen::Lower>() * draws.f_eps[i].col(s);
      weights.push_back(dyn.gp(d).solve(f));
    }
    Eigen::VectorXd x = initial_state(c, draws, s);
    Eigen::MatrixXd out(B, D);
    Eigen::VectorXd next(D);
    for (int t = 0; t < B0 + B; ++t) {
      const Eigen::VectorXd in = kernel_input(x, u_window.row(t).transpose());
      for (int d = 0; d < D; ++d) {
        const SparseGp& gp = dyn.gp(d);
        const Eigen::VectorXd kx = gp.cross(in);
        const double kk = gp.nystrom(kx);
        const double mean = step.step * step.cross * kx.dot(weights[static_cast<std::size_t>(d)]);
        const double fvar = std::max(step.state * gp.kernel().variance - step.cross * step.cross * kk, 0.0);
        const double var = step.step * step.step * fvar + step.noise * c.Q_diag(d);
        next(d) = x(d) + mean + std::sqrt(var) * draws.step_eps[static_cast<std::size_t>(t)](s, d);
      }
      x = next;
      if (t >= B0) out.row(t - B0) = x.transpose();
    }
    path.samples.push_back(std::move(out));
  }
  return path;
}

LatentPath simulate_prssm(const ComponentDynamics& dyn, const Eigen::MatrixXd& u_window, const SdeStep& step,
                          int B, int B0, const PathDraws& draws) {
  check_window(dyn, u_window, B, B0, draws);
  const ComponentParams& c = dyn.params();
  const int D = c.dim;
  LatentPath path;
  path.scheme = Scheme::PRSSM;
  for (Eigen::Index s = 0; s < draws.num_samples(); ++s) {
    Eigen::VectorXd x = initial_state(c, draws, s);
    Eigen::MatrixXd out(B, D);
    Eigen::VectorXd next(D);
    for (int t = 0; t < B0 + B; ++t) {
      const Eigen::VectorXd in = kernel_input(x, u_window.row(t).transpose());
      for (int d = 0; d < D; ++d) {
        const SparseGp& gp = dyn.gp(d);
        const Eigen::VectorXd kx = gp.cross(in);
        const double kk = gp.nystrom(kx);
        const double c2 = step.cross * step.cross;
        const double mean = step.step * step.cross * kx.dot(dyn.alpha(d));
        const double fvar = std::max(step.state * gp.kernel().variance - c2 * kk + c2 * kx.dot(dyn.beta(d) * kx),
                                     step.state * kVarianceFloor);
        const double var = step.step * step.step * fvar + step.noise * c.Q_diag(d);
        next(d) = x(d) + mean + std::sqrt(var) * draws.step_eps[static_cast<std::size_t>(t)](s, d);
      }
      x = next;
      if (t >= B0) out.row(t - B0) = x.transpose();
    }
    path.samples.push_back(std::move(out));
  }
  return path;
}

LatentPath sample_seq_fullmc(const ComponentParams& c, const Eigen::MatrixXd& u_window, double step, double dt,
                             int B, int B0, int S, RngStream& rng) {
  if (S < 1) throw InvalidConfig("need at least one sample");
  const ComponentDynamics dyn(c);
  const PathDraws draws = PathDraws::sample(S, c.dim, c.inducing.size(), B0 + B, rng);
  return simulate_fullmc(dyn, u_window, SdeStep::make(c, step, dt), B, B0, draws);
}

LatentPath sample_seq_prssm(const ComponentParams& c, const Eigen::MatrixXd& u_window, double step, double dt,
                            int B, int B0, int S, RngStream& rng) {
  if (S < 1) throw InvalidConfig("need at least one sample");
  const ComponentDynamics dyn(c);
  const PathDraws draws = PathDraws::sample(S, c.dim, c.inducing.size(), B0 + B, rng);
  return simulate_prssm(dyn, u_window, SdeStep::make(c, step, dt), B, B0, draws);
}

AnalyticState AnalyticState::start(const Eigen::VectorXd& x0) {
  AnalyticState st;
  st.x_hist.push_back(x0);
  st.dims.resize(static_cast<std::size_t>(x0.size()));
  return st;
}

namespace {

// Shared part of both recursions. `cross_term(i, t)` returns the
// f_M-induced covariance between increments i and t, `mu_shift` the mean
// increment at the newest state, `own_var` the variance added on the
// diagonal (Q + conditional GP variance).
template <class CrossTerm>
void extend_dimension(AnalyticState::PerDim& pd, double mu_tilde, double diag, CrossTerm cross_term, double& mu_hat,
                      double& sigma_hat) {
  const auto t = static_cast<Eigen::Index>(pd.mu_tilde.size());
  Eigen::VectorXd col(t);
  for (Eigen::Index i = 0; i < t; ++i) col(i) = cross_term(i);
  if (t == 0) {
    mu_hat = mu_tilde;
    sigma_hat = diag;
  } else {
    const Eigen::VectorXd cvec = pd.chol.triangularView<Eigen::Lower>().solve(col);
    mu_hat = mu_tilde + cvec.dot(pd.w);
    sigma_hat = diag - cvec.squaredNorm();
    if (!(sigma_hat > 0.0)) throw Singular("analytic recursion: conditional variance is not positive");
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(t + 1, t + 1);
    L.topLeftCorner(t, t) = pd.chol;
    L.block(t, 0, 1, t) = cvec.transpose();
    pd.chol = std::move(L);
  }
  if (t == 0) {
    if (!(sigma_hat > 0.0)) throw Singular("analytic recursion: conditional variance is not positive");
    pd.chol = Eigen::MatrixXd::Constant(1, 1, 0.0);
  }
  pd.chol(t, t) = std::sqrt(sigma_hat);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(t + 1, t + 1);
  S.topLeftCorner(t, t) = pd.S_tilde;
  S.block(0, t, t, 1) = col;
  S.block(t, 0, 1, t) = col.transpose();
  S(t, t) = diag;
  pd.S_tilde = std::move(S);
  pd.mu_tilde.push_back(mu_tilde);
}

template <class Prepare>
Gaussian recursion_step(AnalyticState& state, const ComponentDynamics& dyn, const Eigen::VectorXd& u, RngStream& rng,
                        Prepare prepare) {
  const ComponentParams& c = dyn.params();
  const Eigen::VectorXd& x = state.x_hist.back();
  if (x.size() != c.dim || u.size() != c.input_dim()) throw DimensionMismatch("analytic_step: input size");
  const Eigen::VectorXd in = kernel_input(x, u);
  Eigen::VectorXd mean(c.dim), var(c.dim);
  for (int d = 0; d < c.dim; ++d) {
    auto& pd = state.dims[static_cast<std::size_t>(d)];
    const Eigen::VectorXd kx = dyn.gp(d).cross(in);
    double mu_hat = 0.0, sigma_hat = 0.0;
    prepare(d, pd, kx, x(d), mu_hat, sigma_hat);
    pd.kx.push_back(kx);
    mean(d) = mu_hat;
    var(d) = sigma_hat;
  }
  const Eigen::VectorXd z = rng.normal_vector(c.dim);
  const Eigen::VectorXd xn = mean.array() + var.array().sqrt() * z.array();
  for (int d = 0; d < c.dim; ++d) {
    auto& pd = state.dims[static_cast<std::size_t>(d)];
    const auto t = pd.w.size();
    Eigen::VectorXd w(t + 1);
    w.head(t) = pd.w;
    w(t) = (xn(d) - mean(d)) / std::sqrt(var(d));
    pd.w = std::move(w);
  }
  state.x_hist.push_back(xn);
  return Gaussian(std::move(mean), var.asDiagonal().toDenseMatrix());
}

}  // namespace

Gaussian analytic_step(AnalyticState& state, const ComponentDynamics& dyn, const Eigen::VectorXd& u, RngStream& rng) {
  const ComponentParams& c = dyn.params();
  return recursion_step(state, dyn, u, rng,
                        [&](int d, AnalyticState::PerDim& pd, const Eigen::VectorXd& kx, double xd, double& mu_hat,
                            double& sigma_hat) {
                          const Eigen::VectorXd bk = dyn.beta(d) * kx;  // K^-1 S_M K^-1 k_t
                          const double mu_tilde = xd + kx.dot(dyn.alpha(d));
                          const double diag = bk.dot(kx) + c.Q_diag(d) + std::max(dyn.gp(d).conditional_var(kx), 0.0);
                          extend_dimension(
                              pd, mu_tilde, diag, [&](Eigen::Index i) { return pd.kx[static_cast<std::size_t>(i)].dot(bk); },
                              mu_hat, sigma_hat);
                        });
}

Gaussian prior_analytic_step(AnalyticState& state, const ComponentDynamics& dyn, const Eigen::VectorXd& u,
                             RngStream& rng) {
  const ComponentParams& c = dyn.params();
  return recursion_step(state, dyn, u, rng,
                        [&](int d, AnalyticState::PerDim& pd, const Eigen::VectorXd& kx, double xd, double& mu_hat,
                            double& sigma_hat) {
                          // Under the prior the f_M part of the diagonal cancels the
                          // subtracted Nystrom term, leaving Q + k(x, x).
                          const SparseGp& gp = dyn.gp(d);
                          const Eigen::VectorXd a = gp.solve(kx);
                          const double diag = c.Q_diag(d) + gp.kernel().variance;
                          extend_dimension(
                              pd, xd, diag, [&](Eigen::Index i) { return pd.kx[static_cast<std::size_t>(i)].dot(a); },
                              mu_hat, sigma_hat);
                        });
}

LatentPath sample_seq_analytic(const ComponentDynamics& dyn, const Eigen::MatrixXd& u_window, int B, int B0, int S,
                               RngStream& rng) {
  if (S < 1 || B < 1 || B0 < 0) throw InvalidConfig("sample_seq_analytic: invalid sizes");
  if (u_window.rows() != B0 + B) throw DimensionMismatch("u_window must have B0 + B rows");
  const ComponentParams& c = dyn.params();
  const Gaussian q0 = dyn.q_x0();
  LatentPath path;
  path.scheme = Scheme::Analytic;
  for (int s = 0; s < S; ++s) {
    AnalyticState st = AnalyticState::start(mvn_sample(q0, rng));
    Eigen::MatrixXd out(B, c.dim);
    for (int t = 0; t < B0 + B; ++t) {
      analytic_step(st, dyn, u_window.row(t).transpose(), rng);
      if (t >= B0) out.row(t - B0) = st.x_hist.back().transpose();
    }
    path.samples.push_back(std::move(out));
  }
  return path;
}

long draw_window_start(long T, int R, int B, RngStream& rng) {
  if (R < 1 || B < 1) throw InvalidConfig("window needs R >= 1 and B >= 1");
  const long need = static_cast<long>(R) * B;
  if (T < need) {
    std::ostringstream os;
    os << "window of " << B << " rows at stride " << R << " needs T >= " << need << ", got T = " << T;
    throw WindowTooLong(os.str(), need);
  }
  return rng.uniform_int(0, T - need);
}

Eigen::MatrixXd dilated_rows(const Eigen::MatrixXd& series, long start, int R, int B) {
  Eigen::MatrixXd out(B, series.cols());
  for (int b = 0; b < B; ++b) {
    const long row = start + static_cast<long>(b) * R;
    if (row < 0 || row >= series.rows()) throw WindowTooLong("dilated window leaves the series", start + static_cast<long>(B) * R);
    out.row(b) = series.row(row);
  }
  return out;
}

DilatedWindow sample_dilated(const Eigen::MatrixXd& series, int R, int B, RngStream& rng) {
  DilatedWindow w;
  w.start = draw_window_start(static_cast<long>(series.rows()), R, B, rng);
  w.rows = dilated_rows(series, w.start, R, B);
  return w;
}

}  // namespace mrgp
