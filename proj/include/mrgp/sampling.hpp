#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mrgp/model.hpp"
#include "mrgp/rng.hpp"

namespace mrgp {

enum class Scheme { FullMC, PRSSM, Analytic };

// Simulated latent states of one component over a window. samples[s] is a
// B x D_l matrix; row b corresponds to data row start_index + b * stride.
struct LatentPath {
  std::vector<Eigen::MatrixXd> samples;
  long start_index = 0;
  int stride = 1;
  Scheme scheme = Scheme::FullMC;

  Eigen::Index num_samples() const { return static_cast<Eigen::Index>(samples.size()); }
  Eigen::Index length() const { return samples.empty() ? 0 : samples.front().rows(); }
  Eigen::MatrixXd mean() const;
  // Values of latent dimension d: S x B.
  Eigen::MatrixXd dimension(int d) const;
};

// Standard-normal draws that fully determine a simulated window. Drawing
// them up front lets the differentiable ELBO and the plain simulation share
// the same noise.
struct PathDraws {
  Eigen::MatrixXd z0;                   // S x D, initial state
  std::vector<Eigen::MatrixXd> f_eps;   // per latent dimension, M x S
  std::vector<Eigen::MatrixXd> step_eps;  // per transition, S x D

  Eigen::Index num_samples() const { return z0.rows(); }
  static PathDraws sample(int S, int D, Eigen::Index M, int steps, RngStream& rng);
};

// Inputs used by the B0 + B transitions of a window whose retained states
// sit at rows t0, t0 + R, ..., t0 + (B - 1) R. State i of the simulation
// (i = 0 is the initial state) belongs to row t0 + (i - B0 - 1) R, and the
// transition leaving state i uses u at that row, clamped into [0, T - 1].
Eigen::MatrixXd transition_inputs(const Eigen::MatrixXd& u, long t0, int R, int B0, int B);

// Full Monte Carlo: one f_M per sample shared by every step.
LatentPath simulate_fullmc(const ComponentDynamics& dyn, const Eigen::MatrixXd& u_window, const SdeStep& step,
                           int B, int B0, const PathDraws& draws);
// PR-SSM: f marginalized independently at every step.
LatentPath simulate_prssm(const ComponentDynamics& dyn, const Eigen::MatrixXd& u_window, const SdeStep& step,
                          int B, int B0, const PathDraws& draws);

LatentPath sample_seq_fullmc(const ComponentParams& c, const Eigen::MatrixXd& u_window, double step, double dt,
                             int B, int B0, int S, RngStream& rng);
LatentPath sample_seq_prssm(const ComponentParams& c, const Eigen::MatrixXd& u_window, double step, double dt,
                            int B, int B0, int S, RngStream& rng);

// History of the analytic recursion for one sample path. Latent dimensions
// evolve with independent GPs, so every dimension keeps its own mu_tilde,
// S_tilde and factor; the kernel input couples them through x.
struct AnalyticState {
  struct PerDim {
    std::vector<double> mu_tilde;        // mu_tilde_0 .. mu_tilde_{t-1}
    Eigen::MatrixXd S_tilde;             // t x t
    Eigen::MatrixXd chol;                // lower factor of S_tilde
    Eigen::VectorXd w;                   // chol^-1 (x_{1:t} - mu_tilde_{0:t-1})
    std::vector<Eigen::VectorXd> kx;     // k(Z, input_i) for the history
  };

  std::vector<Eigen::VectorXd> x_hist;  // x_0 .. x_t
  std::vector<PerDim> dims;

  static AnalyticState start(const Eigen::VectorXd& x0);
  int steps() const { return static_cast<int>(x_hist.size()) - 1; }
};

// Draw x_t given x_0 .. x_{t-1} with f_M marginalized under q(f_M); u is the
// input at time t-1. Returns the conditional it sampled from.
Gaussian analytic_step(AnalyticState& state, const ComponentDynamics& dyn, const Eigen::VectorXd& u, RngStream& rng);
// Same recursion under the GP prior p(f_M) = N(0, K_MM).
Gaussian prior_analytic_step(AnalyticState& state, const ComponentDynamics& dyn, const Eigen::VectorXd& u,
                             RngStream& rng);

LatentPath sample_seq_analytic(const ComponentDynamics& dyn, const Eigen::MatrixXd& u_window, int B, int B0, int S,
                               RngStream& rng);

struct DilatedWindow {
  long start = 0;
  Eigen::MatrixXd rows;
};

// Rows t0, t0 + R, ..., t0 + (B - 1) R with t0 uniform on [0, T - R B].
DilatedWindow sample_dilated(const Eigen::MatrixXd& series, int R, int B, RngStream& rng);
long draw_window_start(long T, int R, int B, RngStream& rng);
Eigen::MatrixXd dilated_rows(const Eigen::MatrixXd& series, long start, int R, int B);

}  // namespace mrgp
