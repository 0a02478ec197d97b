#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mrgp/gauss.hpp"
#include "mrgp/kernel.hpp"
#include "mrgp/rng.hpp"

namespace mrgp {

// All model and variational parameters of one latent component. Parameters
// are stored in the discrete-time form that applies to one step at the
// component's own resolution, i.e. a step of resolution * dt.
struct ComponentParams {
  int dim = 0;
  int resolution = 1;
  InducingSet inducing;                  // inputs are [x, u]
  std::vector<RbfKernel> kernels;        // one per latent dimension
  std::vector<SparsePosterior> q_fM;     // one per latent dimension
  Eigen::VectorXd m0;
  Eigen::MatrixXd S0_chol;
  Eigen::VectorXd Q_diag;

  int input_dim() const { return static_cast<int>(inducing.input_dim()) - dim; }
  Eigen::MatrixXd S0() const;
  void validate(int exo_dim) const;
};

struct EmissionParams {
  int out_dim = 1;
  Eigen::VectorXd obs_noise_diag;  // Omega, shared by all components
};

// Per-column affine transform, value_normalized = (value - mean) / std.
struct ColumnTransform {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  static ColumnTransform identity(Eigen::Index n);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& X) const;
  bool empty() const { return mean.size() == 0; }
};

struct Normalization {
  ColumnTransform u;
  ColumnTransform y;
};

struct Model {
  std::vector<ComponentParams> components;
  EmissionParams emission;
  double dt = 1.0;
  int input_dim = 0;                 // D_u
  std::vector<Gaussian> prior_x0;    // p(x_0) per component
  std::optional<Normalization> normalization;

  int num_components() const { return static_cast<int>(components.size()); }
  int total_dim() const;
  void validate() const;
};

struct Dataset {
  Eigen::VectorXd t;
  Eigen::MatrixXd u;  // T x D_u (D_u may be 0)
  Eigen::MatrixXd y;  // T x D_y
  double dt = 1.0;
  Normalization normalization;  // transform already applied to u and y

  Eigen::Index length() const { return y.rows(); }
  Eigen::Index input_dim() const { return u.cols(); }
  Eigen::Index output_dim() const { return y.cols(); }
  void validate() const;
};

// Build a dataset with t = 0, dt, 2 dt, ... and identity normalization.
Dataset make_dataset(Eigen::MatrixXd u, Eigen::MatrixXd y, double dt = 1.0);

// Initial values applied to freshly created components.
struct InitConfig {
  int num_inducing = 50;
  double inducing_range = 2.0;      // zeta ~ U(-range, range)
  double inducing_mean_std = 0.05;  // m_M entries ~ N(0, std^2)
  double inducing_cov_std = 0.01;   // S_M = std^2 I
  double process_noise = 0.002 * 0.002;
  double obs_noise = 1.0;
  double kernel_variance = 0.25;
  double lengthscale = 2.0;
  double x0_std = 0.1;              // S_0 = std^2 I, m_0 = 0
};

ComponentParams init_component(int dim, int exo_dim, int resolution, const InitConfig& cfg, RngStream& rng);

struct ComponentSpec {
  int resolution = 1;
  int dim = 1;
};

Model init_model(const std::vector<ComponentSpec>& specs, int exo_dim, int out_dim, double dt,
                 const InitConfig& cfg, RngStream& rng);

// Sum over components of the first D_y coordinates of each latent state.
Eigen::VectorXd emission_mean(const Model& model, const std::vector<Eigen::VectorXd>& x);
double emission_logpdf(const Model& model, const Eigen::VectorXd& y, const std::vector<Eigen::VectorXd>& x);

// Kernel input [x, u].
Eigen::VectorXd kernel_input(const Eigen::VectorXd& x, const Eigen::VectorXd& u);

// Precomputed per-dimension factorizations for one component. Every
// transition and sampling routine goes through this so the O(M^3) work is
// done once per parameter value.
class ComponentDynamics {
 public:
  explicit ComponentDynamics(const ComponentParams& c, const Jitter& jitter = {});

  const ComponentParams& params() const { return c_; }
  int dim() const { return c_.dim; }
  Eigen::Index num_inducing() const { return c_.inducing.size(); }
  const SparseGp& gp(int d) const { return gps_[static_cast<std::size_t>(d)]; }
  // K_MM^-1 m_M and K_MM^-1 S_M K_MM^-1 for latent dimension d.
  const Eigen::VectorXd& alpha(int d) const { return alpha_[static_cast<std::size_t>(d)]; }
  const Eigen::MatrixXd& beta(int d) const { return beta_[static_cast<std::size_t>(d)]; }

  // f_d(input) moments with f_M marginalized under q(f_M).
  Moments marginal(int d, const Eigen::VectorXd& input) const;
  // f_d(input) moments given weights K_MM^-1 f_M.
  Moments given_weights(int d, const Eigen::VectorXd& input, const Eigen::VectorXd& weights) const;

  Gaussian q_x0() const;
  Gaussian q_fM(int d) const;
  Gaussian p_fM(int d) const;

  Gaussian gpssm_transition(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  Gaussian prior_transition_given_fM(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                     const std::vector<Eigen::VectorXd>& f_M) const;
  Gaussian sde_transition(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double step, double dt,
                          SdeRescaling rescaling = {}) const;

 private:
  ComponentParams c_;
  std::vector<SparseGp> gps_;
  std::vector<Eigen::VectorXd> alpha_;
  std::vector<Eigen::MatrixXd> beta_;
};

// Reference step at which the stored discrete-time parameters apply.
inline double reference_step(const ComponentParams& c, double dt) { return c.resolution * dt; }

// Scale factors of one Euler-Maruyama step of the SDE derived from a
// component. With kx = k(x, Z) of the stored kernel and weights
// K_MM^-1 f_M, the increment given f_M has
//   mean = step * cross * kx . weights
//   var  = step^2 * (state * k(x, x) - cross^2 * kx^T K_MM^-1 kx) + noise * Q.
struct SdeStep {
  double step = 1.0;
  double cross = 1.0;
  double state = 1.0;
  double noise = 1.0;

  static SdeStep make(const ComponentParams& c, double step, double dt, SdeRescaling rescaling = {});
};

// x_{t+1} | x_t with f marginalized: N(x + mu(x), Q + Sigma(x)), diagonal.
Gaussian gpssm_transition(const ComponentParams& c, const Eigen::VectorXd& x, const Eigen::VectorXd& u);

// Euler-Maruyama transition of the equivalent SDE with step `step`. The SDE
// drift kernel and diffusion are derived from the stored parameters at the
// reference step resolution * dt: Q_sde = Q / ref and the kernel view of
// sde_rescaled(k, ref). Then
//   mean = x + step * mu_sde(x),  var = step^2 * Sigma_sde(x) + step * Q_sde.
Gaussian sde_transition(const ComponentParams& c, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                        double step, double dt, SdeRescaling rescaling = {});

Gaussian prior_transition_given_fM(const ComponentParams& c, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                   const std::vector<Eigen::VectorXd>& f_M);

}  // namespace mrgp
