#pragma once

#include <Eigen/Dense>

#include "mrgp/gauss.hpp"

namespace mrgp {

// Squared-exponential kernel with one lengthscale per input dimension:
//   k(x, x') = variance * exp(-0.5 * sum_d ((x_d - x'_d) / l_d)^2)
struct RbfKernel {
  double variance = 0.25;
  Eigen::VectorXd lengthscales;

  RbfKernel() = default;
  RbfKernel(double variance, Eigen::VectorXd lengthscales);

  Eigen::Index input_dim() const { return lengthscales.size(); }
  void validate() const;
  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const;
};

double kernel_eval(const RbfKernel& k, const Eigen::VectorXd& x, const Eigen::VectorXd& x2);

// Pairwise kernel values between the rows of X and the rows of X2.
Eigen::MatrixXd cross_gram(const RbfKernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2);
// Kernel values between one point and every row of X.
Eigen::VectorXd cross_vector(const RbfKernel& k, const Eigen::MatrixXd& X, const Eigen::VectorXd& x);

// Gram matrix of the rows of X with jitter on the diagonal: at least
// jitter.base, more if the ladder needed it to factorize. The returned
// matrix is always factorizable by chol_psd without further jitter.
CholeskyFactor gram_factor(const RbfKernel& k, const Eigen::MatrixXd& X, const Jitter& jitter = {});
Eigen::MatrixXd gram(const RbfKernel& k, const Eigen::MatrixXd& X, const Jitter& jitter = {});

// Inducing inputs, one row per inducing point.
struct InducingSet {
  Eigen::MatrixXd inputs;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index input_dim() const { return inputs.cols(); }
  void validate() const;
};

// q(f_M) = N(mean, chol * chol^T)
struct SparsePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd chol;

  Eigen::MatrixXd cov() const;
  void validate() const;
};

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

inline constexpr double kVarianceFloor = 1e-12;

// Precomputed factorization of K_MM for one kernel and inducing set. All
// conditional moment evaluations go through this.
class SparseGp {
 public:
  SparseGp(const RbfKernel& kernel, const InducingSet& inducing, const Jitter& jitter = {});

  const RbfKernel& kernel() const { return kernel_; }
  const Eigen::MatrixXd& inducing_inputs() const { return Z_; }
  const Eigen::MatrixXd& gram() const { return Kmm_; }
  const Eigen::MatrixXd& gram_chol() const { return L_; }
  Eigen::Index size() const { return Z_.rows(); }

  Eigen::VectorXd cross(const Eigen::VectorXd& x) const;  // K_Mx
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;  // K_MM^-1 v

  // K_xM K_MM^-1 f and K_xx - K_xM K_MM^-1 K_Mx (unclamped).
  double conditional_mean(const Eigen::VectorXd& kx, const Eigen::VectorXd& weights) const {
    return kx.dot(weights);
  }
  double conditional_var(const Eigen::VectorXd& kx) const;
  // kx^T K_MM^-1 kx
  double nystrom(const Eigen::VectorXd& kx) const;

 private:
  RbfKernel kernel_;
  Eigen::MatrixXd Z_;
  Eigen::MatrixXd Kmm_;
  Eigen::MatrixXd L_;
};

// Moments of f(x) under q(f_M), with f_M marginalized:
//   mean = K_xM K^-1 m_M
//   var  = K_xx - K_xM K^-1 K_Mx + K_xM K^-1 S_M K^-1 K_Mx   (floored at 1e-12)
Moments sparse_conditional(const RbfKernel& k, const InducingSet& Z, const SparsePosterior& q,
                           const Eigen::VectorXd& x, const Jitter& jitter = {});

// Moments of f(x) given fixed inducing outputs f_M (variance floored at 0).
Moments conditional_given_fM(const RbfKernel& k, const InducingSet& Z, const Eigen::VectorXd& f_M,
                             const Eigen::VectorXd& x, const Jitter& jitter = {});

enum class InputKind { Inducing, State };

// Exponents of the step used when rescaling kernel entries that involve
// state inputs. The defaults give k/step for inducing-state pairs and
// k/step^2 for state-state pairs; anything else is only useful as a
// deliberately wrong mapping in negative-control checks.
struct SdeRescaling {
  double cross_power = 1.0;
  double state_power = 2.0;
};

// Kernel of the SDE drift GP, obtained by rescaling a base kernel with the
// Euler-Maruyama step length.
class SdeKernelView {
 public:
  SdeKernelView(const RbfKernel& base, double step, SdeRescaling rescaling = {});

  const RbfKernel& base() const { return base_; }
  double step() const { return step_; }
  double scale(InputKind a, InputKind b) const;
  double operator()(const Eigen::VectorXd& x, InputKind kx, const Eigen::VectorXd& x2,
                    InputKind kx2) const;

 private:
  RbfKernel base_;
  double step_;
  double cross_scale_;
  double state_scale_;
};

SdeKernelView sde_rescaled(const RbfKernel& k, double step, SdeRescaling rescaling = {});

}  // namespace mrgp
