#pragma once

#include <memory>
#include <mutex>

#include <Eigen/Dense>

#include "mrgp/rng.hpp"

namespace mrgp {

// Diagonal regularization ladder for Cholesky factorization. The first
// attempt uses no jitter; afterwards base, base*growth, ... up to
// base*growth^max_retries.
struct Jitter {
  double base = 1e-8;
  double growth = 10.0;
  int max_retries = 5;

  void validate() const;
};

struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;  // diagonal jitter that made the factorization succeed
};

// (m + m^T) / 2
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

// Factor a symmetric positive (semi-)definite matrix, walking the jitter
// ladder until LLT succeeds. Throws NotPositiveDefinite when it never does.
CholeskyFactor chol_psd_factor(const Eigen::MatrixXd& m, const Jitter& jitter = {});
Eigen::MatrixXd chol_psd(const Eigen::MatrixXd& m, const Jitter& jitter = {});

// 2 * sum(log(diag(L)))
double logdet_from_chol(const Eigen::MatrixXd& lower);

// Multivariate normal with a lazily computed, shared Cholesky factor. The
// mean and covariance never change after construction, so copies may share
// the cache and the type is safe to read from several threads.
class Gaussian {
 public:
  Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov, Jitter jitter = {});
  static Gaussian from_chol(Eigen::VectorXd mean, const Eigen::MatrixXd& lower);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::MatrixXd& chol() const;
  Eigen::Index dim() const { return mean_.size(); }

 private:
  struct FactorCache {
    std::once_flag once;
    Eigen::MatrixXd lower;
  };

  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Jitter jitter_;
  std::shared_ptr<FactorCache> cache_;
};

Eigen::VectorXd mvn_sample(const Gaussian& g, RngStream& rng);
double mvn_logpdf(const Eigen::VectorXd& x, const Gaussian& g);
double kl_gaussian(const Gaussian& q, const Gaussian& p);

// p(y | x) = N(y | offset + gain * x, cov)
struct GaussianConditional {
  Eigen::MatrixXd gain;
  Eigen::VectorXd offset;
  Eigen::MatrixXd cov;

  Gaussian given(const Eigen::VectorXd& x) const;
};

struct AffineConditioning {
  Gaussian marginal_x;
  GaussianConditional y_given_x;
};

// Given p(x | y) = N(x | a + F y, A) and p(y) = prior_y, return p(x) and the
// reversed conditional p(y | x).
AffineConditioning affine_condition(const Gaussian& prior_y, const Eigen::VectorXd& a,
                                    const Eigen::MatrixXd& F, const Eigen::MatrixXd& A);

// Inverse of [[A, B], [C, D]] through the Schur complement D - C A^-1 B.
Eigen::MatrixXd block_inverse(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Eigen::MatrixXd& C, const Eigen::MatrixXd& D);

}  // namespace mrgp
