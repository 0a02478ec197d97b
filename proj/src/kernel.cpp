#include "mrgp/kernel.hpp"

#include <cmath>
#include <sstream>

#include "mrgp/errors.hpp"

namespace mrgp {

RbfKernel::RbfKernel(double v, Eigen::VectorXd ls) : variance(v), lengthscales(std::move(ls)) {}

void RbfKernel::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw InvalidConfig("RbfKernel: variance must be positive and finite");
  if (lengthscales.size() == 0) throw InvalidConfig("RbfKernel: no lengthscales");
  if (!(lengthscales.array() > 0.0).all() || !lengthscales.allFinite())
    throw InvalidConfig("RbfKernel: lengthscales must be positive and finite");
}

double RbfKernel::operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& x2) const {
  if (x.size() != lengthscales.size() || x2.size() != lengthscales.size()) {
    std::ostringstream os;
    os << "RbfKernel: inputs of size " << x.size() << " and " << x2.size() << " for "
       << lengthscales.size() << " lengthscales";
    throw DimensionMismatch(os.str());
  }
  const double r2 = ((x - x2).array() / lengthscales.array()).square().sum();
  return variance * std::exp(-0.5 * r2);
}

double kernel_eval(const RbfKernel& k, const Eigen::VectorXd& x, const Eigen::VectorXd& x2) {
  return k(x, x2);
}

Eigen::MatrixXd cross_gram(const RbfKernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2) {
  if (X.cols() != k.input_dim() || X2.cols() != k.input_dim())
    throw DimensionMismatch("cross_gram: input columns do not match the lengthscales");
  const Eigen::ArrayXd inv_ls = k.lengthscales.array().inverse();
  const Eigen::MatrixXd A = X * inv_ls.matrix().asDiagonal();
  const Eigen::MatrixXd B = X2 * inv_ls.matrix().asDiagonal();
  Eigen::MatrixXd K(X.rows(), X2.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      K(i, j) = k.variance * std::exp(-0.5 * (A.row(i) - B.row(j)).squaredNorm());
    }
  }
  return K;
}

Eigen::VectorXd cross_vector(const RbfKernel& k, const Eigen::MatrixXd& X, const Eigen::VectorXd& x) {
  if (X.cols() != k.input_dim() || x.size() != k.input_dim())
    throw DimensionMismatch("cross_vector: input size does not match the lengthscales");
  Eigen::VectorXd out(X.rows());
  const Eigen::ArrayXd inv_ls = k.lengthscales.array().inverse();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double r2 = ((X.row(i).transpose() - x).array() * inv_ls).square().sum();
    out(i) = k.variance * std::exp(-0.5 * r2);
  }
  return out;
}

CholeskyFactor gram_factor(const RbfKernel& k, const Eigen::MatrixXd& X, const Jitter& jitter) {
  Eigen::MatrixXd K = cross_gram(k, X, X);
  K.diagonal().array() += jitter.base;
  CholeskyFactor f = chol_psd_factor(K, jitter);
  f.jitter += jitter.base;
  return f;
}

Eigen::MatrixXd gram(const RbfKernel& k, const Eigen::MatrixXd& X, const Jitter& jitter) {
  const CholeskyFactor f = gram_factor(k, X, jitter);
  Eigen::MatrixXd K = cross_gram(k, X, X);
  K.diagonal().array() += f.jitter;
  return K;
}

void InducingSet::validate() const {
  if (inputs.rows() < 1) throw InvalidConfig("InducingSet: need at least one inducing point");
  if (!inputs.allFinite()) throw InvalidConfig("InducingSet: inputs must be finite");
}

Eigen::MatrixXd SparsePosterior::cov() const {
  const Eigen::MatrixXd L = chol.triangularView<Eigen::Lower>();
  return L * L.transpose();
}

void SparsePosterior::validate() const {
  if (chol.rows() != mean.size() || chol.cols() != mean.size())
    throw DimensionMismatch("SparsePosterior: chol does not match the mean size");
  if (!(chol.diagonal().array() > 0.0).all())
    throw InvalidConfig("SparsePosterior: chol diagonal must be strictly positive");
}

SparseGp::SparseGp(const RbfKernel& kernel, const InducingSet& inducing, const Jitter& jitter)
    : kernel_(kernel), Z_(inducing.inputs) {
  if (Z_.cols() != kernel_.input_dim())
    throw DimensionMismatch("SparseGp: inducing inputs do not match the kernel input size");
  const CholeskyFactor f = gram_factor(kernel_, Z_, jitter);
  Kmm_ = cross_gram(kernel_, Z_, Z_);
  Kmm_.diagonal().array() += f.jitter;
  L_ = f.lower;
}

Eigen::VectorXd SparseGp::cross(const Eigen::VectorXd& x) const { return cross_vector(kernel_, Z_, x); }

Eigen::VectorXd SparseGp::solve(const Eigen::VectorXd& v) const {
  const auto Lv = L_.triangularView<Eigen::Lower>();
  return Lv.transpose().solve(Lv.solve(v));
}

double SparseGp::nystrom(const Eigen::VectorXd& kx) const {
  return L_.triangularView<Eigen::Lower>().solve(kx).squaredNorm();
}

double SparseGp::conditional_var(const Eigen::VectorXd& kx) const { return kernel_.variance - nystrom(kx); }

Moments sparse_conditional(const RbfKernel& k, const InducingSet& Z, const SparsePosterior& q,
                           const Eigen::VectorXd& x, const Jitter& jitter) {
  if (q.mean.size() != Z.size()) throw DimensionMismatch("sparse_conditional: m_M size != M");
  const SparseGp gp(k, Z, jitter);
  const Eigen::VectorXd kx = gp.cross(x);
  const Eigen::VectorXd w = gp.solve(kx);  // K^-1 K_Mx
  const Eigen::VectorXd s = q.chol.triangularView<Eigen::Lower>().transpose() * w;
  Moments m;
  m.mean = w.dot(q.mean);
  m.var = std::max(gp.conditional_var(kx) + s.squaredNorm(), kVarianceFloor);
  return m;
}

Moments conditional_given_fM(const RbfKernel& k, const InducingSet& Z, const Eigen::VectorXd& f_M,
                             const Eigen::VectorXd& x, const Jitter& jitter) {
  if (f_M.size() != Z.size()) throw DimensionMismatch("conditional_given_fM: f_M size != M");
  const SparseGp gp(k, Z, jitter);
  const Eigen::VectorXd kx = gp.cross(x);
  Moments m;
  m.mean = kx.dot(gp.solve(f_M));
  m.var = std::max(gp.conditional_var(kx), 0.0);
  return m;
}

SdeKernelView::SdeKernelView(const RbfKernel& base, double step, SdeRescaling rescaling)
    : base_(base), step_(step) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    std::ostringstream os;
    os << "SDE step must be positive, got " << step;
    throw NonPositiveStep(os.str());
  }
  cross_scale_ = std::pow(step, -rescaling.cross_power);
  state_scale_ = std::pow(step, -rescaling.state_power);
}

double SdeKernelView::scale(InputKind a, InputKind b) const {
  if (a == InputKind::Inducing && b == InputKind::Inducing) return 1.0;
  if (a == InputKind::State && b == InputKind::State) return state_scale_;
  return cross_scale_;
}

double SdeKernelView::operator()(const Eigen::VectorXd& x, InputKind kx, const Eigen::VectorXd& x2,
                                 InputKind kx2) const {
  return scale(kx, kx2) * base_(x, x2);
}

SdeKernelView sde_rescaled(const RbfKernel& k, double step, SdeRescaling rescaling) {
  return SdeKernelView(k, step, rescaling);
}

}  // namespace mrgp
