#include "mrgp/gauss.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mrgp/errors.hpp"

namespace mrgp {

namespace {

void require_square(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionMismatch(os.str());
  }
}

}  // namespace

void Jitter::validate() const {
  if (!(base > 0.0) || !(growth > 1.0) || max_retries < 0)
    throw InvalidConfig("jitter requires base > 0, growth > 1, max_retries >= 0");
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

CholeskyFactor chol_psd_factor(const Eigen::MatrixXd& m, const Jitter& jitter) {
  require_square(m, "chol_psd");
  jitter.validate();
  const Eigen::MatrixXd sym = symmetrize(m);
  const auto n = sym.rows();
  if (n == 0) return {Eigen::MatrixXd(0, 0), 0.0};

  double eps = 0.0;
  for (int attempt = 0; attempt <= jitter.max_retries + 1; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(sym + eps * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd lower = llt.matrixL();
      if (lower.allFinite() && (lower.diagonal().array() > 0.0).all()) return {lower, eps};
    }
    eps = (attempt == 0) ? jitter.base : eps * jitter.growth;
  }
  std::ostringstream os;
  os << "matrix of size " << n << " is not positive definite after jitter up to "
     << jitter.base * std::pow(jitter.growth, jitter.max_retries);
  throw NotPositiveDefinite(os.str());
}

Eigen::MatrixXd chol_psd(const Eigen::MatrixXd& m, const Jitter& jitter) {
  return chol_psd_factor(m, jitter).lower;
}

double logdet_from_chol(const Eigen::MatrixXd& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

Gaussian::Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov, Jitter jitter)
    : mean_(std::move(mean)), cov_(std::move(cov)), jitter_(jitter),
      cache_(std::make_shared<FactorCache>()) {
  require_square(cov_, "Gaussian");
  if (cov_.rows() != mean_.size()) {
    std::ostringstream os;
    os << "Gaussian: mean has " << mean_.size() << " entries but covariance is " << cov_.rows()
       << "x" << cov_.cols();
    throw DimensionMismatch(os.str());
  }
}

Gaussian Gaussian::from_chol(Eigen::VectorXd mean, const Eigen::MatrixXd& lower) {
  Eigen::MatrixXd L = lower.triangularView<Eigen::Lower>();
  Gaussian g(std::move(mean), L * L.transpose());
  std::call_once(g.cache_->once, [&] { g.cache_->lower = L; });
  return g;
}

const Eigen::MatrixXd& Gaussian::chol() const {
  std::call_once(cache_->once, [this] {
    // A zero covariance is a point mass; its factor is exactly zero.
    if (cov_.isZero(0.0)) {
      cache_->lower = Eigen::MatrixXd::Zero(cov_.rows(), cov_.cols());
    } else {
      cache_->lower = chol_psd(cov_, jitter_);
    }
  });
  return cache_->lower;
}

Eigen::VectorXd mvn_sample(const Gaussian& g, RngStream& rng) {
  const Eigen::VectorXd z = rng.normal_vector(g.dim());
  return g.mean() + g.chol().triangularView<Eigen::Lower>() * z;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Gaussian& g) {
  if (x.size() != g.dim()) {
    std::ostringstream os;
    os << "mvn_logpdf: point has dimension " << x.size() << ", distribution " << g.dim();
    throw DimensionMismatch(os.str());
  }
  const auto& L = g.chol();
  const Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(x - g.mean());
  const double n = static_cast<double>(g.dim());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet_from_chol(L) + w.squaredNorm());
}

double kl_gaussian(const Gaussian& q, const Gaussian& p) {
  if (q.dim() != p.dim()) throw DimensionMismatch("kl_gaussian: dimensions differ");
  const auto& Lp = p.chol();
  const auto& Lq = q.chol();
  const auto Lp_view = Lp.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd A = Lp_view.solve(Eigen::MatrixXd(Lq.triangularView<Eigen::Lower>()));
  const Eigen::VectorXd b = Lp_view.solve(p.mean() - q.mean());
  const double n = static_cast<double>(q.dim());
  return 0.5 * (A.squaredNorm() + b.squaredNorm() - n + logdet_from_chol(Lp) - logdet_from_chol(Lq));
}

Gaussian GaussianConditional::given(const Eigen::VectorXd& x) const {
  if (x.size() != gain.cols()) throw DimensionMismatch("GaussianConditional: wrong input size");
  return Gaussian(offset + gain * x, cov);
}

AffineConditioning affine_condition(const Gaussian& prior_y, const Eigen::VectorXd& a,
                                    const Eigen::MatrixXd& F, const Eigen::MatrixXd& A) {
  const auto ny = prior_y.dim();
  const auto nx = a.size();
  if (F.rows() != nx || F.cols() != ny || A.rows() != nx || A.cols() != nx)
    throw DimensionMismatch("affine_condition: a, F and A disagree with the prior dimension");

  const Eigen::VectorXd& b = prior_y.mean();
  const Eigen::MatrixXd& B = prior_y.cov();
  const Eigen::VectorXd mean_x = a + F * b;
  const Eigen::MatrixXd cov_x = symmetrize(A + F * B * F.transpose());

  GaussianConditional reverse;
  if (F.isZero(0.0)) {
    reverse.gain = Eigen::MatrixXd::Zero(ny, nx);
    reverse.offset = b;
    reverse.cov = B;
  } else {
    // gain = B F^T S^-1 with S = cov_x; solve S gain^T = F B.
    const Eigen::MatrixXd L = chol_psd(cov_x);
    const auto Lv = L.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd FB = F * B;
    const Eigen::MatrixXd gain_t = Lv.transpose().solve(Lv.solve(FB));
    reverse.gain = gain_t.transpose();
    reverse.offset = b - reverse.gain * mean_x;
    reverse.cov = symmetrize(B - reverse.gain * FB);
  }
  return {Gaussian(mean_x, cov_x), std::move(reverse)};
}

Eigen::MatrixXd block_inverse(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Eigen::MatrixXd& C, const Eigen::MatrixXd& D) {
  require_square(A, "block_inverse(A)");
  require_square(D, "block_inverse(D)");
  if (B.rows() != A.rows() || B.cols() != D.cols() || C.rows() != D.rows() ||
      C.cols() != A.cols())
    throw DimensionMismatch("block_inverse: off-diagonal blocks do not fit A and D");

  Eigen::FullPivLU<Eigen::MatrixXd> lu_a(A);
  if (!lu_a.isInvertible()) throw Singular("block_inverse: A is singular");
  const Eigen::MatrixXd Ainv = lu_a.inverse();
  const Eigen::MatrixXd schur = D - C * Ainv * B;
  Eigen::FullPivLU<Eigen::MatrixXd> lu_s(schur);
  if (!lu_s.isInvertible()) throw Singular("block_inverse: Schur complement is singular");
  const Eigen::MatrixXd Sinv = lu_s.inverse();

  const auto na = A.rows();
  const auto nd = D.rows();
  Eigen::MatrixXd out(na + nd, na + nd);
  out.topLeftCorner(na, na) = Ainv + Ainv * B * Sinv * C * Ainv;
  out.topRightCorner(na, nd) = -Ainv * B * Sinv;
  out.bottomLeftCorner(nd, na) = -Sinv * C * Ainv;
  out.bottomRightCorner(nd, nd) = Sinv;
  return out;
}

}  // namespace mrgp
