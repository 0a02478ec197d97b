#include "mrgp/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "mrgp/errors.hpp"

namespace mrgp::ad {

namespace {

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shapes " << a.rows() << "x" << a.cols() << " and " << b.rows() << "x" << b.cols();
    throw DimensionMismatch(os.str());
  }
}

void require_scalar(const Var& a, const char* op) {
  if (a.rows() != 1 || a.cols() != 1) throw DimensionMismatch(std::string(op) + ": expected a 1x1 value");
}

Eigen::MatrixXd lower(const Eigen::MatrixXd& m) { return m.triangularView<Eigen::Lower>(); }

// Lower triangle with the diagonal halved.
Eigen::MatrixXd phi(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = lower(m);
  out.diagonal() *= 0.5;
  return out;
}

double softplus_scalar(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Eigen::MatrixXd& Var::value() const {
  if (tape == nullptr) throw UnsupportedOp("use of an uninitialized tape variable");
  return tape->value(id);
}

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw DimensionMismatch("Var::scalar on a non-scalar value");
  return v(0, 0);
}

Var Tape::leaf(Eigen::MatrixXd value, std::string name) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  if (!name.empty()) leaves_.emplace_back(std::move(name), id);
  return {this, id};
}

Var Tape::constant(Eigen::MatrixXd value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::check(const Var& v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw UnsupportedOp("variable belongs to a different tape");
}

Var Tape::record(Eigen::MatrixXd value, std::vector<Var> inputs, Backward backward) {
  bool rg = false;
  for (const Var& v : inputs) {
    check(v);
    rg = rg || requires_grad(v.id);
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = rg;
  if (rg) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Eigen::MatrixXd& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Eigen::MatrixXd Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) return Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& root) {
  check(root);
  if (value(root.id).size() != 1) throw NonScalarRoot("backward needs a 1x1 root");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(root.id, Eigen::MatrixXd::Ones(1, 1));
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.requires_grad && n.backward && n.grad.size() != 0) n.backward(*this, id);
  }
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self));
    t.accumulate(ib, t.adjoint(self));
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self));
    t.accumulate(ib, -t.adjoint(self));
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  const int ia = a.id;
  return a.tape->record(c * a.value(), {a}, [ia, c](Tape& t, int self) { t.accumulate(ia, c * t.adjoint(self)); });
}

Var add_scalar(const Var& a, double c) {
  const int ia = a.id;
  return a.tape->record(a.value().array() + c, {a}, [ia](Tape& t, int self) { t.accumulate(ia, t.adjoint(self)); });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var div(const Var& a, const Var& b) {
  same_shape(a, b, "div");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value().cwiseQuotient(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.adjoint(self);
    const auto& bv = t.value(ib);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseQuotient(bv));
    if (t.requires_grad(ib))
      t.accumulate(ib, -(g.array() * t.value(self).array() / bv.array()).matrix());
  });
}

Var exp(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().array().exp().matrix(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self).cwiseProduct(t.value(self)));
  });
}

Var log(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().array().log().matrix(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self).cwiseQuotient(t.value(ia)));
  });
}

Var softplus(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().unaryExpr(&softplus_scalar), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self).cwiseProduct(t.value(ia).unaryExpr(&sigmoid_scalar)));
  });
}

Var square(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().array().square().matrix(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, 2.0 * t.adjoint(self).cwiseProduct(t.value(ia)));
  });
}

Var sqrt(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().array().sqrt().matrix(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, (0.5 * t.adjoint(self).array() / t.value(self).array()).matrix());
  });
}

Var clamp_min(const Var& a, double lo) {
  const int ia = a.id;
  return a.tape->record(a.value().cwiseMax(lo), {a}, [ia, lo](Tape& t, int self) {
    const Eigen::MatrixXd mask = (t.value(ia).array() > lo).cast<double>().matrix();
    t.accumulate(ia, t.adjoint(self).cwiseProduct(mask));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  const int ia = a.id, ib = b.id;
  return a.tape->record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const auto& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().transpose(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self).transpose());
  });
}

Var sum(const Var& a) {
  const int ia = a.id;
  return a.tape->record(Eigen::MatrixXd::Constant(1, 1, a.value().sum()), {a}, [ia](Tape& t, int self) {
    const auto& v = t.value(ia);
    t.accumulate(ia, Eigen::MatrixXd::Constant(v.rows(), v.cols(), t.adjoint(self)(0, 0)));
  });
}

Var dot(const Var& a, const Var& b) {
  same_shape(a, b, "dot");
  const int ia = a.id, ib = b.id;
  return a.tape->record(Eigen::MatrixXd::Constant(1, 1, a.value().cwiseProduct(b.value()).sum()), {a, b},
                        [ia, ib](Tape& t, int self) {
                          const double g = t.adjoint(self)(0, 0);
                          if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
                          if (t.requires_grad(ib)) t.accumulate(ib, g * t.value(ia));
                        });
}

Var row_sum(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().rowwise().sum(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self).replicate(1, t.value(ia).cols()));
  });
}

Var col_sum(const Var& a) {
  const int ia = a.id;
  return a.tape->record(a.value().colwise().sum(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.adjoint(self).replicate(t.value(ia).rows(), 1));
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  require_scalar(s, "mul_scalar");
  const int ia = a.id, is = s.id;
  return a.tape->record(s.scalar() * a.value(), {a, s}, [ia, is](Tape& t, int self) {
    const auto& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.accumulate(ia, t.value(is)(0, 0) * g);
    if (t.requires_grad(is)) t.accumulate(is, Eigen::MatrixXd::Constant(1, 1, g.cwiseProduct(t.value(ia)).sum()));
  });
}

Var broadcast_row(const Var& row, Eigen::Index rows) {
  if (row.rows() != 1) throw DimensionMismatch("broadcast_row: expected a single row");
  const int ir = row.id;
  return row.tape->record(row.value().replicate(rows, 1), {row}, [ir](Tape& t, int self) {
    t.accumulate(ir, t.adjoint(self).colwise().sum());
  });
}

Var broadcast_col(const Var& col, Eigen::Index cols) {
  if (col.cols() != 1) throw DimensionMismatch("broadcast_col: expected a single column");
  const int ic = col.id;
  return col.tape->record(col.value().replicate(1, cols), {col}, [ic](Tape& t, int self) {
    t.accumulate(ic, t.adjoint(self).rowwise().sum());
  });
}

Var hcat(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("hcat: row counts differ");
  Eigen::MatrixXd v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Eigen::Index na = a.cols(), nb = b.cols();
  return a.tape->record(std::move(v), {a, b}, [ia, ib, na, nb](Tape& t, int self) {
    const auto& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.leftCols(na));
    if (t.requires_grad(ib)) t.accumulate(ib, g.rightCols(nb));
  });
}

Var cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols()) throw DimensionMismatch("cols: slice out of range");
  const int ia = a.id;
  return a.tape->record(a.value().middleCols(start, n), {a}, [ia, start, n](Tape& t, int self) {
    const auto& v = t.value(ia);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(v.rows(), v.cols());
    g.middleCols(start, n) = t.adjoint(self);
    t.accumulate(ia, g);
  });
}

Var diag(const Var& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("diag: matrix is not square");
  const int ia = a.id;
  return a.tape->record(a.value().diagonal(), {a}, [ia](Tape& t, int self) {
    const auto n = t.value(ia).rows();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    g.diagonal() = t.adjoint(self).col(0);
    t.accumulate(ia, g);
  });
}

Var trisolve(const Var& L, const Var& B, bool transposed) {
  if (L.rows() != L.cols() || L.rows() != B.rows()) throw DimensionMismatch("trisolve: incompatible shapes");
  const auto Lv = L.value().triangularView<Eigen::Lower>();
  Eigen::MatrixXd X = transposed ? Eigen::MatrixXd(Lv.transpose().solve(B.value())) : Eigen::MatrixXd(Lv.solve(B.value()));
  const int il = L.id, ib = B.id;
  return L.tape->record(std::move(X), {L, B}, [il, ib, transposed](Tape& t, int self) {
    const auto Lt = t.value(il).triangularView<Eigen::Lower>();
    const auto& g = t.adjoint(self);
    const auto& X = t.value(self);
    const Eigen::MatrixXd gb = transposed ? Eigen::MatrixXd(Lt.solve(g)) : Eigen::MatrixXd(Lt.transpose().solve(g));
    if (t.requires_grad(ib)) t.accumulate(ib, gb);
    if (t.requires_grad(il)) {
      const Eigen::MatrixXd gl = transposed ? Eigen::MatrixXd(X * gb.transpose()) : Eigen::MatrixXd(gb * X.transpose());
      t.accumulate(il, -lower(gl));
    }
  });
}

Var cholesky(const Var& A, const Jitter& jitter) {
  if (A.rows() != A.cols()) throw DimensionMismatch("cholesky: matrix is not square");
  CholeskyFactor f = chol_psd_factor(symmetrize(A.value()), jitter);
  const int ia = A.id;
  return A.tape->record(std::move(f.lower), {A}, [ia](Tape& t, int self) {
    const auto& L = t.value(self);
    const auto Lv = L.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd P = phi(L.transpose() * lower(t.adjoint(self)));
    // S = L^-T P L^-1
    const Eigen::MatrixXd PLi = Lv.transpose().solve(P.transpose()).transpose();
    const Eigen::MatrixXd S = Lv.transpose().solve(PLi);
    t.accumulate(ia, 0.5 * (S + S.transpose()));
  });
}

Var logdet_chol(const Var& L) {
  if (L.rows() != L.cols()) throw DimensionMismatch("logdet_chol: matrix is not square");
  const int il = L.id;
  const double v = 2.0 * L.value().diagonal().array().log().sum();
  return L.tape->record(Eigen::MatrixXd::Constant(1, 1, v), {L}, [il](Tape& t, int self) {
    const auto& Lv = t.value(il);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(Lv.rows(), Lv.cols());
    g.diagonal() = 2.0 * t.adjoint(self)(0, 0) * Lv.diagonal().cwiseInverse();
    t.accumulate(il, g);
  });
}

Var reparam_sample(const Var& mean, const Var& L, const Var& z) {
  if (L.rows() != L.cols() || L.cols() != z.rows() || mean.rows() != L.rows() || mean.cols() != z.cols())
    throw DimensionMismatch("reparam_sample: incompatible shapes");
  const int im = mean.id, il = L.id, iz = z.id;
  Eigen::MatrixXd v = mean.value() + L.value().triangularView<Eigen::Lower>() * z.value();
  return mean.tape->record(std::move(v), {mean, L}, [im, il, iz](Tape& t, int self) {
    const auto& g = t.adjoint(self);
    if (t.requires_grad(im)) t.accumulate(im, g);
    if (t.requires_grad(il)) t.accumulate(il, lower(g * t.value(iz).transpose()));
  });
}

Var rbf_cross(const Var& X, const Var& Z, const Var& variance, const Var& lengthscales) {
  require_scalar(variance, "rbf_cross");
  const Eigen::Index D = X.cols();
  if (Z.cols() != D || lengthscales.rows() != 1 || lengthscales.cols() != D)
    throw DimensionMismatch("rbf_cross: input widths do not match the lengthscales");
  const Eigen::ArrayXd inv = lengthscales.value().row(0).transpose().array().inverse();
  const Eigen::MatrixXd A = X.value() * inv.matrix().asDiagonal();
  const Eigen::MatrixXd Bz = Z.value() * inv.matrix().asDiagonal();
  const double s2 = variance.scalar();
  Eigen::MatrixXd K(A.rows(), Bz.rows());
  for (Eigen::Index j = 0; j < Bz.rows(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i) K(i, j) = s2 * std::exp(-0.5 * (A.row(i) - Bz.row(j)).squaredNorm());
  const int ix = X.id, iz = Z.id, iv = variance.id, il = lengthscales.id;
  return X.tape->record(std::move(K), {X, Z, variance, lengthscales}, [ix, iz, iv, il](Tape& t, int self) {
    const auto& Xv = t.value(ix);
    const auto& Zv = t.value(iz);
    const Eigen::MatrixXd G = t.adjoint(self).cwiseProduct(t.value(self));
    const Eigen::ArrayXd ls = t.value(il).row(0).transpose().array();
    const Eigen::ArrayXd inv2 = ls.square().inverse();
    const Eigen::VectorXd rs = G.rowwise().sum();
    const Eigen::VectorXd cs = G.colwise().sum().transpose();
    if (t.requires_grad(iv)) t.accumulate(iv, Eigen::MatrixXd::Constant(1, 1, G.sum() / t.value(iv)(0, 0)));
    const Eigen::MatrixXd GZ = G * Zv;
    const Eigen::MatrixXd GtX = G.transpose() * Xv;
    if (t.requires_grad(ix)) {
      const Eigen::MatrixXd gx = (GZ - rs.asDiagonal() * Xv) * inv2.matrix().asDiagonal();
      t.accumulate(ix, gx);
    }
    if (t.requires_grad(iz)) {
      const Eigen::MatrixXd gz = (GtX - cs.asDiagonal() * Zv) * inv2.matrix().asDiagonal();
      t.accumulate(iz, gz);
    }
    if (t.requires_grad(il)) {
      const Eigen::ArrayXd xx = (rs.asDiagonal() * Xv.array().square().matrix()).colwise().sum().transpose().array();
      const Eigen::ArrayXd zz = (cs.asDiagonal() * Zv.array().square().matrix()).colwise().sum().transpose().array();
      const Eigen::ArrayXd xz = (Xv.array() * GZ.array()).colwise().sum().transpose();
      const Eigen::ArrayXd gl = (xx - 2.0 * xz + zz) / ls.cube();
      t.accumulate(il, gl.matrix().transpose());
    }
  });
}

Var tril_softplus_diag(const Var& raw, Eigen::Index n) {
  if (raw.cols() != 1 || raw.rows() != n * (n + 1) / 2)
    throw DimensionMismatch("tril_softplus_diag: need n(n+1)/2 raw values");
  const auto& r = raw.value();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j, ++k) L(i, j) = (i == j) ? softplus_scalar(r(k, 0)) : r(k, 0);
  const int ir = raw.id;
  return raw.tape->record(std::move(L), {raw}, [ir, n](Tape& t, int self) {
    const auto& g = t.adjoint(self);
    const auto& rv = t.value(ir);
    Eigen::MatrixXd out(rv.rows(), 1);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j, ++k) out(k, 0) = (i == j) ? g(i, j) * sigmoid_scalar(rv(k, 0)) : g(i, j);
    t.accumulate(ir, out);
  });
}

GradCheck check_grad_detail(const ValueAndGrad& f, const Eigen::VectorXd& theta, double h) {
  GradCheck out;
  out.analytic = f(theta).second;
  out.numeric.resize(theta.size());
  Eigen::VectorXd th = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    th(i) = theta(i) + h;
    const double fp = f(th).first;
    th(i) = theta(i) - h;
    const double fm = f(th).first;
    th(i) = theta(i);
    out.numeric(i) = (fp - fm) / (2.0 * h);
  }
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double g = out.analytic(i), n = out.numeric(i);
    if (std::abs(g) + std::abs(n) <= 1e-8) continue;
    const double rel = std::abs(g - n) / std::max(std::abs(g), std::abs(n));
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_index = i;
    }
  }
  return out;
}

double check_grad(const ValueAndGrad& f, const Eigen::VectorXd& theta, double h) {
  return check_grad_detail(f, theta, h).max_rel_error;
}

}  // namespace mrgp::ad
