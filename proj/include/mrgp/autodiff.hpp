#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mrgp/gauss.hpp"

namespace mrgp::ad {

class Tape;

// Handle to a node on a tape. Scalars are 1 x 1 matrices.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Eigen::MatrixXd& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Append-only record of matrix-valued operations. Node ids increase
// monotonically, so a reverse sweep over ids is a valid topological order.
// Nodes that do not depend on any leaf are marked constant and skipped
// during the reverse sweep.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var leaf(Eigen::MatrixXd value, std::string name = {});
  Var constant(Eigen::MatrixXd value);
  Var scalar_constant(double v) { return constant(Eigen::MatrixXd::Constant(1, 1, v)); }

  // Used by the operation implementations.
  Var record(Eigen::MatrixXd value, std::vector<Var> inputs, Backward backward);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  void accumulate(int id, const Eigen::MatrixXd& g);

  const Eigen::MatrixXd& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Adjoint of a node after backward(); zero for nodes that received none.
  Eigen::MatrixXd grad(int id) const;
  Eigen::MatrixXd grad(const Var& v) const { return grad(v.id); }
  const Eigen::MatrixXd& adjoint(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  // Reverse sweep from a 1 x 1 root. Throws NonScalarRoot otherwise.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::pair<std::string, int>>& leaves() const { return leaves_; }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool requires_grad = false;
    Backward backward;
  };

  void check(const Var& v) const;

  std::deque<Node> nodes_;
  std::vector<std::pair<std::string, int>> leaves_;
};

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var mul(const Var& a, const Var& b);  // elementwise
Var div(const Var& a, const Var& b);  // elementwise
Var exp(const Var& a);
Var log(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var clamp_min(const Var& a, double lo);  // gradient passes where a > lo
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sum(const Var& a);
Var dot(const Var& a, const Var& b);  // sum of the elementwise product
Var row_sum(const Var& a);            // n x 1
Var col_sum(const Var& a);            // 1 x m
Var mul_scalar(const Var& a, const Var& s);  // a * s with s 1 x 1
// Repeat a 1 x n row `rows` times, or an n x 1 column `cols` times.
Var broadcast_row(const Var& row, Eigen::Index rows);
Var broadcast_col(const Var& col, Eigen::Index cols);
Var hcat(const Var& a, const Var& b);
Var cols(const Var& a, Eigen::Index start, Eigen::Index n);
Var diag(const Var& a);  // diagonal as a column
// Solve L X = B (transposed = false) or L^T X = B (transposed = true) with
// L lower triangular.
Var trisolve(const Var& L, const Var& B, bool transposed = false);
// Lower Cholesky factor of sym(A) + eps I, with eps from the jitter ladder
// treated as a constant.
Var cholesky(const Var& A, const Jitter& jitter = {});
Var logdet_chol(const Var& L);  // 2 sum log diag(L)
// mean + L z with z standard normal; z never receives a gradient.
Var reparam_sample(const Var& mean, const Var& L, const Var& z);
// Squared-exponential cross kernel between the rows of X (n x D) and Z
// (m x D); variance is 1 x 1, lengthscales is 1 x D.
Var rbf_cross(const Var& X, const Var& Z, const Var& variance, const Var& lengthscales);
// Lower triangular n x n matrix from n(n+1)/2 raw values listed row by row,
// with softplus applied to the diagonal entries.
Var tril_softplus_diag(const Var& raw, Eigen::Index n);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

// Scalar objective with its gradient over a flat parameter vector.
using ValueAndGrad = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
};

// Central differences with step h on every coordinate; the relative error
// |g - g_fd| / max(|g|, |g_fd|) is maximized over coordinates where
// |g| + |g_fd| > 1e-8.
GradCheck check_grad_detail(const ValueAndGrad& f, const Eigen::VectorXd& theta, double h = 1e-5);
double check_grad(const ValueAndGrad& f, const Eigen::VectorXd& theta, double h = 1e-5);

}  // namespace mrgp::ad
