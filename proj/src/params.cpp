#include "mrgp/params.hpp"

#include <cmath>

#include "mrgp/errors.hpp"

namespace mrgp {

namespace {

std::string comp_prefix(int l) { return "c" + std::to_string(l) + "."; }
std::string dim_prefix(int l, int d) { return comp_prefix(l) + "d" + std::to_string(d) + "."; }

Eigen::VectorXd row_major(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(k++) = m(i, j);
  return v;
}

}  // namespace

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw InvalidConfig("inverse_softplus needs a positive value");
  return y + std::log(-std::expm1(-y));
}

Eigen::VectorXd unconstrain(const Eigen::MatrixXd& value, Transform tr) {
  switch (tr) {
    case Transform::Identity:
      return row_major(value);
    case Transform::Softplus:
      return row_major(value).unaryExpr(&inverse_softplus);
    case Transform::CholSoftplusDiag: {
      const Eigen::Index n = value.rows();
      Eigen::VectorXd raw(n * (n + 1) / 2);
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) raw(k++) = (i == j) ? inverse_softplus(value(i, j)) : value(i, j);
      return raw;
    }
  }
  throw UnsupportedOp("unknown transform");
}

Eigen::MatrixXd constrain(const Eigen::VectorXd& raw, Transform tr, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  if (tr == Transform::CholSoftplusDiag) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j <= i; ++j, ++k) out(i, j) = (i == j) ? softplus(raw(k)) : raw(k);
    return out;
  }
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j, ++k) out(i, j) = tr == Transform::Softplus ? softplus(raw(k)) : raw(k);
  return out;
}

ParamLayout::ParamLayout(const Model& model) {
  for (int l = 0; l < model.num_components(); ++l) {
    const ComponentParams& c = model.components[static_cast<std::size_t>(l)];
    const Eigen::Index D = c.dim, M = c.inducing.size(), Din = c.inducing.input_dim();
    const std::string p = comp_prefix(l);
    add(p + "m0", D, Transform::Identity, D, 1, l, -1);
    add(p + "S0", D * (D + 1) / 2, Transform::CholSoftplusDiag, D, D, l, -1);
    add(p + "Z", M * Din, Transform::Identity, M, Din, l, -1);
    for (int d = 0; d < c.dim; ++d) {
      const std::string q = dim_prefix(l, d);
      add(q + "var", 1, Transform::Softplus, 1, 1, l, d);
      add(q + "ls", Din, Transform::Softplus, 1, Din, l, d);
      add(q + "mM", M, Transform::Identity, M, 1, l, d);
      add(q + "SM", M * (M + 1) / 2, Transform::CholSoftplusDiag, M, M, l, d);
    }
    add(p + "Q", D, Transform::Softplus, 1, D, l, -1);
  }
  add("omega", model.emission.out_dim, Transform::Softplus, 1, model.emission.out_dim, -1, -1);
}

void ParamLayout::add(std::string name, Eigen::Index size, Transform tr, Eigen::Index rows, Eigen::Index cols, int comp,
                      int dim) {
  blocks_.push_back({std::move(name), size_, size, tr, rows, cols, comp, dim});
  size_ += size;
}

std::size_t ParamLayout::block_index(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].name == name) return i;
  throw InvalidConfig("unknown parameter block " + name);
}

const ParamBlock& ParamLayout::block(const std::string& name) const { return blocks_[block_index(name)]; }

std::vector<char> ParamLayout::trainable_mask(int component) const {
  std::vector<char> mask(blocks_.size(), 0);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    mask[i] = (blocks_[i].component == component || blocks_[i].component < 0) ? 1 : 0;
  return mask;
}

Eigen::VectorXd pack(const Model& model, const ParamLayout& layout) {
  Eigen::VectorXd theta(layout.size());
  auto put = [&](const std::string& name, const Eigen::MatrixXd& value) {
    const ParamBlock& b = layout.block(name);
    if (value.rows() != b.rows || value.cols() != b.cols) throw DimensionMismatch("pack: block " + name + " has the wrong shape");
    theta.segment(b.offset, b.size) = unconstrain(value, b.transform);
  };
  for (int l = 0; l < model.num_components(); ++l) {
    const ComponentParams& c = model.components[static_cast<std::size_t>(l)];
    const std::string p = comp_prefix(l);
    put(p + "m0", c.m0);
    put(p + "S0", c.S0_chol);
    put(p + "Z", c.inducing.inputs);
    for (int d = 0; d < c.dim; ++d) {
      const auto i = static_cast<std::size_t>(d);
      const std::string q = dim_prefix(l, d);
      put(q + "var", Eigen::MatrixXd::Constant(1, 1, c.kernels[i].variance));
      put(q + "ls", c.kernels[i].lengthscales.transpose());
      put(q + "mM", c.q_fM[i].mean);
      put(q + "SM", c.q_fM[i].chol);
    }
    put(p + "Q", c.Q_diag.transpose());
  }
  put("omega", model.emission.obs_noise_diag.transpose());
  return theta;
}

Model unpack(const Eigen::VectorXd& theta, const ParamLayout& layout, const Model& structure) {
  if (theta.size() != layout.size()) throw DimensionMismatch("unpack: parameter vector has the wrong size");
  Model m = structure;
  auto get = [&](const std::string& name) {
    const ParamBlock& b = layout.block(name);
    return constrain(theta.segment(b.offset, b.size), b.transform, b.rows, b.cols);
  };
  for (int l = 0; l < m.num_components(); ++l) {
    ComponentParams& c = m.components[static_cast<std::size_t>(l)];
    const std::string p = comp_prefix(l);
    c.m0 = get(p + "m0");
    c.S0_chol = get(p + "S0");
    c.inducing.inputs = get(p + "Z");
    for (int d = 0; d < c.dim; ++d) {
      const auto i = static_cast<std::size_t>(d);
      const std::string q = dim_prefix(l, d);
      c.kernels[i].variance = get(q + "var")(0, 0);
      c.kernels[i].lengthscales = get(q + "ls").transpose();
      c.q_fM[i].mean = get(q + "mM");
      c.q_fM[i].chol = get(q + "SM");
    }
    c.Q_diag = get(p + "Q").transpose();
  }
  m.emission.obs_noise_diag = get("omega").transpose();
  return m;
}

}  // namespace mrgp
