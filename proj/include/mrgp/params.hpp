#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrgp/model.hpp"

namespace mrgp {

enum class Transform {
  Identity,
  Softplus,          // positive values, stored through the inverse softplus
  CholSoftplusDiag,  // lower Cholesky factor, row-by-row, softplus on the diagonal
};

// One contiguous block of the unconstrained parameter vector.
struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  Transform transform = Transform::Identity;
  Eigen::Index rows = 0;  // constrained shape
  Eigen::Index cols = 0;
  int component = -1;     // -1 for blocks shared by all components
  int latent_dim = -1;    // -1 for blocks not tied to one latent dimension
};

// Layout of all free parameters of a model. Per component l the blocks are
// c{l}.m0, c{l}.S0, c{l}.Z, c{l}.Q and per latent dimension d
// c{l}.d{d}.var, c{l}.d{d}.ls, c{l}.d{d}.mM, c{l}.d{d}.SM; the shared
// observation noise block is `omega`.
class ParamLayout {
 public:
  explicit ParamLayout(const Model& model);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Eigen::Index size() const { return size_; }
  const ParamBlock& block(const std::string& name) const;
  std::size_t block_index(const std::string& name) const;
  // One flag per block, set for the blocks update_component(l) may move:
  // component l plus the shared ones.
  std::vector<char> trainable_mask(int component) const;

 private:
  void add(std::string name, Eigen::Index size, Transform tr, Eigen::Index rows, Eigen::Index cols, int comp, int dim);

  std::vector<ParamBlock> blocks_;
  Eigen::Index size_ = 0;
};

double softplus(double x);
double inverse_softplus(double y);

// Constrained value (rows x cols) <-> unconstrained raw values.
Eigen::VectorXd unconstrain(const Eigen::MatrixXd& value, Transform tr);
Eigen::MatrixXd constrain(const Eigen::VectorXd& raw, Transform tr, Eigen::Index rows, Eigen::Index cols);

Eigen::VectorXd pack(const Model& model, const ParamLayout& layout);
// Copy of `structure` with every free parameter replaced by the values in theta.
Model unpack(const Eigen::VectorXd& theta, const ParamLayout& layout, const Model& structure);

}  // namespace mrgp
