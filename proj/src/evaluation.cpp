#include "mrgp/evaluation.hpp"

#include <cmath>
#include <numbers>

#include "mrgp/errors.hpp"
#include "mrgp/sampling.hpp"

namespace mrgp {

Prediction predict(const Model& model, const Dataset& data, int S, RngStream& rng) {
  if (S < 1) throw InvalidConfig("predict needs at least one sample");
  if (data.input_dim() != model.input_dim) throw DimensionMismatch("dataset inputs do not match the model");
  const int T = static_cast<int>(data.length());
  const Eigen::Index dy = model.emission.out_dim;
  const Eigen::MatrixXd u_rows = transition_inputs(data.u, 0, 1, 0, T);
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(S), Eigen::MatrixXd::Zero(T, dy));
  for (const ComponentParams& c : model.components) {
    const PathDraws draws = PathDraws::sample(S, c.dim, c.inducing.size(), T, rng);
    const LatentPath p = simulate_fullmc(ComponentDynamics(c), u_rows, SdeStep::make(c, model.dt, model.dt), T, 0, draws);
    for (int s = 0; s < S; ++s) out[static_cast<std::size_t>(s)] += p.samples[static_cast<std::size_t>(s)].leftCols(dy);
  }
  Prediction pred;
  pred.mean = Eigen::MatrixXd::Zero(T, dy);
  for (const auto& o : out) pred.mean += o;
  pred.mean /= S;
  pred.var = Eigen::MatrixXd::Zero(T, dy);
  for (const auto& o : out) pred.var.array() += (o - pred.mean).array().square();
  pred.var /= S;
  pred.var.rowwise() += model.emission.obs_noise_diag.transpose();
  return pred;
}

Prediction denormalize(const Prediction& p, const ColumnTransform& t) {
  if (t.empty()) return p;
  Prediction out;
  out.mean = t.invert(p.mean);
  out.var = p.var.array().rowwise() * t.std.transpose().array().square();
  return out;
}

Metrics compute_metrics(const Prediction& p, const Eigen::MatrixXd& y) { return compute_metrics(p, y, 0, y.rows()); }

Metrics compute_metrics(const Prediction& p, const Eigen::MatrixXd& y, Eigen::Index from, Eigen::Index count) {
  if (p.mean.rows() != y.rows() || p.mean.cols() != y.cols() || p.var.rows() != y.rows() || p.var.cols() != y.cols())
    throw DimensionMismatch("prediction and targets differ in shape");
  if (from < 0 || count < 1 || from + count > y.rows()) throw DimensionMismatch("metric range outside the data");
  const auto err = (p.mean.middleRows(from, count) - y.middleRows(from, count)).array();
  const auto var = p.var.middleRows(from, count).array();
  Metrics m;
  m.rmse = std::sqrt(err.square().mean());
  const double nll_total = 0.5 * (err.square() / var + var.log() + std::log(2.0 * std::numbers::pi)).sum();
  m.nll = nll_total / static_cast<double>(count);
  return m;
}

}  // namespace mrgp
