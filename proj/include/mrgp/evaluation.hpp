#pragma once

#include <Eigen/Dense>

#include "mrgp/model.hpp"
#include "mrgp/rng.hpp"

namespace mrgp {

struct Prediction {
  Eigen::MatrixXd mean;  // T x D_y
  Eigen::MatrixXd var;   // T x D_y, includes the observation noise
};

// Free-run simulation from q(x_0) over the inputs of `data` (already in the
// model's normalized units): S FullMC paths per component at stride 1,
// summed emissions, moments across samples (population variance) plus Omega.
Prediction predict(const Model& model, const Dataset& data, int S, RngStream& rng);

// Map normalized predictive moments back to raw units.
Prediction denormalize(const Prediction& p, const ColumnTransform& y_transform);

struct Metrics {
  double rmse = 0.0;
  double nll = 0.0;  // mean over rows of -sum_outputs log N(y | mean, var)
};

Metrics compute_metrics(const Prediction& p, const Eigen::MatrixXd& y);
Metrics compute_metrics(const Prediction& p, const Eigen::MatrixXd& y, Eigen::Index from, Eigen::Index count);

}  // namespace mrgp
