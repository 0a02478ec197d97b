#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrgp/inference.hpp"
#include "mrgp/model.hpp"
#include "mrgp/params.hpp"
#include "mrgp/rng.hpp"

namespace mrgp {

struct TrainConfig {
  int cycles = 1;
  int iters_per_component = 50;
  int B = 50;
  int B0 = 10;
  int S = 20;
  int minibatches_per_iter = 20;
  double lr0 = 0.05;
  double lr_decay_factor = 0.99;
  int lr_decay_every = 10;
  int cache_samples = 20;
  // Cache a single sample path per component instead of the mean, so the
  // residual targets carry sampling noise. Off by default.
  bool sampled_residuals = false;
  // Component update order; empty means largest resolution first (ties keep
  // index order).
  std::vector<int> order;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static AdamState zeros(Eigen::Index n);
};

// One Adam update of params in the descent direction of grad. Coordinates
// with mask[i] == 0 are left untouched (an empty mask updates everything).
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr,
               const std::vector<char>& mask = {}, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// lr0 * factor^floor(step / every)
double lr_schedule(int step, double lr0, const TrainConfig& cfg);

struct TrainRecord {
  int cycle = 0;
  int component = 0;
  int iter = 0;
  double elbo = 0.0;  // average over the iteration's mini-batches
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<TrainRecord> history;
  std::vector<std::string> events;  // skipped steps and other diagnostics
};

// Default update order: resolution descending, stable in the index.
std::vector<int> default_order(const Model& model);

// Mean across S FullMC sample paths of component l at stride 1 over the
// whole sequence.
Eigen::MatrixXd refresh_cache(const Model& model, const Dataset& data, int l, int S, RngStream& rng);

// Adam steps on the blocks of component l and the shared observation noise,
// against the partial residual of the other (cached) components. theta is
// updated in place.
void update_component(const ParamLayout& layout, Eigen::VectorXd& theta, const Model& structure, const Dataset& data,
                      const CachedLatents& cached, int l, const TrainConfig& cfg, RngStream& rng, int cycle,
                      TrainResult& result, const std::function<void(const TrainRecord&)>& on_record = {});

TrainResult backfit(const Model& model, const Dataset& data, const TrainConfig& cfg, RngStream& rng,
                    const std::function<void(const TrainRecord&)>& on_record = {});

}  // namespace mrgp
