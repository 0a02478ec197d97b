#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mrgp/model.hpp"
#include "mrgp/params.hpp"
#include "mrgp/rng.hpp"
#include "mrgp/sampling.hpp"

namespace mrgp {

struct BatchSpec {
  int R = 1;   // stride of the window
  int B = 50;  // retained states
  int B0 = 10; // warm-up transitions before the first retained state
};

struct ElboEstimate {
  double value = 0.0;
  double loglik_term = 0.0;
  double kl_x0 = 0.0;
  double kl_fM = 0.0;
  int n_samples = 0;
  long start = 0;
  int B = 0;
  int R = 1;
};

struct KlTerms {
  double x0 = 0.0;
  double fM = 0.0;
};

// Sum over components (and latent dimensions) of KL(q(x_0) || p(x_0)) and
// KL(q(f_M) || p(f_M)) with p(f_M) = N(0, K_MM).
KlTerms kl_terms(const Model& model);

// Mean latent paths at full resolution, one T x D_l matrix per component.
struct CachedLatents {
  std::vector<std::optional<Eigen::MatrixXd>> mean_paths;
  std::vector<int> sample_counts;

  explicit CachedLatents(std::size_t num_components = 0)
      : mean_paths(num_components), sample_counts(num_components, 0) {}
  bool has(int l) const;
  const Eigen::MatrixXd& at(int l) const;
  void set(int l, Eigen::MatrixXd mean_path, int samples);
};

// y minus the summed mean emissions of every cached component other than l.
// Throws MissingCache if one of them has not been cached.
Eigen::MatrixXd partial_residual(const Dataset& data, const CachedLatents& cached, int l);

// Components simulated for a given active selection.
std::vector<int> simulated_components(const Model& model, std::optional<int> l_active);

// Everything random about one mini-batch estimate.
struct ElboDraws {
  long start = 0;
  std::vector<PathDraws> paths;  // one per simulated component, in order
};

ElboDraws draw_elbo_noise(const Model& model, long T, std::optional<int> l_active, const BatchSpec& batch, int S,
                          RngStream& rng);

// Dilated-window estimate of the bound with the given draws. `targets` are
// the (possibly residual) observations, T x D_y. Every simulated component
// is rolled out with the SDE step batch.R * dt through simulate_fullmc.
// The likelihood term is (J / B) sum_j mean_s log N(target_j | C x_j, Omega)
// with J = T / R; the KL terms are unscaled.
ElboEstimate elbo_with_draws(const Model& model, const Dataset& data, const Eigen::MatrixXd& targets,
                             std::optional<int> l_active, const BatchSpec& batch, const ElboDraws& draws);

ElboEstimate elbo_minibatch(const Model& model, const Dataset& data, std::optional<int> l_active,
                            const CachedLatents& cached, const BatchSpec& batch, int S, RngStream& rng);

// Full-sequence bound in discrete-time form: states x_1 .. x_T are drawn
// from the transitions p(x_{t+1} | x_t, f_M) of each component, the
// likelihood is summed over every observation. `draws.paths` must hold
// T steps per component.
ElboEstimate elbo_full_sequence(const Model& model, const Dataset& data, const ElboDraws& draws);

struct ElboGradient {
  ElboEstimate estimate;
  Eigen::VectorXd grad;  // d value / d theta; zero outside the trainable blocks
};

// Differentiable version of elbo_with_draws evaluated on a tape. Blocks
// with trainable[i] == 0 are treated as constants (an empty mask trains all).
ElboGradient elbo_value_and_grad(const ParamLayout& layout, const Eigen::VectorXd& theta, const Model& structure,
                                 const Dataset& data, const Eigen::MatrixXd& targets, std::optional<int> l_active,
                                 const BatchSpec& batch, const ElboDraws& draws,
                                 const std::vector<char>& trainable = {}, SdeRescaling rescaling = {});

}  // namespace mrgp
