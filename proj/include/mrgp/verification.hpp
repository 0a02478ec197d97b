#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrgp/kernel.hpp"

namespace mrgp {

struct CheckResult {
  std::string name;
  std::string comparison;  // how observed is compared with tolerance
  double tolerance = 0.0;
  double observed = 0.0;
  bool passed = false;
  std::string detail;
};

// SDE transition at step dt against the discrete transition, 20 random tiny
// models with 50 random states each; observed is the largest relative error
// of mean or variance.
CheckResult check_sde_transition_equivalence(std::uint64_t seed, SdeRescaling rescaling = {});

// Full-sequence bound against the dilated bound at R = 1 with shared draws
// on a T = 12 instance; observed is the absolute difference.
CheckResult check_elbo_equality(std::uint64_t seed, SdeRescaling rescaling = {});

// Marginal of x_3 under the analytic recursion against full Monte Carlo.
// Two results: the mean gap in standard errors and the relative variance gap.
std::vector<CheckResult> check_analytic_marginal(std::uint64_t seed, long samples = 200000);
// Same comparison for the prior recursion against sampling f_M from p(f_M).
std::vector<CheckResult> check_prior_marginal(std::uint64_t seed, long samples = 200000);

// Cross-step increment correlation on an instance where the second step
// revisits the region of the first: full Monte Carlo keeps f_M fixed along
// the path (correlation > 0.2), PR-SSM redraws it (|correlation| < 0.02).
std::vector<CheckResult> check_sampling_bias(std::uint64_t seed, long paths = 100000);

// Central-difference check of the mini-batch bound gradient over every
// parameter block on a T = 6, M = 2, S = 1 instance with frozen draws.
CheckResult check_elbo_gradient(std::uint64_t seed);

struct VerifyOptions {
  std::uint64_t seed = 20240611;
  bool mutate_kernel_rescaling = false;
  long statistical_samples = 200000;
  long correlation_paths = 100000;
};

std::vector<CheckResult> run_verification(const VerifyOptions& opts);
std::string verification_report_json(const std::vector<CheckResult>& checks);

}  // namespace mrgp
