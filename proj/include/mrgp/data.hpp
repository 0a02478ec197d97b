#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrgp/model.hpp"
#include "mrgp/rng.hpp"

namespace mrgp {

// Noisy damped pendulum
//   d theta = omega dt
//   d omega = (-g/l sin theta - damping omega) dt + diffusion dW
// integrated at dt_sim and thinned by `subsample`.
struct PendulumConfig {
  double g_over_l = 9.81;
  double damping = 0.25;
  double diffusion = 0.1;
  double dt_sim = 1e-3;
  int subsample = 2;
  long T_out = 5000;
  double obs_noise = 0.05;
  double theta0 = 1.0;
  double omega0 = 0.0;

  void validate() const;
};

struct PendulumPath {
  Eigen::VectorXd theta;  // dense states, T_out * subsample of them
  Eigen::VectorXd omega;
  double dt = 0.0;
};

double pendulum_energy(const PendulumConfig& cfg, double theta, double omega);

// Dense path at dt_sim; state n is the one after n steps (state 0 is the
// initial condition).
PendulumPath simulate_pendulum(const PendulumConfig& cfg, RngStream& rng);
// Observations y = theta + noise at every subsample-th dense state; u is
// empty. Observation noise is addressed by dense index, so thinning a
// subsample-1 dataset reproduces a subsampled one.
Dataset gen_pendulum(const PendulumConfig& cfg, RngStream& rng);

// Fast input-driven damped oscillator plus slow low-pass response, both
// driven by smooth exogenous inputs.
struct MultiScaleConfig {
  long T = 4000;
  struct Fast {
    double period = 12.0;
    double amplitude = 0.5;
    double gain = 1.0;
    double radius = 0.85;  // per-step contraction of the oscillator
  } fast;
  struct Slow {
    double period = 600.0;
    double amplitude = 1.0;
  } slow;
  double obs_noise = 0.05;
  int input_dim = 2;
  double input_noise = 0.3;  // weight of the smooth random part of u

  void validate() const;
};

struct MultiScaleData {
  Dataset data;
  Eigen::MatrixXd truth;  // T x 2: fast and slow channels
  Eigen::VectorXd noise;  // realized observation noise, y = fast + slow + noise
};

MultiScaleData gen_multiscale(const MultiScaleConfig& cfg, RngStream& rng);

// Generator configurations from JSON objects. Missing keys keep their
// defaults; unknown keys raise InvalidConfig.
PendulumConfig pendulum_config_from_json(const std::string& text);
MultiScaleConfig multiscale_config_from_json(const std::string& text);

// Per-column zero mean, unit (population) variance for u and y. Constant
// columns keep scale 1 and add a message to `warnings` (or stderr when
// warnings is null). The stored transform maps raw values to the returned
// ones, composed with any transform the input already carried.
Dataset normalize(const Dataset& data, std::vector<std::string>* warnings = nullptr);
// Column statistics of `data` and their application to another dataset, so
// a training split's transform can be reused on held-out rows.
Normalization fit_normalization(const Dataset& data, std::vector<std::string>* warnings = nullptr);
Dataset apply_normalization(const Dataset& data, const Normalization& n);
Dataset head_rows(const Dataset& data, Eigen::Index rows);

// CSV with header t,u1..uDu,y1..yDy.
void write_csv(const Dataset& data, const std::string& path);
std::string to_csv(const Dataset& data);
Dataset read_csv(const std::string& path);
Dataset parse_csv(const std::string& text);

// Plain numeric table with a header row, used for truth channels and
// prediction files.
void write_table(const std::string& path, const std::vector<std::string>& header, const Eigen::MatrixXd& rows);

struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;
};
Table read_table(const std::string& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace mrgp
