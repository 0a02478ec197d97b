#include "mrgp/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "mrgp/errors.hpp"

namespace mrgp {

Eigen::MatrixXd ComponentParams::S0() const {
  const Eigen::MatrixXd L = S0_chol.triangularView<Eigen::Lower>();
  return L * L.transpose();
}

void ComponentParams::validate(int exo_dim) const {
  if (dim < 1) throw InvalidConfig("component dimension must be at least 1");
  if (resolution < 1) throw InvalidConfig("component resolution must be at least 1");
  inducing.validate();
  if (inducing.input_dim() != dim + exo_dim) {
    std::ostringstream os;
    os << "inducing inputs have " << inducing.input_dim() << " columns, expected " << dim + exo_dim;
    throw DimensionMismatch(os.str());
  }
  if (static_cast<int>(kernels.size()) != dim || static_cast<int>(q_fM.size()) != dim)
    throw DimensionMismatch("need one kernel and one q(f_M) per latent dimension");
  for (int d = 0; d < dim; ++d) {
    kernels[static_cast<std::size_t>(d)].validate();
    if (kernels[static_cast<std::size_t>(d)].input_dim() != inducing.input_dim())
      throw DimensionMismatch("kernel lengthscales do not match the kernel input size");
    q_fM[static_cast<std::size_t>(d)].validate();
    if (q_fM[static_cast<std::size_t>(d)].mean.size() != inducing.size())
      throw DimensionMismatch("q(f_M) size does not match the number of inducing points");
  }
  if (m0.size() != dim || S0_chol.rows() != dim || S0_chol.cols() != dim || Q_diag.size() != dim)
    throw DimensionMismatch("m0, S0 or Q does not match the component dimension");
  if (!(Q_diag.array() > 0.0).all()) throw InvalidConfig("process noise must be positive");
}

ColumnTransform ColumnTransform::identity(Eigen::Index n) {
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

Eigen::MatrixXd ColumnTransform::apply(const Eigen::MatrixXd& X) const {
  if (empty()) return X;
  if (X.cols() != mean.size()) throw DimensionMismatch("ColumnTransform: column count mismatch");
  return (X.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Eigen::MatrixXd ColumnTransform::invert(const Eigen::MatrixXd& X) const {
  if (empty()) return X;
  if (X.cols() != mean.size()) throw DimensionMismatch("ColumnTransform: column count mismatch");
  Eigen::MatrixXd out = X.array().rowwise() * std.transpose().array();
  return out.rowwise() + mean.transpose();
}

int Model::total_dim() const {
  int n = 0;
  for (const auto& c : components) n += c.dim;
  return n;
}

void Model::validate() const {
  if (components.empty()) throw InvalidConfig("model has no components");
  if (!(dt > 0.0)) throw NonPositiveStep("model dt must be positive");
  if (emission.out_dim < 1 || emission.obs_noise_diag.size() != emission.out_dim)
    throw DimensionMismatch("observation noise does not match the output dimension");
  if (!(emission.obs_noise_diag.array() > 0.0).all()) throw InvalidConfig("observation noise must be positive");
  if (prior_x0.size() != components.size()) throw DimensionMismatch("need one p(x_0) per component");
  for (std::size_t l = 0; l < components.size(); ++l) {
    components[l].validate(input_dim);
    if (components[l].dim < emission.out_dim)
      throw DimensionMismatch("every component needs at least D_y latent dimensions");
    if (prior_x0[l].dim() != components[l].dim) throw DimensionMismatch("p(x_0) dimension mismatch");
  }
}

void Dataset::validate() const {
  if (y.rows() < 2) throw InvalidConfig("dataset needs at least two time steps");
  if (u.rows() != y.rows() || t.size() != y.rows()) throw DimensionMismatch("dataset columns have different lengths");
  if (!(dt > 0.0)) throw NonPositiveStep("dataset dt must be positive");
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (!y.row(i).allFinite() || !u.row(i).allFinite() || !std::isfinite(t(i)))
      throw NonFiniteValue("dataset contains a non-finite value", static_cast<long>(i));
  }
}

Dataset make_dataset(Eigen::MatrixXd u, Eigen::MatrixXd y, double dt) {
  Dataset d;
  d.t.resize(y.rows());
  for (Eigen::Index i = 0; i < y.rows(); ++i) d.t(i) = dt * static_cast<double>(i);
  d.u = std::move(u);
  d.y = std::move(y);
  d.dt = dt;
  d.normalization = {ColumnTransform::identity(d.u.cols()), ColumnTransform::identity(d.y.cols())};
  return d;
}

ComponentParams init_component(int dim, int exo_dim, int resolution, const InitConfig& cfg, RngStream& rng) {
  ComponentParams c;
  c.dim = dim;
  c.resolution = resolution;
  const int din = dim + exo_dim;
  const int M = cfg.num_inducing;
  c.inducing.inputs.resize(M, din);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < din; ++j) c.inducing.inputs(i, j) = rng.uniform(-cfg.inducing_range, cfg.inducing_range);
  for (int d = 0; d < dim; ++d) {
    c.kernels.emplace_back(cfg.kernel_variance, Eigen::VectorXd::Constant(din, cfg.lengthscale));
    SparsePosterior q;
    q.mean = cfg.inducing_mean_std * rng.normal_vector(M);
    q.chol = cfg.inducing_cov_std * Eigen::MatrixXd::Identity(M, M);
    c.q_fM.push_back(std::move(q));
  }
  c.m0 = Eigen::VectorXd::Zero(dim);
  c.S0_chol = cfg.x0_std * Eigen::MatrixXd::Identity(dim, dim);
  c.Q_diag = Eigen::VectorXd::Constant(dim, cfg.process_noise);
  return c;
}

Model init_model(const std::vector<ComponentSpec>& specs, int exo_dim, int out_dim, double dt,
                 const InitConfig& cfg, RngStream& rng) {
  Model m;
  m.dt = dt;
  m.input_dim = exo_dim;
  m.emission.out_dim = out_dim;
  m.emission.obs_noise_diag = Eigen::VectorXd::Constant(out_dim, cfg.obs_noise);
  for (std::size_t l = 0; l < specs.size(); ++l) {
    RngStream sub = rng.split(l);
    m.components.push_back(init_component(specs[l].dim, exo_dim, specs[l].resolution, cfg, sub));
    m.prior_x0.emplace_back(Eigen::VectorXd::Zero(specs[l].dim), Eigen::MatrixXd::Identity(specs[l].dim, specs[l].dim));
  }
  m.validate();
  return m;
}

Eigen::VectorXd emission_mean(const Model& model, const std::vector<Eigen::VectorXd>& x) {
  if (x.size() != model.components.size()) throw DimensionMismatch("emission_mean: one state per component expected");
  const int dy = model.emission.out_dim;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dy);
  for (std::size_t l = 0; l < x.size(); ++l) {
    if (x[l].size() != model.components[l].dim) throw DimensionMismatch("emission_mean: state dimension mismatch");
    out += x[l].head(dy);
  }
  return out;
}

double emission_logpdf(const Model& model, const Eigen::VectorXd& y, const std::vector<Eigen::VectorXd>& x) {
  const Eigen::VectorXd mu = emission_mean(model, x);
  if (y.size() != mu.size()) throw DimensionMismatch("emission_logpdf: observation dimension mismatch");
  const Eigen::ArrayXd& omega = model.emission.obs_noise_diag.array();
  const Eigen::ArrayXd r = (y - mu).array();
  return -0.5 * ((r.square() / omega).sum() + omega.log().sum() +
                 static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi));
}

Eigen::VectorXd kernel_input(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  Eigen::VectorXd in(x.size() + u.size());
  in << x, u;
  return in;
}

ComponentDynamics::ComponentDynamics(const ComponentParams& c, const Jitter& jitter) : c_(c) {
  for (int d = 0; d < c.dim; ++d) {
    const auto i = static_cast<std::size_t>(d);
    gps_.emplace_back(c.kernels[i], c.inducing, jitter);
    alpha_.push_back(gps_.back().solve(c.q_fM[i].mean));
    const Eigen::MatrixXd KiL = [&] {
      const auto& L = gps_.back().gram_chol();
      const auto Lv = L.triangularView<Eigen::Lower>();
      Eigen::MatrixXd SL = c.q_fM[i].chol.triangularView<Eigen::Lower>();
      return Eigen::MatrixXd(Lv.transpose().solve(Lv.solve(SL)));
    }();
    beta_.push_back(KiL * KiL.transpose());
  }
}

Moments ComponentDynamics::marginal(int d, const Eigen::VectorXd& input) const {
  const auto i = static_cast<std::size_t>(d);
  const Eigen::VectorXd kx = gps_[i].cross(input);
  Moments m;
  m.mean = kx.dot(alpha_[i]);
  m.var = std::max(gps_[i].conditional_var(kx) + kx.dot(beta_[i] * kx), kVarianceFloor);
  return m;
}

Moments ComponentDynamics::given_weights(int d, const Eigen::VectorXd& input, const Eigen::VectorXd& weights) const {
  const auto i = static_cast<std::size_t>(d);
  const Eigen::VectorXd kx = gps_[i].cross(input);
  return {kx.dot(weights), std::max(gps_[i].conditional_var(kx), 0.0)};
}

Gaussian ComponentDynamics::q_x0() const { return Gaussian::from_chol(c_.m0, c_.S0_chol); }

Gaussian ComponentDynamics::q_fM(int d) const {
  const auto i = static_cast<std::size_t>(d);
  return Gaussian::from_chol(c_.q_fM[i].mean, c_.q_fM[i].chol);
}

Gaussian ComponentDynamics::p_fM(int d) const {
  const auto& gp = gps_[static_cast<std::size_t>(d)];
  return Gaussian::from_chol(Eigen::VectorXd::Zero(gp.size()), gp.gram_chol());
}

Gaussian ComponentDynamics::gpssm_transition(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  if (x.size() != c_.dim || u.size() != c_.input_dim()) throw DimensionMismatch("gpssm_transition: input size");
  const Eigen::VectorXd in = kernel_input(x, u);
  Eigen::VectorXd mean(c_.dim), var(c_.dim);
  for (int d = 0; d < c_.dim; ++d) {
    const Moments m = marginal(d, in);
    mean(d) = x(d) + m.mean;
    var(d) = c_.Q_diag(d) + m.var;
  }
  return Gaussian(std::move(mean), var.asDiagonal().toDenseMatrix());
}

Gaussian ComponentDynamics::prior_transition_given_fM(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                                      const std::vector<Eigen::VectorXd>& f_M) const {
  if (x.size() != c_.dim || u.size() != c_.input_dim() || static_cast<int>(f_M.size()) != c_.dim)
    throw DimensionMismatch("prior_transition_given_fM: input size");
  const Eigen::VectorXd in = kernel_input(x, u);
  Eigen::VectorXd mean(c_.dim), var(c_.dim);
  for (int d = 0; d < c_.dim; ++d) {
    const auto i = static_cast<std::size_t>(d);
    if (f_M[i].size() != num_inducing()) throw DimensionMismatch("prior_transition_given_fM: f_M size");
    const Moments m = given_weights(d, in, gps_[i].solve(f_M[i]));
    mean(d) = x(d) + m.mean;
    var(d) = c_.Q_diag(d) + m.var;
  }
  return Gaussian(std::move(mean), var.asDiagonal().toDenseMatrix());
}

Gaussian ComponentDynamics::sde_transition(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double step,
                                           double dt, SdeRescaling rescaling) const {
  if (!(step > 0.0)) throw NonPositiveStep("sde_transition: step must be positive");
  if (x.size() != c_.dim || u.size() != c_.input_dim()) throw DimensionMismatch("sde_transition: input size");
  const double ref = reference_step(c_, dt);
  const Eigen::VectorXd in = kernel_input(x, u);
  Eigen::VectorXd mean(c_.dim), var(c_.dim);
  for (int d = 0; d < c_.dim; ++d) {
    const auto i = static_cast<std::size_t>(d);
    const SdeKernelView view = sde_rescaled(c_.kernels[i], ref, rescaling);
    const double sc = view.scale(InputKind::State, InputKind::Inducing);
    const double ss = view.scale(InputKind::State, InputKind::State);
    // The rescaling is applied to the unscaled quadratic forms, so the
    // result at step == ref reproduces the discrete moments to rounding.
    const Eigen::VectorXd kx = gps_[i].cross(in);
    const double drift = sc * kx.dot(alpha_[i]);
    const double sigma = std::max(ss * c_.kernels[i].variance - sc * sc * (gps_[i].nystrom(kx) - kx.dot(beta_[i] * kx)),
                                  ss * kVarianceFloor);
    const double q = c_.Q_diag(d) / ref;
    mean(d) = x(d) + step * drift;
    var(d) = step * step * sigma + step * q;
  }
  return Gaussian(std::move(mean), var.asDiagonal().toDenseMatrix());
}

SdeStep SdeStep::make(const ComponentParams& c, double step, double dt, SdeRescaling rescaling) {
  if (!(step > 0.0)) throw NonPositiveStep("SDE step must be positive");
  const double ref = reference_step(c, dt);
  // Any kernel serves to read the scale factors; they only depend on ref.
  const SdeKernelView view(RbfKernel(1.0, Eigen::VectorXd::Ones(1)), ref, rescaling);
  SdeStep s;
  s.step = step;
  s.cross = view.scale(InputKind::State, InputKind::Inducing);
  s.state = view.scale(InputKind::State, InputKind::State);
  s.noise = step / ref;
  return s;
}

Gaussian gpssm_transition(const ComponentParams& c, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  return ComponentDynamics(c).gpssm_transition(x, u);
}

Gaussian sde_transition(const ComponentParams& c, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double step,
                        double dt, SdeRescaling rescaling) {
  return ComponentDynamics(c).sde_transition(x, u, step, dt, rescaling);
}

Gaussian prior_transition_given_fM(const ComponentParams& c, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                   const std::vector<Eigen::VectorXd>& f_M) {
  return ComponentDynamics(c).prior_transition_given_fM(x, u, f_M);
}

}  // namespace mrgp
