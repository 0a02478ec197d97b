#include "mrgp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mrgp/autodiff.hpp"
#include "mrgp/errors.hpp"

namespace mrgp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double diag_gauss_loglik(const Eigen::VectorXd& r, const Eigen::VectorXd& omega) {
  return -0.5 * ((r.array().square() / omega.array()).sum() + omega.array().log().sum() +
                 static_cast<double>(r.size()) * kLog2Pi);
}

void check_batch(const Dataset& data, const BatchSpec& batch) {
  if (batch.R < 1 || batch.B < 1 || batch.B0 < 0) throw InvalidConfig("batch needs R >= 1, B >= 1, B0 >= 0");
  const long need = static_cast<long>(batch.R) * batch.B;
  if (data.length() < need) {
    std::ostringstream os;
    os << "window of " << batch.B << " rows at stride " << batch.R << " needs T >= " << need << ", got "
       << data.length();
    throw WindowTooLong(os.str(), need);
  }
}

}  // namespace

KlTerms kl_terms(const Model& model) {
  KlTerms kl;
  for (std::size_t l = 0; l < model.components.size(); ++l) {
    const ComponentDynamics dyn(model.components[l]);
    kl.x0 += kl_gaussian(dyn.q_x0(), model.prior_x0[l]);
    for (int d = 0; d < dyn.dim(); ++d) kl.fM += kl_gaussian(dyn.q_fM(d), dyn.p_fM(d));
  }
  return kl;
}

bool CachedLatents::has(int l) const {
  return l >= 0 && static_cast<std::size_t>(l) < mean_paths.size() && mean_paths[static_cast<std::size_t>(l)].has_value();
}

const Eigen::MatrixXd& CachedLatents::at(int l) const {
  if (!has(l)) throw MissingCache("no cached latents for component " + std::to_string(l));
  return *mean_paths[static_cast<std::size_t>(l)];
}

void CachedLatents::set(int l, Eigen::MatrixXd mean_path, int samples) {
  if (l < 0) throw InvalidConfig("negative component index");
  if (static_cast<std::size_t>(l) >= mean_paths.size()) {
    mean_paths.resize(static_cast<std::size_t>(l) + 1);
    sample_counts.resize(static_cast<std::size_t>(l) + 1, 0);
  }
  mean_paths[static_cast<std::size_t>(l)] = std::move(mean_path);
  sample_counts[static_cast<std::size_t>(l)] = samples;
}

Eigen::MatrixXd partial_residual(const Dataset& data, const CachedLatents& cached, int l) {
  Eigen::MatrixXd r = data.y;
  const Eigen::Index dy = data.output_dim();
  for (std::size_t k = 0; k < cached.mean_paths.size(); ++k) {
    if (static_cast<int>(k) == l) continue;
    const Eigen::MatrixXd& m = cached.at(static_cast<int>(k));
    if (m.rows() != data.length() || m.cols() < dy) throw DimensionMismatch("cached latent path has the wrong shape");
    r -= m.leftCols(dy);
  }
  return r;
}

std::vector<int> simulated_components(const Model& model, std::optional<int> l_active) {
  if (l_active) {
    if (*l_active < 0 || *l_active >= model.num_components()) throw InvalidConfig("active component out of range");
    return {*l_active};
  }
  std::vector<int> all;
  for (int l = 0; l < model.num_components(); ++l) all.push_back(l);
  return all;
}

ElboDraws draw_elbo_noise(const Model& model, long T, std::optional<int> l_active, const BatchSpec& batch, int S,
                          RngStream& rng) {
  if (S < 1) throw InvalidConfig("need at least one sample");
  ElboDraws d;
  d.start = draw_window_start(T, batch.R, batch.B, rng);
  for (int l : simulated_components(model, l_active)) {
    const ComponentParams& c = model.components[static_cast<std::size_t>(l)];
    d.paths.push_back(PathDraws::sample(S, c.dim, c.inducing.size(), batch.B0 + batch.B, rng));
  }
  return d;
}

ElboEstimate elbo_with_draws(const Model& model, const Dataset& data, const Eigen::MatrixXd& targets,
                             std::optional<int> l_active, const BatchSpec& batch, const ElboDraws& draws) {
  check_batch(data, batch);
  const std::vector<int> sims = simulated_components(model, l_active);
  if (draws.paths.size() != sims.size()) throw DimensionMismatch("one set of draws per simulated component expected");
  const Eigen::MatrixXd u_window = transition_inputs(data.u, draws.start, batch.R, batch.B0, batch.B);
  const Eigen::MatrixXd y_window = dilated_rows(targets, draws.start, batch.R, batch.B);
  const double step = batch.R * model.dt;
  std::vector<LatentPath> paths;
  for (std::size_t k = 0; k < sims.size(); ++k) {
    const ComponentParams& c = model.components[static_cast<std::size_t>(sims[k])];
    paths.push_back(simulate_fullmc(ComponentDynamics(c), u_window, SdeStep::make(c, step, model.dt), batch.B, batch.B0,
                                    draws.paths[k]));
  }
  const Eigen::Index S = paths.front().num_samples();
  const Eigen::Index dy = model.emission.out_dim;
  double ll = 0.0;
  for (int b = 0; b < batch.B; ++b) {
    double acc = 0.0;
    for (Eigen::Index s = 0; s < S; ++s) {
      Eigen::VectorXd pred = Eigen::VectorXd::Zero(dy);
      for (const auto& p : paths) pred += p.samples[static_cast<std::size_t>(s)].row(b).head(dy).transpose();
      acc += diag_gauss_loglik(y_window.row(b).transpose() - pred, model.emission.obs_noise_diag);
    }
    ll += acc / static_cast<double>(S);
  }
  const double J = static_cast<double>(data.length()) / batch.R;
  const KlTerms kl = kl_terms(model);
  ElboEstimate e;
  e.loglik_term = (J / batch.B) * ll;
  e.kl_x0 = kl.x0;
  e.kl_fM = kl.fM;
  e.value = e.loglik_term - e.kl_x0 - e.kl_fM;
  e.n_samples = static_cast<int>(S);
  e.start = draws.start;
  e.B = batch.B;
  e.R = batch.R;
  return e;
}

ElboEstimate elbo_minibatch(const Model& model, const Dataset& data, std::optional<int> l_active,
                            const CachedLatents& cached, const BatchSpec& batch, int S, RngStream& rng) {
  check_batch(data, batch);
  const ElboDraws draws = draw_elbo_noise(model, data.length(), l_active, batch, S, rng);
  const Eigen::MatrixXd targets = l_active ? partial_residual(data, cached, *l_active) : data.y;
  return elbo_with_draws(model, data, targets, l_active, batch, draws);
}

ElboEstimate elbo_full_sequence(const Model& model, const Dataset& data, const ElboDraws& draws) {
  const auto T = static_cast<int>(data.length());
  if (draws.paths.size() != model.components.size()) throw DimensionMismatch("one set of draws per component expected");
  const Eigen::MatrixXd u_rows = transition_inputs(data.u, 0, 1, 0, T);
  const Eigen::Index dy = model.emission.out_dim;
  const Eigen::Index S = draws.paths.front().num_samples();
  // pred[s] accumulates C x_t over components, T x D_y.
  std::vector<Eigen::MatrixXd> pred(static_cast<std::size_t>(S), Eigen::MatrixXd::Zero(T, dy));
  for (std::size_t l = 0; l < model.components.size(); ++l) {
    const ComponentParams& c = model.components[l];
    const ComponentDynamics dyn(c);
    const PathDraws& pd = draws.paths[l];
    if (static_cast<int>(pd.step_eps.size()) < T) throw DimensionMismatch("full-sequence draws need T steps");
    for (Eigen::Index s = 0; s < S; ++s) {
      std::vector<Eigen::VectorXd> f_M;
      for (int d = 0; d < c.dim; ++d) {
        const auto i = static_cast<std::size_t>(d);
        f_M.push_back(c.q_fM[i].mean + c.q_fM[i].chol.triangularView<Eigen::Lower>() * pd.f_eps[i].col(s));
      }
      Eigen::VectorXd x = c.m0 + c.S0_chol.triangularView<Eigen::Lower>() * pd.z0.row(s).transpose();
      for (int t = 0; t < T; ++t) {
        const Gaussian tr = dyn.prior_transition_given_fM(x, u_rows.row(t).transpose(), f_M);
        x = tr.mean() + tr.chol() * pd.step_eps[static_cast<std::size_t>(t)].row(s).transpose();
        pred[static_cast<std::size_t>(s)].row(t) += x.head(dy).transpose();
      }
    }
  }
  double ll = 0.0;
  for (int t = 0; t < T; ++t) {
    double acc = 0.0;
    for (Eigen::Index s = 0; s < S; ++s)
      acc += diag_gauss_loglik(data.y.row(t).transpose() - pred[static_cast<std::size_t>(s)].row(t).transpose(),
                               model.emission.obs_noise_diag);
    ll += acc / static_cast<double>(S);
  }
  const KlTerms kl = kl_terms(model);
  ElboEstimate e;
  e.loglik_term = ll;
  e.kl_x0 = kl.x0;
  e.kl_fM = kl.fM;
  e.value = ll - kl.x0 - kl.fM;
  e.n_samples = static_cast<int>(S);
  e.start = 0;
  e.B = T;
  e.R = 1;
  return e;
}

namespace {

using ad::Var;

// Constrained parameters of one component as tape variables.
struct TapeComponent {
  Var m0, L0, Z, Q;
  std::vector<Var> var, ls, mM, LSM;
};

class TapeParams {
 public:
  TapeParams(ad::Tape& tape, const ParamLayout& layout, const Eigen::VectorXd& theta, const std::vector<char>& trainable)
      : tape_(tape), layout_(layout), theta_(theta), trainable_(trainable), raw_(layout.blocks().size()) {}

  Var get(const std::string& name) {
    const std::size_t i = layout_.block_index(name);
    const ParamBlock& b = layout_.blocks()[i];
    const Eigen::VectorXd seg = theta_.segment(b.offset, b.size);
    const bool train = trainable_.empty() || trainable_[i] != 0;
    auto make = [&](Eigen::MatrixXd v) { return train ? tape_.leaf(std::move(v), b.name) : tape_.constant(std::move(v)); };
    switch (b.transform) {
      case Transform::Identity: {
        Var v = make(constrain(seg, Transform::Identity, b.rows, b.cols));
        raw_[i] = v;
        return v;
      }
      case Transform::Softplus: {
        Var v = make(constrain(seg, Transform::Identity, b.rows, b.cols));
        raw_[i] = v;
        return ad::softplus(v);
      }
      case Transform::CholSoftplusDiag: {
        Var v = make(Eigen::MatrixXd(seg));
        raw_[i] = v;
        return ad::tril_softplus_diag(v, b.rows);
      }
    }
    throw UnsupportedOp("unknown transform");
  }

  Eigen::VectorXd gradient() const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(layout_.size());
    for (std::size_t i = 0; i < raw_.size(); ++i) {
      if (!raw_[i] || !tape_.requires_grad(raw_[i]->id)) continue;
      const ParamBlock& b = layout_.blocks()[i];
      const Eigen::MatrixXd gm = tape_.grad(*raw_[i]);
      Eigen::Index k = 0;
      for (Eigen::Index r = 0; r < gm.rows(); ++r)
        for (Eigen::Index c = 0; c < gm.cols(); ++c) g(b.offset + k++) = gm(r, c);
    }
    return g;
  }

 private:
  ad::Tape& tape_;
  const ParamLayout& layout_;
  const Eigen::VectorXd& theta_;
  const std::vector<char>& trainable_;
  std::vector<std::optional<Var>> raw_;
};

TapeComponent load_component(TapeParams& tp, int l, int dim) {
  const std::string p = "c" + std::to_string(l) + ".";
  TapeComponent tc;
  tc.m0 = tp.get(p + "m0");
  tc.L0 = tp.get(p + "S0");
  tc.Z = tp.get(p + "Z");
  for (int d = 0; d < dim; ++d) {
    const std::string q = p + "d" + std::to_string(d) + ".";
    tc.var.push_back(tp.get(q + "var"));
    tc.ls.push_back(tp.get(q + "ls"));
    tc.mM.push_back(tp.get(q + "mM"));
    tc.LSM.push_back(tp.get(q + "SM"));
  }
  tc.Q = tp.get(p + "Q");
  return tc;
}

// KL(N(m, L L^T) || N(mu, P)) with the prior fixed.
Var kl_fixed_prior(ad::Tape& tape, const Var& m, const Var& L, const Gaussian& prior) {
  const Var Lp = tape.constant(prior.chol());
  const Var diff = ad::sub(tape.constant(prior.mean()), m);
  const Var tr = ad::sum(ad::square(ad::trisolve(Lp, L)));
  const Var mahal = ad::sum(ad::square(ad::trisolve(Lp, diff)));
  const double n = static_cast<double>(prior.dim());
  const double logdet_p = logdet_from_chol(prior.chol());
  Var kl = ad::sub(ad::add(tr, mahal), ad::logdet_chol(L));
  return ad::scale(ad::add_scalar(kl, logdet_p - n), 0.5);
}

// KL(N(m, L L^T) || N(0, Lk Lk^T)) with both sides on the tape.
Var kl_inducing(const Var& m, const Var& L, const Var& Lk) {
  const Var tr = ad::sum(ad::square(ad::trisolve(Lk, L)));
  const Var mahal = ad::sum(ad::square(ad::trisolve(Lk, m)));
  const double n = static_cast<double>(m.rows());
  Var kl = ad::add(ad::add(tr, mahal), ad::sub(ad::logdet_chol(Lk), ad::logdet_chol(L)));
  return ad::scale(ad::add_scalar(kl, -n), 0.5);
}

}  // namespace

ElboGradient elbo_value_and_grad(const ParamLayout& layout, const Eigen::VectorXd& theta, const Model& structure,
                                 const Dataset& data, const Eigen::MatrixXd& targets, std::optional<int> l_active,
                                 const BatchSpec& batch, const ElboDraws& draws, const std::vector<char>& trainable,
                                 SdeRescaling rescaling) {
  check_batch(data, batch);
  const std::vector<int> sims = simulated_components(structure, l_active);
  if (draws.paths.size() != sims.size()) throw DimensionMismatch("one set of draws per simulated component expected");
  if (!trainable.empty() && trainable.size() != layout.blocks().size())
    throw DimensionMismatch("trainable mask does not match the parameter layout");

  ad::Tape tape;
  TapeParams tp(tape, layout, theta, trainable);
  const Model model = unpack(theta, layout, structure);
  const Eigen::MatrixXd u_window = transition_inputs(data.u, draws.start, batch.R, batch.B0, batch.B);
  const Eigen::MatrixXd y_window = dilated_rows(targets, draws.start, batch.R, batch.B);
  const Eigen::Index S = draws.paths.front().num_samples();
  const Eigen::Index dy = model.emission.out_dim;
  const Eigen::Index Du = data.input_dim();
  const double step = batch.R * model.dt;
  const Jitter jitter;

  // Summed emissions of every simulated component at each retained step.
  std::vector<std::optional<Var>> pred(static_cast<std::size_t>(batch.B));
  std::optional<Var> kl_x0_var, kl_fM_var;
  auto accumulate = [](std::optional<Var>& acc, const Var& v) { acc = acc ? ad::add(*acc, v) : v; };

  for (std::size_t k = 0; k < sims.size(); ++k) {
    const int l = sims[k];
    const ComponentParams& c = model.components[static_cast<std::size_t>(l)];
    const PathDraws& pd = draws.paths[k];
    const int D = c.dim;
    const TapeComponent tc = load_component(tp, l, D);
    const SdeStep st = SdeStep::make(c, step, model.dt, rescaling);
    const Eigen::Index M = c.inducing.size();

    accumulate(kl_x0_var, kl_fixed_prior(tape, tc.m0, tc.L0, model.prior_x0[static_cast<std::size_t>(l)]));

    std::vector<Var> Lk, At;
    for (int d = 0; d < D; ++d) {
      const auto i = static_cast<std::size_t>(d);
      const Var Kmm = ad::add(ad::rbf_cross(tc.Z, tc.Z, tc.var[i], tc.ls[i]),
                              tape.constant(jitter.base * Eigen::MatrixXd::Identity(M, M)));
      Lk.push_back(ad::cholesky(Kmm, jitter));
      accumulate(kl_fM_var, kl_inducing(tc.mM[i], tc.LSM[i], Lk.back()));
      const Var f = ad::reparam_sample(ad::broadcast_col(tc.mM[i], S), tc.LSM[i], tape.constant(pd.f_eps[i]));
      const Var A = ad::trisolve(Lk.back(), ad::trisolve(Lk.back(), f), true);  // K^-1 f, M x S
      At.push_back(ad::transpose(A));
    }

    const Var X0 = ad::transpose(
        ad::reparam_sample(ad::broadcast_col(tc.m0, S), tc.L0, tape.constant(pd.z0.transpose())));
    std::vector<Var> xs;
    for (int d = 0; d < D; ++d) xs.push_back(ad::cols(X0, d, 1));
    std::vector<Var> noise;
    for (int d = 0; d < D; ++d) noise.push_back(ad::broadcast_row(ad::scale(ad::cols(tc.Q, d, 1), st.noise), S));

    for (int t = 0; t < batch.B0 + batch.B; ++t) {
      Var in = xs[0];
      for (int d = 1; d < D; ++d) in = ad::hcat(in, xs[static_cast<std::size_t>(d)]);
      if (Du > 0) in = ad::hcat(in, tape.constant(u_window.row(t).replicate(S, 1)));
      std::vector<Var> next;
      for (int d = 0; d < D; ++d) {
        const auto i = static_cast<std::size_t>(d);
        const Var Kx = ad::rbf_cross(in, tc.Z, tc.var[i], tc.ls[i]);  // S x M
        const Var mean = ad::scale(ad::row_sum(ad::mul(Kx, At[i])), st.step * st.cross);
        const Var V = ad::trisolve(Lk[i], ad::transpose(Kx));
        const Var kk = ad::transpose(ad::col_sum(ad::square(V)));
        const Var prior_var = ad::broadcast_row(ad::scale(tc.var[i], st.state), S);
        const Var fvar = ad::clamp_min(ad::sub(prior_var, ad::scale(kk, st.cross * st.cross)), 0.0);
        const Var var = ad::add(ad::scale(fvar, st.step * st.step), noise[i]);
        const Var eps = tape.constant(pd.step_eps[static_cast<std::size_t>(t)].col(d));
        next.push_back(ad::add(ad::add(xs[i], mean), ad::mul(ad::sqrt(var), eps)));
      }
      xs = std::move(next);
      if (t >= batch.B0) {
        Var out = xs[0];
        for (Eigen::Index d = 1; d < dy; ++d) out = ad::hcat(out, xs[static_cast<std::size_t>(d)]);
        accumulate(pred[static_cast<std::size_t>(t - batch.B0)], out);
      }
    }
  }

  const Var omega = tp.get("omega");
  const Var omega_rows = ad::broadcast_row(omega, S);
  std::optional<Var> quad;
  for (int b = 0; b < batch.B; ++b) {
    const Var target = tape.constant(y_window.row(b).replicate(S, 1));
    const Var r = ad::sub(target, *pred[static_cast<std::size_t>(b)]);
    accumulate(quad, ad::sum(ad::div(ad::square(r), omega_rows)));
  }
  const double J = static_cast<double>(data.length()) / batch.R;
  const double scale = J / batch.B;
  // sum_b mean_s log N = -0.5 (quad / S + B (sum log omega + D_y log 2 pi))
  Var ll = ad::add(ad::scale(*quad, -0.5 / static_cast<double>(S)),
                   ad::scale(ad::sum(ad::log(omega)), -0.5 * batch.B));
  ll = ad::scale(ad::add_scalar(ll, -0.5 * batch.B * static_cast<double>(dy) * kLog2Pi), scale);

  // KL terms of components that are not simulated are constants here.
  double kl_x0_const = 0.0, kl_fM_const = 0.0;
  for (int l = 0; l < model.num_components(); ++l) {
    if (std::find(sims.begin(), sims.end(), l) != sims.end()) continue;
    const ComponentDynamics dyn(model.components[static_cast<std::size_t>(l)]);
    kl_x0_const += kl_gaussian(dyn.q_x0(), model.prior_x0[static_cast<std::size_t>(l)]);
    for (int d = 0; d < dyn.dim(); ++d) kl_fM_const += kl_gaussian(dyn.q_fM(d), dyn.p_fM(d));
  }
  const Var root = ad::sub(ad::sub(ll, *kl_x0_var), *kl_fM_var);
  tape.backward(root);

  ElboGradient out;
  out.estimate.loglik_term = ll.scalar();
  out.estimate.kl_x0 = kl_x0_var->scalar() + kl_x0_const;
  out.estimate.kl_fM = kl_fM_var->scalar() + kl_fM_const;
  out.estimate.value = out.estimate.loglik_term - out.estimate.kl_x0 - out.estimate.kl_fM;
  out.estimate.n_samples = static_cast<int>(S);
  out.estimate.start = draws.start;
  out.estimate.B = batch.B;
  out.estimate.R = batch.R;
  out.grad = tp.gradient();
  return out;
}

}  // namespace mrgp
