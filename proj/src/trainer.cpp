#include "mrgp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mrgp/errors.hpp"
#include "mrgp/sampling.hpp"

namespace mrgp {

void TrainConfig::validate() const {
  if (cycles < 0 || iters_per_component < 0) throw InvalidConfig("cycles and iterations must be non-negative");
  if (B < 1 || B0 < 0 || S < 1 || minibatches_per_iter < 1 || cache_samples < 1)
    throw InvalidConfig("B, S, minibatches and cache samples must be positive, B0 non-negative");
  if (!(lr0 >= 0.0) || !(lr_decay_factor > 0.0) || lr_decay_every < 1) throw InvalidConfig("invalid learning-rate schedule");
}

AdamState AdamState::zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }

void adam_step(AdamState& s, Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr,
               const std::vector<char>& mask, double beta1, double beta2, double eps) {
  if (grad.size() != params.size() || s.m.size() != params.size() || s.v.size() != params.size())
    throw DimensionMismatch("adam_step: sizes differ");
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != params.size())
    throw DimensionMismatch("adam_step: mask size differs");
  ++s.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (!mask.empty() && mask[static_cast<std::size_t>(i)] == 0) continue;
    s.m(i) = beta1 * s.m(i) + (1.0 - beta1) * grad(i);
    s.v(i) = beta2 * s.v(i) + (1.0 - beta2) * grad(i) * grad(i);
    params(i) -= lr * (s.m(i) / c1) / (std::sqrt(s.v(i) / c2) + eps);
  }
}

double lr_schedule(int step, double lr0, const TrainConfig& cfg) {
  return lr0 * std::pow(cfg.lr_decay_factor, static_cast<double>(step / cfg.lr_decay_every));
}

std::vector<int> default_order(const Model& model) {
  std::vector<int> order(model.components.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return model.components[static_cast<std::size_t>(a)].resolution > model.components[static_cast<std::size_t>(b)].resolution;
  });
  return order;
}

Eigen::MatrixXd refresh_cache(const Model& model, const Dataset& data, int l, int S, RngStream& rng) {
  const ComponentParams& c = model.components.at(static_cast<std::size_t>(l));
  const int T = static_cast<int>(data.length());
  const Eigen::MatrixXd u_rows = transition_inputs(data.u, 0, 1, 0, T);
  const PathDraws draws = PathDraws::sample(S, c.dim, c.inducing.size(), T, rng);
  const LatentPath p = simulate_fullmc(ComponentDynamics(c), u_rows, SdeStep::make(c, model.dt, model.dt), T, 0, draws);
  return p.mean();
}

namespace {

// Per-coordinate mask from a per-block mask.
std::vector<char> expand_mask(const ParamLayout& layout, const std::vector<char>& block_mask) {
  std::vector<char> m(static_cast<std::size_t>(layout.size()), 0);
  for (std::size_t i = 0; i < layout.blocks().size(); ++i) {
    const ParamBlock& b = layout.blocks()[i];
    for (Eigen::Index k = 0; k < b.size; ++k) m[static_cast<std::size_t>(b.offset + k)] = block_mask[i];
  }
  return m;
}

}  // namespace

void update_component(const ParamLayout& layout, Eigen::VectorXd& theta, const Model& structure, const Dataset& data,
                      const CachedLatents& cached, int l, const TrainConfig& cfg, RngStream& rng, int cycle,
                      TrainResult& result, const std::function<void(const TrainRecord&)>& on_record) {
  const ComponentParams& c = structure.components.at(static_cast<std::size_t>(l));
  const BatchSpec batch{c.resolution, cfg.B, cfg.B0};
  const std::vector<char> blocks = layout.trainable_mask(l);
  const std::vector<char> coords = expand_mask(layout, blocks);
  const Eigen::MatrixXd targets = partial_residual(data, cached, l);
  AdamState adam = AdamState::zeros(theta.size());
  double lr_scale = 1.0;
  for (int it = 0; it < cfg.iters_per_component; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_scale * lr_schedule(it, cfg.lr0, cfg);
    double value = 0.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
    bool ok = true;
    std::string why;
    for (int mb = 0; mb < cfg.minibatches_per_iter && ok; ++mb) {
      try {
        const ElboDraws draws = draw_elbo_noise(structure, data.length(), l, batch, cfg.S, rng);
        const ElboGradient g = elbo_value_and_grad(layout, theta, structure, data, targets, l, batch, draws, blocks);
        value += g.estimate.value;
        grad += g.grad;
      } catch (const WindowTooLong&) {
        throw;
      } catch (const Error& e) {
        ok = false;
        why = e.what();
      }
    }
    value /= cfg.minibatches_per_iter;
    grad /= cfg.minibatches_per_iter;
    if (ok && (!std::isfinite(value) || !grad.allFinite())) {
      ok = false;
      why = "non-finite loss or gradient";
    }
    if (ok) {
      adam_step(adam, theta, -grad, lr, coords);
    } else {
      lr_scale *= 0.5;
      std::ostringstream os;
      os << "cycle " << cycle << " component " << l << " iter " << it << ": skipped step (" << why
         << "), learning rate halved";
      result.events.push_back(os.str());
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    TrainRecord rec{cycle, l, it, ok ? value : std::nan(""), lr, ms};
    result.history.push_back(rec);
    if (on_record) on_record(rec);
  }
}

TrainResult backfit(const Model& model, const Dataset& data, const TrainConfig& cfg, RngStream& rng,
                    const std::function<void(const TrainRecord&)>& on_record) {
  cfg.validate();
  model.validate();
  if (data.output_dim() != model.emission.out_dim || data.input_dim() != model.input_dim)
    throw DimensionMismatch("dataset dimensions do not match the model");
  for (const auto& c : model.components) {
    const long need = static_cast<long>(c.resolution) * cfg.B;
    if (data.length() < need) {
      std::ostringstream os;
      os << "resolution " << c.resolution << " with B = " << cfg.B << " needs T >= " << need << ", got "
         << data.length();
      throw WindowTooLong(os.str(), need);
    }
  }
  std::vector<int> order = cfg.order.empty() ? default_order(model) : cfg.order;
  for (int l : order)
    if (l < 0 || l >= model.num_components()) throw InvalidConfig("update order names an unknown component");

  TrainResult result;
  result.model = model;
  const ParamLayout layout(model);
  Eigen::VectorXd theta = pack(model, layout);
  const int cache_paths = cfg.sampled_residuals ? 1 : cfg.cache_samples;
  CachedLatents cached(model.components.size());
  for (int l = 0; l < model.num_components(); ++l)
    cached.set(l, refresh_cache(model, data, l, cache_paths, rng), cache_paths);

  for (int cycle = 0; cycle < cfg.cycles; ++cycle) {
    for (int l : order) {
      if (cfg.iters_per_component == 0) continue;
      update_component(layout, theta, model, data, cached, l, cfg, rng, cycle, result, on_record);
      result.model = unpack(theta, layout, model);
      cached.set(l, refresh_cache(result.model, data, l, cache_paths, rng), cache_paths);
    }
  }
  result.model = unpack(theta, layout, model);
  if (cfg.cycles == 0 || cfg.iters_per_component == 0) result.model = model;
  return result;
}

}  // namespace mrgp
