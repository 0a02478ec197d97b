#include "mrgp/experiment.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "mrgp/data.hpp"
#include "mrgp/errors.hpp"

namespace mrgp {

namespace {

int parse_positive(const std::string& s, const std::string& what) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || v < 1)
    throw InvalidConfig("bad " + what + " '" + s + "' in component list");
  return v;
}

}  // namespace

std::vector<ComponentSpec> parse_components(const std::string& text) {
  std::vector<ComponentSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InvalidConfig("component '" + item + "' must look like R=<n>:d=<n>");
    const std::string r = item.substr(0, colon), d = item.substr(colon + 1);
    if (r.rfind("R=", 0) != 0 || d.rfind("d=", 0) != 0)
      throw InvalidConfig("component '" + item + "' must look like R=<n>:d=<n>");
    out.push_back({parse_positive(r.substr(2), "resolution"), parse_positive(d.substr(2), "dimension")});
  }
  if (out.empty()) throw InvalidConfig("empty component list");
  return out;
}

std::string format_components(const std::vector<ComponentSpec>& specs) {
  std::string s;
  for (const auto& c : specs) {
    if (!s.empty()) s += ",";
    s += "R=" + std::to_string(c.resolution) + ":d=" + std::to_string(c.dim);
  }
  return s;
}

HoldoutResult run_holdout(const Dataset& raw, const HoldoutConfig& cfg, std::uint64_t seed) {
  if (!(cfg.split > 0.0 && cfg.split < 1.0)) throw InvalidConfig("split must lie in (0, 1)");
  HoldoutResult r;
  r.train_rows = static_cast<Eigen::Index>(std::floor(cfg.split * static_cast<double>(raw.length())));
  if (r.train_rows < 1 || r.train_rows >= raw.length()) throw InvalidConfig("split leaves no training or test rows");
  std::vector<std::string> warnings;
  const Normalization norm = fit_normalization(head_rows(raw, r.train_rows), &warnings);
  const Dataset full = apply_normalization(raw, norm);
  const Dataset train = head_rows(full, r.train_rows);

  RngStream root(seed, 0);
  RngStream init_rng = root.split(1), train_rng = root.split(2), pred_rng = root.split(3);
  Model model = init_model(cfg.components, static_cast<int>(raw.input_dim()), static_cast<int>(raw.output_dim()),
                           raw.dt, cfg.init, init_rng);
  model.normalization = full.normalization;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  r.fit = backfit(model, train, tc, train_rng);
  try {
    r.prediction = predict(r.fit.model, full, cfg.predict_samples, pred_rng);
    r.test = compute_metrics(r.prediction, full.y, r.train_rows, full.length() - r.train_rows);
  } catch (const Error&) {
    r.finite = false;
    r.test = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  r.finite = r.finite && std::isfinite(r.test.rmse) && std::isfinite(r.test.nll);
  return r;
}

}  // namespace mrgp
