#include "mrgp/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "mrgp/errors.hpp"

namespace mrgp {

void PendulumConfig::validate() const {
  if (!(g_over_l > 0.0) || !(damping >= 0.0) || !(diffusion >= 0.0) || !(dt_sim > 0.0) || !(obs_noise >= 0.0))
    throw InvalidConfig("pendulum: g_over_l and dt_sim must be positive, damping, diffusion and obs_noise non-negative");
  if (subsample < 1 || T_out < 2) throw InvalidConfig("pendulum: need subsample >= 1 and T_out >= 2");
  if (dt_sim * std::sqrt(g_over_l) > 0.1) throw InvalidConfig("pendulum: dt_sim is too coarse for g_over_l");
}

double pendulum_energy(const PendulumConfig& cfg, double theta, double omega) {
  return 0.5 * omega * omega + cfg.g_over_l * (1.0 - std::cos(theta));
}

PendulumPath simulate_pendulum(const PendulumConfig& cfg, RngStream& rng) {
  cfg.validate();
  const long n = cfg.T_out * cfg.subsample;
  PendulumPath p;
  p.dt = cfg.dt_sim;
  p.theta.resize(n);
  p.omega.resize(n);
  RngStream dyn = rng.split(0);
  double th = cfg.theta0, om = cfg.omega0;
  const double h = cfg.dt_sim, sq = std::sqrt(cfg.dt_sim);
  for (long i = 0; i < n; ++i) {
    p.theta(i) = th;
    p.omega(i) = om;
    // Semi-implicit Euler-Maruyama: velocity first, then position with the
    // updated velocity.
    om += (-cfg.g_over_l * std::sin(th) - cfg.damping * om) * h + cfg.diffusion * sq * dyn.normal();
    th += om * h;
  }
  return p;
}

Dataset gen_pendulum(const PendulumConfig& cfg, RngStream& rng) {
  const PendulumPath p = simulate_pendulum(cfg, rng);
  const RngStream obs = rng.split(1);
  Eigen::MatrixXd y(cfg.T_out, 1);
  for (long k = 0; k < cfg.T_out; ++k) {
    const long i = k * cfg.subsample;
    RngStream e = obs.split(static_cast<std::uint64_t>(i));
    y(k, 0) = p.theta(i) + cfg.obs_noise * e.normal();
  }
  return make_dataset(Eigen::MatrixXd(cfg.T_out, 0), std::move(y), cfg.dt_sim * cfg.subsample);
}

void MultiScaleConfig::validate() const {
  if (T < 2) throw InvalidConfig("multiscale: T must be at least 2");
  if (!(fast.period > 2.0) || !(slow.period > 0.0)) throw InvalidConfig("multiscale: periods must exceed 2 steps");
  if (slow.period < 10.0 * fast.period) throw InvalidConfig("multiscale: slow period must be at least 10x the fast period");
  if (fast.amplitude < 0.0 || slow.amplitude < 0.0 || obs_noise < 0.0 || input_noise < 0.0)
    throw InvalidConfig("multiscale: amplitudes and noise levels must be non-negative");
  if (!(fast.radius > 0.0 && fast.radius < 1.0)) throw InvalidConfig("multiscale: fast.radius must lie in (0, 1)");
  if (input_dim < 1) throw InvalidConfig("multiscale: input_dim must be at least 1");
}

namespace {

// Unit-variance Ornstein-Uhlenbeck sequence with correlation time tau steps.
Eigen::VectorXd smooth_noise(long T, double tau, RngStream& rng) {
  const double a = std::exp(-1.0 / tau);
  const double b = std::sqrt(1.0 - a * a);
  Eigen::VectorXd v(T);
  double s = rng.normal();
  for (long t = 0; t < T; ++t) {
    v(t) = s;
    s = a * s + b * rng.normal();
  }
  return v;
}

Eigen::VectorXd scaled_to(const Eigen::VectorXd& v, double amplitude) {
  if (amplitude == 0.0) return Eigen::VectorXd::Zero(v.size());
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().mean());
  return sd > 0.0 ? Eigen::VectorXd(amplitude * v / sd) : Eigen::VectorXd(v);
}

}  // namespace

MultiScaleData gen_multiscale(const MultiScaleConfig& cfg, RngStream& rng) {
  cfg.validate();
  const long T = cfg.T;
  const double two_pi = 2.0 * std::numbers::pi;
  RngStream in_rng = rng.split(0);
  RngStream obs_rng = rng.split(1);

  Eigen::MatrixXd u(T, cfg.input_dim);
  const double phase_fast = in_rng.uniform(0.0, two_pi);
  const double phase_slow = in_rng.uniform(0.0, two_pi);
  const Eigen::VectorXd n_fast = smooth_noise(T, cfg.fast.period / 2.0, in_rng);
  const Eigen::VectorXd n_slow = smooth_noise(T, cfg.slow.period / 10.0, in_rng);
  for (long t = 0; t < T; ++t) {
    const double td = static_cast<double>(t);
    u(t, 0) = std::sin(two_pi * td / cfg.fast.period + phase_fast) + cfg.input_noise * n_fast(t);
    if (cfg.input_dim > 1) u(t, 1) = std::sin(two_pi * td / cfg.slow.period + phase_slow) + cfg.input_noise * n_slow(t);
  }
  for (int k = 2; k < cfg.input_dim; ++k) u.col(k) = smooth_noise(T, 20.0, in_rng);
  // With a single input the slow channel is driven by its own sinusoid.
  const Eigen::VectorXd slow_drive =
      cfg.input_dim > 1 ? Eigen::VectorXd(u.col(1)) : Eigen::VectorXd(Eigen::VectorXd::NullaryExpr(T, [&](Eigen::Index t) {
        return std::sin(two_pi * static_cast<double>(t) / cfg.slow.period + phase_slow);
      }));

  // Fast: damped rotation by 2 pi / period per step, kicked by u1.
  Eigen::VectorXd fast(T);
  const double ang = two_pi / cfg.fast.period;
  const double c = cfg.fast.radius * std::cos(ang), s = cfg.fast.radius * std::sin(ang);
  double z1 = 0.0, z2 = 0.0;
  for (long t = 0; t < T; ++t) {
    fast(t) = z1;
    const double n1 = c * z1 - s * z2 + cfg.fast.gain * u(t, 0);
    const double n2 = s * z1 + c * z2;
    z1 = n1;
    z2 = n2;
  }
  // Slow: first-order low pass of the slow drive.
  Eigen::VectorXd slow(T);
  const double tau = cfg.slow.period / 6.0;
  double x = slow_drive(0);
  for (long t = 0; t < T; ++t) {
    slow(t) = x;
    x += (slow_drive(t) - x) / tau;
  }

  MultiScaleData out;
  out.truth.resize(T, 2);
  out.truth.col(0) = scaled_to(fast, cfg.fast.amplitude);
  out.truth.col(1) = scaled_to(slow, cfg.slow.amplitude);
  out.noise = cfg.obs_noise * obs_rng.normal_vector(T);
  Eigen::MatrixXd y = out.truth.col(0) + out.truth.col(1) + out.noise;
  out.data = make_dataset(std::move(u), std::move(y), 1.0);
  return out;
}

namespace {

using nlohmann::json;

json parse_object(const std::string& text) {
  json j;
  try {
    j = text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("config does not parse: ") + e.what());
  }
  if (!j.is_object()) throw InvalidConfig("config must be a JSON object");
  return j;
}

template <class T>
void read_key(json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidConfig(std::string("config key '") + key + "' has the wrong type");
  }
  j.erase(key);
}

void reject_leftovers(const json& j, const std::string& where) {
  if (!j.empty()) throw InvalidConfig("unknown " + where + " config key '" + j.begin().key() + "'");
}

}  // namespace

PendulumConfig pendulum_config_from_json(const std::string& text) {
  json j = parse_object(text);
  PendulumConfig c;
  read_key(j, "g_over_l", c.g_over_l);
  read_key(j, "damping", c.damping);
  read_key(j, "diffusion", c.diffusion);
  read_key(j, "dt_sim", c.dt_sim);
  read_key(j, "subsample", c.subsample);
  read_key(j, "T_out", c.T_out);
  read_key(j, "obs_noise", c.obs_noise);
  read_key(j, "theta0", c.theta0);
  read_key(j, "omega0", c.omega0);
  reject_leftovers(j, "pendulum");
  c.validate();
  return c;
}

MultiScaleConfig multiscale_config_from_json(const std::string& text) {
  json j = parse_object(text);
  MultiScaleConfig c;
  read_key(j, "T", c.T);
  read_key(j, "obs_noise", c.obs_noise);
  read_key(j, "input_dim", c.input_dim);
  read_key(j, "input_noise", c.input_noise);
  if (j.contains("fast")) {
    json f = j["fast"];
    if (!f.is_object()) throw InvalidConfig("config key 'fast' must be an object");
    read_key(f, "period", c.fast.period);
    read_key(f, "amplitude", c.fast.amplitude);
    read_key(f, "gain", c.fast.gain);
    read_key(f, "radius", c.fast.radius);
    reject_leftovers(f, "fast");
    j.erase("fast");
  }
  if (j.contains("slow")) {
    json s = j["slow"];
    if (!s.is_object()) throw InvalidConfig("config key 'slow' must be an object");
    read_key(s, "period", c.slow.period);
    read_key(s, "amplitude", c.slow.amplitude);
    reject_leftovers(s, "slow");
    j.erase("slow");
  }
  reject_leftovers(j, "multiscale");
  c.validate();
  return c;
}

namespace {

ColumnTransform column_stats(const Eigen::MatrixXd& X, const char* label, std::vector<std::string>* warnings) {
  ColumnTransform t = ColumnTransform::identity(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    const double sd = std::sqrt((X.col(j).array() - mean).square().mean());
    t.mean(j) = mean;
    if (sd > 0.0) {
      t.std(j) = sd;
    } else {
      std::ostringstream os;
      os << "column " << label << j + 1 << " has zero variance; keeping scale 1";
      if (warnings) {
        warnings->push_back(os.str());
      } else {
        std::cerr << "warning: " << os.str() << "\n";
      }
    }
  }
  return t;
}

ColumnTransform compose(const ColumnTransform& first, const ColumnTransform& second) {
  if (first.empty()) return second;
  ColumnTransform c;
  c.mean = first.mean.array() + first.std.array() * second.mean.array();
  c.std = first.std.array() * second.std.array();
  return c;
}

}  // namespace

Normalization fit_normalization(const Dataset& data, std::vector<std::string>* warnings) {
  return {column_stats(data.u, "u", warnings), column_stats(data.y, "y", warnings)};
}

Dataset apply_normalization(const Dataset& data, const Normalization& n) {
  if (n.u.mean.size() != data.u.cols() || n.y.mean.size() != data.y.cols())
    throw DimensionMismatch("normalization does not match the dataset columns");
  Dataset out = data;
  out.u = n.u.apply(data.u);
  out.y = n.y.apply(data.y);
  out.normalization.u = compose(data.normalization.u, n.u);
  out.normalization.y = compose(data.normalization.y, n.y);
  return out;
}

Dataset normalize(const Dataset& data, std::vector<std::string>* warnings) {
  return apply_normalization(data, fit_normalization(data, warnings));
}

Dataset head_rows(const Dataset& data, Eigen::Index rows) {
  if (rows < 1 || rows > data.length()) throw InvalidConfig("row count out of range");
  Dataset out = data;
  out.t = data.t.head(rows);
  out.u = data.u.topRows(rows);
  out.y = data.y.topRows(rows);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string to_csv(const Dataset& data) {
  std::string s = "t";
  for (Eigen::Index j = 0; j < data.u.cols(); ++j) s += ",u" + std::to_string(j + 1);
  for (Eigen::Index j = 0; j < data.y.cols(); ++j) s += ",y" + std::to_string(j + 1);
  s += "\n";
  for (Eigen::Index i = 0; i < data.length(); ++i) {
    s += format_double(data.t(i));
    for (Eigen::Index j = 0; j < data.u.cols(); ++j) s += "," + format_double(data.u(i, j));
    for (Eigen::Index j = 0; j < data.y.cols(); ++j) s += "," + format_double(data.y(i, j));
    s += "\n";
  }
  return s;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + path);
  out << to_csv(data);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, long row) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  const auto res = std::from_chars(cell.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    // from_chars rejects "nan"/"inf" spellings with signs in some forms;
    // anything unparseable is reported as non-finite.
    throw NonFiniteValue("row " + std::to_string(row) + ": cannot parse '" + cell + "'", row);
  }
  if (!std::isfinite(v)) throw NonFiniteValue("row " + std::to_string(row) + ": non-finite value", row);
  return v;
}

}  // namespace

Dataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw MalformedHeader("empty CSV: missing column t", "t");
  const std::vector<std::string> header = split_line(line);
  if (header.empty() || header[0] != "t") throw MalformedHeader("CSV header must start with column t", "t");
  std::size_t k = 1;
  int du = 0, dy = 0;
  while (k < header.size() && !header[k].empty() && header[k][0] == 'u') {
    const std::string want = "u" + std::to_string(du + 1);
    if (header[k] != want) throw MalformedHeader("CSV header is missing column " + want, want);
    ++du;
    ++k;
  }
  while (k < header.size()) {
    const std::string want = "y" + std::to_string(dy + 1);
    if (header[k] != want) throw MalformedHeader("CSV header is missing column " + want, want);
    ++dy;
    ++k;
  }
  if (dy == 0) throw MalformedHeader("CSV header is missing column y1", "y1");

  std::vector<double> t;
  std::vector<std::vector<double>> rows;
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw MalformedHeader("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, header has " +
                                std::to_string(header.size()),
                            cells.size() < header.size() ? header[cells.size()] : "t");
    std::vector<double> vals;
    for (const auto& c : cells) vals.push_back(parse_cell(c, row));
    rows.push_back(std::move(vals));
    ++row;
  }
  const auto T = static_cast<Eigen::Index>(rows.size());
  Dataset d;
  d.t.resize(T);
  d.u.resize(T, du);
  d.y.resize(T, dy);
  for (Eigen::Index i = 0; i < T; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    d.t(i) = r[0];
    for (int j = 0; j < du; ++j) d.u(i, j) = r[static_cast<std::size_t>(1 + j)];
    for (int j = 0; j < dy; ++j) d.y(i, j) = r[static_cast<std::size_t>(1 + du + j)];
  }
  if (T < 2) throw InvalidConfig("CSV needs at least two rows");
  const double dt = d.t(1) - d.t(0);
  if (!(dt > 0.0)) throw NonUniformSpacing("row 1: t is not strictly increasing", 1);
  for (Eigen::Index i = 1; i < T; ++i) {
    const double step = d.t(i) - d.t(i - 1);
    if (!(step > 0.0) || std::abs(step - dt) > 1e-9 * std::abs(dt)) {
      throw NonUniformSpacing("row " + std::to_string(i) + ": spacing " + format_double(step) + " differs from " +
                                  format_double(dt),
                              static_cast<long>(i));
    }
  }
  d.dt = dt;
  d.normalization = {ColumnTransform::identity(du), ColumnTransform::identity(dy)};
  return d;
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

void write_table(const std::string& path, const std::vector<std::string>& header, const Eigen::MatrixXd& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) out << (j ? "," : "") << format_double(rows(i, j));
    out << "\n";
  }
}

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw MalformedHeader("empty table " + path, "");
  Table tab;
  tab.header = split_line(line);
  std::vector<std::vector<double>> rows;
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != tab.header.size())
      throw MalformedHeader("row " + std::to_string(row) + " does not match the header of " + path,
                            cells.size() < tab.header.size() ? tab.header[cells.size()] : tab.header.back());
    std::vector<double> vals;
    for (const auto& c : cells) vals.push_back(parse_cell(c, row));
    rows.push_back(std::move(vals));
    ++row;
  }
  tab.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(tab.header.size()));
  for (Eigen::Index i = 0; i < tab.rows.rows(); ++i)
    for (Eigen::Index j = 0; j < tab.rows.cols(); ++j)
      tab.rows(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return tab;
}

}  // namespace mrgp
