#include "cli.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "mrgp/data.hpp"
#include "mrgp/errors.hpp"
#include "mrgp/evaluation.hpp"
#include "mrgp/experiment.hpp"
#include "mrgp/model_io.hpp"
#include "mrgp/verification.hpp"

#ifndef MRGP_SOURCE_DIR
#define MRGP_SOURCE_DIR "."
#endif

namespace mrgp {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Raised for incompatibilities between data, model and window settings.
struct Incompatible : Error {
  using Error::Error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + path);
  out << text;
}

std::string sha256_file(const std::string& path) {
  const std::string bytes = read_file(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
    throw Error("SHA-256 digest failed for " + path);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string git_describe() {
  const std::string cmd = std::string("git -C \"") + MRGP_SOURCE_DIR + "\" describe --always --dirty 2>/dev/null";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) return "unknown";
  std::string s;
  char buf[256];
  while (std::fgets(buf, sizeof(buf), pipe.get())) s += buf;
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s.empty() ? "unknown" : s;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string stem_path(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  const std::string ext = p.extension().string();
  p.replace_extension();
  return p.string() + suffix + (ext.empty() ? ".csv" : ext);
}

// Options shared by train and gridsearch.
struct FitOptions {
  TrainConfig train;
  InitConfig init;
  int predict_samples = 50;

  void add_to(CLI::App* app) {
    app->add_option("--cycles", train.cycles, "backfitting cycles")->capture_default_str();
    app->add_option("--iters", train.iters_per_component, "optimizer steps per component per cycle")
        ->capture_default_str();
    app->add_option("--batch", train.B, "mini-batch length B")->capture_default_str();
    app->add_option("--buffer", train.B0, "buffer length B0")->capture_default_str();
    app->add_option("--samples", train.S, "sample paths per mini-batch")->capture_default_str();
    app->add_option("--minibatches", train.minibatches_per_iter, "mini-batches per step")->capture_default_str();
    app->add_option("--lr", train.lr0, "initial learning rate")->capture_default_str();
    app->add_option("--cache-samples", train.cache_samples, "paths used for cached component means")
        ->capture_default_str();
    app->add_flag("--sampled-residuals", train.sampled_residuals, "cache one sample path instead of the mean");
    app->add_option("--inducing", init.num_inducing, "inducing points per component")->capture_default_str();
  }

  json to_json() const {
    return {{"cycles", train.cycles},
            {"iters_per_component", train.iters_per_component},
            {"B", train.B},
            {"B0", train.B0},
            {"S", train.S},
            {"minibatches_per_iter", train.minibatches_per_iter},
            {"lr0", train.lr0},
            {"lr_decay_factor", train.lr_decay_factor},
            {"lr_decay_every", train.lr_decay_every},
            {"cache_samples", train.cache_samples},
            {"sampled_residuals", train.sampled_residuals},
            {"num_inducing", init.num_inducing}};
  }
};

struct SimulateArgs {
  std::string kind, config, out;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string data, components, out;
  std::uint64_t seed = 0;
  long train_rows = 0;
  FitOptions fit;
};

struct PredictArgs {
  std::string model, data, out;
  std::uint64_t seed = 0;
  int samples = 50;
};

struct EvalArgs {
  std::string pred, data, model, out;
  bool raw = false;
  long from = 0;
};

struct GridArgs {
  std::string data, grid, out, long_out;
  std::uint64_t seed = 0;
  int dim = 2;
  double split = 0.5;
  FitOptions fit;
};

struct VerifyArgs {
  VerifyOptions opts;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  RngStream rng(a.seed, 0);
  const std::string text = a.config.empty() ? "{}" : read_file(a.config);
  if (a.kind == "pendulum") {
    const PendulumConfig cfg = pendulum_config_from_json(text);
    const Dataset d = gen_pendulum(cfg, rng);
    write_csv(d, a.out);
    RngStream again(a.seed, 0);
    const PendulumPath path = simulate_pendulum(cfg, again);
    Eigen::MatrixXd truth(d.length(), 3);
    for (Eigen::Index i = 0; i < d.length(); ++i) {
      const Eigen::Index k = i * cfg.subsample;
      truth.row(i) << d.t(i), path.theta(k), path.omega(k);
    }
    write_table(stem_path(a.out, "_truth"), {"t", "theta", "omega"}, truth);
  } else {
    const MultiScaleData m = gen_multiscale(multiscale_config_from_json(text), rng);
    write_csv(m.data, a.out);
    Eigen::MatrixXd truth(m.data.length(), 4);
    truth << m.data.t, m.truth, m.noise;
    write_table(stem_path(a.out, "_truth"), {"t", "fast", "slow", "noise"}, truth);
  }
  out << "wrote " << a.out << " and " << stem_path(a.out, "_truth") << "\n";
  return 0;
}

void check_window(const Dataset& data, const std::vector<ComponentSpec>& specs, const TrainConfig& cfg) {
  for (const auto& c : specs) {
    const long need = static_cast<long>(c.resolution) * cfg.B;
    if (data.length() < need)
      throw WindowTooLong("T = " + std::to_string(data.length()) + " is shorter than R*B = " + std::to_string(need) +
                              " for resolution " + std::to_string(c.resolution) + "; minimum T is " +
                              std::to_string(need),
                          need);
  }
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const auto specs = parse_components(a.components);
  a.fit.train.validate();
  Dataset raw = read_csv(a.data);
  if (a.train_rows > 0) raw = head_rows(raw, a.train_rows);
  check_window(raw, specs, a.fit.train);

  fs::create_directories(a.out);
  const std::string model_path = (fs::path(a.out) / "model.json").string();
  const std::string log_path = (fs::path(a.out) / "train_log.csv").string();
  const std::string manifest_path = (fs::path(a.out) / "manifest.json").string();

  json manifest;
  manifest["command"] = "train";
  manifest["argv"] = argv;
  manifest["config"] = a.fit.to_json();
  manifest["config"]["components"] = format_components(specs);
  manifest["config"]["train_rows"] = raw.length();
  manifest["seed"] = a.seed;
  manifest["git_describe"] = git_describe();
  manifest["inputs"] = {{"data", {{"path", a.data}, {"sha256", sha256_file(a.data)}}}};
  manifest["outputs"] = {{"model", model_path}, {"train_log", log_path}};
  manifest["started_at_utc"] = utc_now();
  write_file(manifest_path, manifest.dump(2) + "\n");

  std::vector<std::string> warnings;
  const Dataset data = normalize(raw, &warnings);
  for (const auto& w : warnings) out << "warning: " << w << "\n";

  RngStream root(a.seed, 0);
  RngStream init_rng = root.split(1), train_rng = root.split(2);
  Model model = init_model(specs, static_cast<int>(data.input_dim()), static_cast<int>(data.output_dim()), data.dt,
                           a.fit.init, init_rng);
  model.normalization = data.normalization;
  TrainConfig tc = a.fit.train;
  tc.seed = a.seed;

  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw InvalidConfig("cannot write " + log_path);
  log << "cycle,component,iter,elbo,lr,wall_ms\n";
  const TrainResult r = backfit(model, data, tc, train_rng, [&](const TrainRecord& rec) {
    log << rec.cycle << "," << rec.component << "," << rec.iter << "," << format_double(rec.elbo) << ","
        << format_double(rec.lr) << "," << format_double(rec.wall_ms) << "\n";
  });
  save_model(r.model, model_path);
  for (const auto& e : r.events) out << "event: " << e << "\n";
  if (!r.history.empty())
    out << "elbo first " << format_double(r.history.front().elbo) << " last " << format_double(r.history.back().elbo)
        << "\n";
  out << "wrote " << model_path << "\n";
  return 0;
}

Dataset to_model_units(const Dataset& raw, const Model& model) {
  if (raw.input_dim() != model.input_dim || raw.output_dim() != model.emission.out_dim)
    throw Incompatible("data has " + std::to_string(raw.input_dim()) + " inputs and " +
                       std::to_string(raw.output_dim()) + " outputs, model expects " +
                       std::to_string(model.input_dim) + " and " + std::to_string(model.emission.out_dim));
  if (!model.normalization) return raw;
  return apply_normalization(raw, *model.normalization);
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Model model = load_model(a.model);
  const Dataset data = to_model_units(read_csv(a.data), model);
  if (a.samples < 1) throw InvalidConfig("--samples must be positive");
  RngStream rng(a.seed, 0);
  Prediction p = predict(model, data, a.samples, rng);
  if (model.normalization) p = denormalize(p, model.normalization->y);
  const Eigen::Index dy = p.mean.cols();
  Eigen::MatrixXd table(data.length(), 1 + 2 * dy);
  table << data.t, p.mean, p.var;
  std::vector<std::string> header{"t"};
  for (Eigen::Index j = 0; j < dy; ++j) header.push_back("mean_y" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < dy; ++j) header.push_back("var_y" + std::to_string(j + 1));
  write_table(a.out, header, table);
  out << "wrote " << a.out << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Table tab = read_table(a.pred);
  Dataset data = read_csv(a.data);
  const Eigen::Index dy = data.output_dim();
  if (tab.rows.cols() != 1 + 2 * dy)
    throw Incompatible("prediction file has " + std::to_string(tab.rows.cols()) + " columns, expected " +
                       std::to_string(1 + 2 * dy));
  if (tab.rows.rows() != data.length())
    throw Incompatible("prediction has " + std::to_string(tab.rows.rows()) + " rows, data has " +
                       std::to_string(data.length()));
  if (a.from < 0 || a.from >= data.length()) throw InvalidConfig("--from is outside the data");
  Prediction p{tab.rows.middleCols(1, dy), tab.rows.middleCols(1 + dy, dy)};
  if (!a.raw) {
    if (a.model.empty()) throw InvalidConfig("normalized metrics need --model (or pass --raw)");
    const Model model = load_model(a.model);
    if (model.normalization) {
      const ColumnTransform& ty = model.normalization->y;
      if (ty.mean.size() != dy) throw Incompatible("model normalization does not match the outputs");
      data.y = ty.apply(data.y);
      p.mean = ty.apply(p.mean);
      p.var = p.var.array().rowwise() / ty.std.transpose().array().square();
    }
  }
  const Metrics m = compute_metrics(p, data.y, a.from, data.length() - a.from);
  const json doc = {{"rmse", m.rmse},
                    {"nll", m.nll},
                    {"rows", data.length() - a.from},
                    {"from", a.from},
                    {"units", a.raw ? "raw" : "normalized"}};
  const std::string text = doc.dump(2) + "\n";
  if (!a.out.empty()) write_file(a.out, text);
  out << text;
  return 0;
}

std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> out;
  for (const auto& c : parse_components([&] {
         std::string s, item;
         std::stringstream ss(text);
         while (std::getline(ss, item, ',')) s += (s.empty() ? "" : ",") + ("R=" + item + ":d=1");
         return s;
       }()))
    out.push_back(c.resolution);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int cmd_gridsearch(const GridArgs& a, std::ostream& out) {
  const std::vector<int> grid = parse_grid(a.grid);
  a.fit.train.validate();
  const Dataset raw = read_csv(a.data);
  const auto train_rows = static_cast<Eigen::Index>(std::floor(a.split * static_cast<double>(raw.length())));
  for (int R : grid) check_window(head_rows(raw, std::max<Eigen::Index>(train_rows, 1)), {{R, a.dim}}, a.fit.train);

  Eigen::MatrixXd table(static_cast<Eigen::Index>(grid.size()), 3);
  Eigen::MatrixXd long_rows(2 * static_cast<Eigen::Index>(grid.size()), 3);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    HoldoutConfig cfg;
    cfg.components = {{grid[i], a.dim}};
    cfg.init = a.fit.init;
    cfg.train = a.fit.train;
    cfg.split = a.split;
    cfg.predict_samples = a.fit.predict_samples;
    const HoldoutResult r = run_holdout(raw, cfg, a.seed);
    const auto k = static_cast<Eigen::Index>(i);
    table.row(k) << grid[i], r.test.rmse, r.test.nll;
    long_rows.row(2 * k) << grid[i], 0, r.test.rmse;
    long_rows.row(2 * k + 1) << grid[i], 1, r.test.nll;
    out << "R=" << grid[i] << " rmse " << format_double(r.test.rmse) << " nll " << format_double(r.test.nll) << "\n";
  }
  write_table(a.out, {"R", "rmse", "nll"}, table);
  const std::string long_path = a.long_out.empty() ? stem_path(a.out, "_long") : a.long_out;
  std::ofstream lf(long_path, std::ios::binary);
  if (!lf) throw InvalidConfig("cannot write " + long_path);
  lf << "R,metric,value\n";
  for (Eigen::Index i = 0; i < long_rows.rows(); ++i)
    lf << static_cast<int>(long_rows(i, 0)) << "," << (long_rows(i, 1) == 0 ? "rmse" : "nll") << ","
       << format_double(long_rows(i, 2)) << "\n";
  out << "wrote " << a.out << " and " << long_path << "\n";
  return 0;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const auto checks = run_verification(a.opts);
  const std::string report = verification_report_json(checks);
  if (!a.out.empty()) write_file(a.out, report);
  out << report;
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; }) ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-resolution GP state-space models"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  s_sim->add_option("--kind", sim.kind, "pendulum or multiscale")
      ->required()
      ->check(CLI::IsMember({"pendulum", "multiscale"}));
  s_sim->add_option("--config", sim.config, "JSON generator config (defaults if omitted)");
  s_sim->add_option("--out", sim.out, "output CSV")->required();
  s_sim->add_option("--seed", sim.seed, "random seed")->capture_default_str();

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "fit a model by backfitting");
  s_train->add_option("--data", tr.data, "training CSV")->required();
  s_train->add_option("--components", tr.components, "e.g. R=30:d=2,R=1:d=2")->required();
  s_train->add_option("--seed", tr.seed, "random seed")->required();
  s_train->add_option("--out", tr.out, "output directory")->required();
  s_train->add_option("--train-rows", tr.train_rows, "use only the first n rows");
  tr.fit.add_to(s_train);

  PredictArgs pr;
  auto* s_pred = app.add_subcommand("predict", "free-run predictions");
  s_pred->add_option("--model", pr.model, "model JSON")->required();
  s_pred->add_option("--data", pr.data, "CSV with the inputs to predict on")->required();
  s_pred->add_option("--out", pr.out, "predictions CSV")->required();
  s_pred->add_option("--seed", pr.seed, "random seed")->required();
  s_pred->add_option("--samples", pr.samples, "sample paths per component")->capture_default_str();

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "RMSE and nLL of predictions");
  s_eval->add_option("--pred", ev.pred, "predictions CSV")->required();
  s_eval->add_option("--data", ev.data, "CSV with targets")->required();
  s_eval->add_option("--model", ev.model, "model JSON providing the normalization");
  s_eval->add_flag("--raw", ev.raw, "metrics in raw units");
  s_eval->add_option("--from", ev.from, "first scored row")->capture_default_str();
  s_eval->add_option("--out", ev.out, "metrics JSON");

  GridArgs gr;
  auto* s_grid = app.add_subcommand("gridsearch", "single-component models over a grid of resolutions");
  s_grid->add_option("--data", gr.data, "CSV dataset")->required();
  s_grid->add_option("--grid", gr.grid, "comma-separated resolutions")->required();
  s_grid->add_option("--seed", gr.seed, "random seed")->required();
  s_grid->add_option("--out", gr.out, "table CSV")->required();
  s_grid->add_option("--long-out", gr.long_out, "long-format CSV (default <out>_long.csv)");
  s_grid->add_option("--dim", gr.dim, "latent dimension")->capture_default_str();
  s_grid->add_option("--split", gr.split, "training fraction")->capture_default_str();
  s_grid->add_option("--predict-samples", gr.fit.predict_samples, "prediction sample paths")->capture_default_str();
  gr.fit.add_to(s_grid);

  VerifyArgs ve;
  auto* s_ver = app.add_subcommand("verify", "run the equivalence and property checks");
  s_ver->add_option("--seed", ve.opts.seed, "random seed")->capture_default_str();
  s_ver->add_flag("--mutate-kernel-rescaling", ve.opts.mutate_kernel_rescaling, "break the kernel rescaling");
  s_ver->add_option("--samples", ve.opts.statistical_samples, "samples for marginal checks")->capture_default_str();
  s_ver->add_option("--paths", ve.opts.correlation_paths, "paths for the correlation check")->capture_default_str();
  s_ver->add_option("--out", ve.out, "report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (s_sim->parsed()) return cmd_simulate(sim, out);
    if (s_train->parsed()) return cmd_train(tr, args, out);
    if (s_pred->parsed()) return cmd_predict(pr, out);
    if (s_eval->parsed()) return cmd_eval(ev, out);
    if (s_grid->parsed()) return cmd_gridsearch(gr, out);
    if (s_ver->parsed()) return cmd_verify(ve, out);
  } catch (const WindowTooLong& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const Incompatible& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const InvalidConfig& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const MalformedHeader& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NonUniformSpacing& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NonFiniteValue& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace mrgp
