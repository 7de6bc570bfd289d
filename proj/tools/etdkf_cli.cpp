#include "etdkf/decomp.hpp"
#include "etdkf/kalman.hpp"
#include "etdkf/linalg.hpp"
#include "etdkf/lowrank.hpp"
#include "etdkf/rng.hpp"
#include "etdkf/scenario.hpp"
#include "etdkf/simnet.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace etdkf;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitValidation = 4;

int exit_code(ErrorCode c) {
  if (c == ErrorCode::ConfigParse) return kExitConfig;
  if (c == ErrorCode::Io) return kExitIo;
  return 10 + int(c);
}

struct Overrides {
  std::string scenario;
  std::string builtin;
  std::string out = ".";
  std::string decompositionCache;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs, horizon;
  std::optional<std::string> trigger;
  std::optional<double> c0, c1, alpha;
  std::string rankList;
};

ScenarioConfig load_config(const Overrides& o, const std::string& fallbackBuiltin) {
  ScenarioConfig cfg;
  std::string builtin = o.builtin.empty() ? fallbackBuiltin : o.builtin;
  if (!o.scenario.empty())
    cfg = load_scenario_file(o.scenario);
  else if (builtin == "example1")
    cfg = scenario_from_json(builtin_example1_json());
  else if (builtin == "heat" || builtin == "example2")
    cfg = scenario_from_json(builtin_heat_json());
  else
    throw Error(ErrorCode::ConfigParse, "no scenario given (use --scenario PATH or --builtin NAME)");

  if (o.seed) cfg.seed = *o.seed;
  if (o.runs) cfg.runs = *o.runs;
  if (o.horizon) cfg.horizon = *o.horizon;
  if (cfg.runs < 1 || cfg.horizon < 1)
    throw Error(ErrorCode::ConfigParse, "--runs and --horizon must be >= 1");
  if (o.trigger) cfg.trigger = trigger_from_json(Json{{"type", *o.trigger}});
  if (o.c0 || o.c1 || o.alpha) {
    auto* st = std::get_if<StaticTime>(&cfg.trigger);
    if (!st) throw Error(ErrorCode::ConfigParse, "--c0/--c1/--alpha apply to static_time only");
    if (o.c0) st->c0 = *o.c0;
    if (o.c1) st->c1 = *o.c1;
    if (o.alpha) st->alpha = *o.alpha;
    try {
      validate_trigger(cfg.trigger);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigParse, e.what());
    }
  }
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + p.string());
  return f;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::Io, "cannot create " + dir);
}

void write_json(const fs::path& p, const Json& j) {
  std::ofstream f = open_out(p);
  f << j.dump(2) << '\n';
  if (!f) throw Error(ErrorCode::Io, "write failed: " + p.string());
}

int cmd_run(const Overrides& o, const std::string& fallback) {
  ScenarioConfig cfg = load_config(o, fallback);
  ensure_dir(o.out);
  Scenario sc;
  if (!o.decompositionCache.empty() && fs::exists(o.decompositionCache)) {
    std::ifstream in(o.decompositionCache);
    Json j;
    try {
      in >> j;
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigParse, o.decompositionCache + ": " + e.what());
    }
    sc.sys = cfg.plant.sys;
    sc.net = cfg.plant.net;
    sc.dec = decomposition_from_json(j);
    if (sc.dec.n != sc.sys.n() || sc.dec.m != sc.net.m())
      throw Error(ErrorCode::DimensionMismatch, "cached decomposition does not fit the scenario");
    sc.trigger = cfg.trigger;
    sc.horizon = cfg.horizon;
    sc.runs = cfg.runs;
    sc.masterSeed = cfg.seed;
  } else {
    sc = realize(cfg);
  }
  validate_trigger(sc.trigger);
  for (const std::string& w : sc.dec.warnings) std::cerr << "warning: " << w << '\n';

  const fs::path out(o.out);
  write_json(out / "decomposition.json", decomposition_to_json(sc.dec));

  MonteCarloOptions mo;
  mo.pairedFull = true;
  AggregateMetrics agg = monte_carlo(sc, mo);
  Json metrics = metrics_to_json(agg);
  metrics["runs"] = sc.runs;
  metrics["horizon"] = sc.horizon;
  metrics["seed"] = sc.masterSeed;
  metrics["trigger"] = trigger_to_json(sc.trigger);
  write_json(out / "metrics.json", metrics);

  std::ofstream trace = open_out(out / "trace.csv");
  std::ofstream steps = open_out(out / "steps.csv");
  write_trace_csv_header(trace);
  write_step_csv_header(steps);
  for (int run = 0; run < sc.runs; ++run) {
    SimTrace tr = simulate_run(sc, run_seed(sc.masterSeed, std::uint64_t(run)));
    write_trace_csv(trace, run, tr);
    write_step_csv(steps, run, tr);
  }
  if (!trace || !steps) throw Error(ErrorCode::Io, "writing traces failed");

  std::printf("comm_rate_overall %.4f  theorem2_gap_max %.3g  runs %d  horizon %d\n",
              agg.commRateOverall, agg.gapMax, sc.runs, sc.horizon);
  return kExitOk;
}

std::vector<int> parse_ranks(const std::string& s, int m) {
  std::vector<int> out;
  if (s.empty()) {
    for (int r = 1; r <= m; ++r) out.push_back(r);
    return out;
  }
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      int r = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(r);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigParse, "bad --rank-list entry \"" + tok + "\"");
    }
  }
  return out;
}

int cmd_lowrank(const Overrides& o) {
  ScenarioConfig cfg = load_config(o, "heat");
  ensure_dir(o.out);
  const LtiSystem& sys = cfg.plant.sys;
  const SensorNetwork& net = cfg.plant.net;
  std::vector<LowRankDesign> designs;
  auto table = performance_table(sys, net, parse_ranks(o.rankList, int(net.m())), &designs);
  const fs::path out(o.out);
  std::ofstream csv = open_out(out / "lowrank_table.csv");
  csv << "r_tilde,J\n";
  char buf[64];
  for (auto& [r, j] : table) {
    std::snprintf(buf, sizeof buf, "%d,%.6f\n", r, j);
    csv << buf;
    std::printf("%s", buf);
  }
  for (const LowRankDesign& d : designs) {
    Json j{{"r_tilde", d.rTilde},
           {"J", d.Jrt},
           {"J_eigen_rounding", d.eigenRoundedJ},
           {"relaxed_objective", d.relaxedObjective},
           {"gain", matrix_to_json(d.Krt)},
           {"W", matrix_to_json(d.W)},
           {"warnings", d.warnings}};
    write_json(out / ("gain_r" + std::to_string(d.rTilde) + ".json"), j);
  }
  return kExitOk;
}

int cmd_validate(const Overrides& o) {
  ScenarioConfig cfg = load_config(o, "");
  const LtiSystem& sys = cfg.plant.sys;
  const SensorNetwork& net = cfg.plant.net;
  bool allOk = true;
  auto line = [&](bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    allOk = allOk && ok;
  };
  auto skip = [](const std::string& name) { std::printf("SKIP %s: earlier check failed\n", name.c_str()); };

  bool obs = is_observable(sys.A, net.C);
  line(obs, "observability", obs ? "(A, C) observable" : "(A, C) not observable");

  LaplacianSpectrum lap = build_laplacian(net.adjacency);
  line(lap.connected, "connectedness",
       std::to_string(lap.components) + " component(s), mu2 = " + std::to_string(lap.mu2()));

  std::optional<Matrix> K = cfg.gain;
  if (!K && obs) K = solve_steady_gain(sys, net).K;
  if (!K || !lap.connected || net.m() < 2) {
    for (const char* n : {"mahler_bound", "zeta_feasible", "sync_spectrum"}) skip(n);
    return allOk ? kExitOk : kExitValidation;
  }

  Matrix closed = sys.A - *K * net.C * sys.A;
  Matrix lambdaMat = build_lambda(closed);
  BetaS bs = design_beta_S(lambdaMat, unstable_eigenvalues(sys.A), cfg.decomposition.poles);
  double mahler = mahler_measure(sorted_eigenvalues(bs.S));
  double bound = mahler_bound(lap.mu2(), lap.muMax());
  char buf[160];
  std::snprintf(buf, sizeof buf, "Mahler=%.6g < %.6g", mahler, bound);
  line(mahler < bound, "mahler_bound", buf);

  bool zetaOk = true;
  if (cfg.decomposition.zeta) {
    double z = *cfg.decomposition.zeta;
    zetaOk = z > 0.0 && z < 1.0 && mahler < 1.0 / z && 1.0 / z <= bound;
    std::snprintf(buf, sizeof buf, "1/zeta=%.6g, need %.6g < 1/zeta <= %.6g", 1.0 / z, mahler, bound);
  } else {
    std::snprintf(buf, sizeof buf, "default zeta from sqrt(Mahler * bound)");
  }
  line(zetaOk, "zeta_feasible", buf);

  if (!(mahler < bound) || !zetaOk) {
    skip("sync_spectrum");
    return allOk ? kExitOk : kExitValidation;
  }
  try {
    Decomposition dec = build_decomposition(sys, net, *K, cfg.decomposition);
    double worst = 0.0;
    for (int j = 1; j < dec.m; ++j) {
      Eigen::EigenSolver<Matrix> es(dec.H - dec.laplacianEigenvalues(j) * dec.B * dec.T, false);
      worst = std::max(worst, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    std::snprintf(buf, sizeof buf, "max rho(H - mu_j BT) = %.6g < 1", worst);
    line(worst < 1.0, "sync_spectrum", buf);
  } catch (const Error& e) {
    line(false, "sync_spectrum", e.what());
  }
  return allOk ? kExitOk : kExitValidation;
}

void add_common(CLI::App* c, Overrides& o, bool simulation) {
  c->add_option("--scenario", o.scenario, "scenario JSON file");
  c->add_option("--builtin", o.builtin, "built-in scenario: example1 | heat");
  c->add_option("--out", o.out, "output directory");
  if (!simulation) return;
  c->add_option("--seed", o.seed, "master seed");
  c->add_option("--runs", o.runs, "Monte Carlo runs");
  c->add_option("--horizon", o.horizon, "steps per run");
  c->add_option("--trigger", o.trigger, "full | static_time | static_state | dynamic")
      ->check(CLI::IsMember({"full", "static_time", "static_state", "dynamic"}));
  c->add_option("--c0", o.c0, "static_time c0");
  c->add_option("--c1", o.c1, "static_time c1");
  c->add_option("--alpha", o.alpha, "static_time alpha");
  c->add_option("--decomposition", o.decompositionCache, "reuse a cached decomposition JSON");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-triggered distributed Kalman filtering"};
  app.require_subcommand(1);
  Overrides o;

  CLI::App* run = app.add_subcommand("run", "simulate a scenario");
  add_common(run, o, true);
  CLI::App* ex1 = app.add_subcommand("example1", "Example 1 with the built-in settings");
  add_common(ex1, o, true);
  CLI::App* heat = app.add_subcommand("heat", "heat-diffusion benchmark");
  heat->alias("example2");
  add_common(heat, o, true);
  CLI::App* lr = app.add_subcommand("lowrank-table", "rank-constrained gain design table");
  add_common(lr, o, false);
  lr->add_option("--rank-list", o.rankList, "comma-separated ranks, default 1..m");
  CLI::App* val = app.add_subcommand("validate", "check design conditions without simulating");
  add_common(val, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(o, "");
    if (*ex1) return cmd_run(o, "example1");
    if (*heat) return cmd_run(o, "heat");
    if (*lr) return cmd_lowrank(o);
    if (*val) return cmd_validate(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", to_string(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
