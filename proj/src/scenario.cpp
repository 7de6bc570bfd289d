#include "etdkf/scenario.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace etdkf {

namespace {

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::ConfigParse, what); }

double num(const Json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) parse_error(std::string("\"") + key + "\" must be a number");
  return j.at(key).get<double>();
}

Json vector_to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

AlphaSchedule schedule_from_json(const Json& j, AlphaSchedule s) {
  s.c = num(j, "alpha_c", s.c);
  s.rate = num(j, "alpha_rate", s.rate);
  return s;
}

}  // namespace

Matrix matrix_from_json(const Json& j) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (j.is_object()) {
    if (!j.contains("rows") || !j.contains("cols") || !j.contains("data"))
      parse_error("matrix object needs rows, cols and data");
    const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
    const Json& d = j.at("data");
    if (!d.is_array() || Eigen::Index(d.size()) != rows * cols)
      parse_error("matrix data length differs from rows*cols");
    Matrix M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = d.at(size_t(r * cols + c)).get<double>();
    return M;
  }
  if (j.is_array()) {
    if (j.empty()) return Matrix(0, 0);
    if (!j.front().is_array()) {
      Matrix M(Eigen::Index(j.size()), 1);
      for (size_t i = 0; i < j.size(); ++i) M(Eigen::Index(i), 0) = j.at(i).get<double>();
      return M;
    }
    const auto rows = Eigen::Index(j.size()), cols = Eigen::Index(j.front().size());
    Matrix M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (Eigen::Index(j.at(size_t(r)).size()) != cols) parse_error("ragged nested matrix");
      for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = j.at(size_t(r)).at(size_t(c)).get<double>();
    }
    return M;
  }
  parse_error("matrix must be an object, array or number");
}

Json matrix_to_json(const Matrix& M) {
  Json d = Json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) d.push_back(M(r, c));
  return Json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", d}};
}

TriggerSpec trigger_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("type")) parse_error("trigger needs a \"type\"");
  const std::string type = j.at("type").get<std::string>();
  TriggerSpec spec;
  if (type == "full") {
    spec = FullTransmission{};
  } else if (type == "static_time") {
    StaticTime s;
    s.c0 = num(j, "c0", s.c0);
    s.c1 = num(j, "c1", s.c1);
    s.alpha = num(j, "alpha", s.alpha);
    spec = s;
  } else if (type == "static_state") {
    StaticState s;
    s.ell = num(j, "ell", s.ell);
    s.schedule = schedule_from_json(j, s.schedule);
    spec = s;
  } else if (type == "dynamic") {
    Dynamic s;
    s.ell = num(j, "ell", s.ell);
    s.schedule = schedule_from_json(j, s.schedule);
    s.beta = num(j, "beta", s.beta);
    s.theta = num(j, "theta", s.theta);
    s.chi0 = num(j, "chi0", s.chi0);
    spec = s;
  } else {
    parse_error("unknown trigger type \"" + type + "\"");
  }
  try {
    validate_trigger(spec);
  } catch (const Error& e) {
    parse_error(e.what());
  }
  return spec;
}

Json trigger_to_json(const TriggerSpec& spec) {
  Json j{{"type", trigger_name(spec)}};
  if (const auto* s = std::get_if<StaticTime>(&spec)) {
    j["c0"] = s->c0;
    j["c1"] = s->c1;
    j["alpha"] = s->alpha;
  } else if (const auto* s = std::get_if<StaticState>(&spec)) {
    j["ell"] = s->ell;
    j["alpha_c"] = s->schedule.c;
    j["alpha_rate"] = s->schedule.rate;
  } else if (const auto* s = std::get_if<Dynamic>(&spec)) {
    j["ell"] = s->ell;
    j["alpha_c"] = s->schedule.c;
    j["alpha_rate"] = s->schedule.rate;
    j["beta"] = s->beta;
    j["theta"] = s->theta;
    j["chi0"] = s->chi0;
  }
  return j;
}

ScenarioConfig scenario_from_json(const Json& j) {
  ScenarioConfig cfg;
  try {
    if (j.contains("heat")) {
      const Json& h = j.at("heat");
      HeatGridParams p;
      p.gridSide = h.value("grid_side", p.gridSide);
      p.lambda = h.value("lambda", p.lambda);
      if (h.contains("sensor_cells")) p.sensorCells = h.at("sensor_cells").get<std::vector<int>>();
      p.linkRadius = h.value("link_radius", p.linkRadius);
      cfg.plant = heat_grid_system(p);
    } else if (j.contains("system") && j.contains("sensors") && j.contains("graph")) {
      const Json& s = j.at("system");
      cfg.plant.sys.A = matrix_from_json(s.at("A"));
      cfg.plant.sys.Q = matrix_from_json(s.at("Q"));
      cfg.plant.sys.x0Cov = s.contains("x0_cov") ? matrix_from_json(s.at("x0_cov"))
                                                 : Matrix::Identity(cfg.plant.sys.A.rows(),
                                                                    cfg.plant.sys.A.rows());
      cfg.plant.net.C = matrix_from_json(j.at("sensors").at("C"));
      cfg.plant.net.R = matrix_from_json(j.at("sensors").at("R"));
      cfg.plant.net.adjacency = matrix_from_json(j.at("graph").at("adjacency"));
    } else {
      parse_error("scenario needs either \"heat\" or \"system\", \"sensors\" and \"graph\"");
    }
    if (j.contains("trigger")) cfg.trigger = trigger_from_json(j.at("trigger"));
    if (j.contains("decomposition")) {
      const Json& d = j.at("decomposition");
      if (d.contains("zeta")) cfg.decomposition.zeta = d.at("zeta").get<double>();
      if (d.contains("stable_poles")) {
        cfg.decomposition.poles.kind = PolePolicyKind::Explicit;
        for (double p : d.at("stable_poles").get<std::vector<double>>())
          cfg.decomposition.poles.poles.push_back(p);
      } else if (d.contains("pole_policy")) {
        std::string pol = d.at("pole_policy").get<std::string>();
        if (pol == "auto") cfg.decomposition.poles.kind = PolePolicyKind::Auto;
        else if (pol == "evenly") cfg.decomposition.poles.kind = PolePolicyKind::Evenly;
        else if (pol == "interlacing") cfg.decomposition.poles.kind = PolePolicyKind::Interlacing;
        else parse_error("unknown pole_policy \"" + pol + "\"");
      }
    }
    if (j.contains("gain")) cfg.gain = matrix_from_json(j.at("gain"));
    if (j.contains("simulation")) {
      const Json& s = j.at("simulation");
      cfg.horizon = s.value("horizon", cfg.horizon);
      cfg.runs = s.value("runs", cfg.runs);
      cfg.seed = s.value("seed", cfg.seed);
    }
  } catch (const Json::exception& e) {
    parse_error(e.what());
  }
  cfg.plant.sys.validate();
  cfg.plant.net.validate(cfg.plant.sys.n());
  if (cfg.gain && (cfg.gain->rows() != cfg.plant.sys.n() || cfg.gain->cols() != cfg.plant.net.m()))
    parse_error("gain must be n x m");
  return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    parse_error(path + ": " + e.what());
  }
  return scenario_from_json(j);
}

Json builtin_example1_json() {
  return Json::parse(R"({
    "system": {"A": [[0.9, 0.0], [0.0, 1.1]], "Q": [[0.5, 0.0], [0.0, 0.5]],
               "x0_cov": [[1.0, 0.0], [0.0, 1.0]]},
    "sensors": {"C": [[1, 0], [0, 1], [1, 1], [1, -1]],
                "R": [[2, 0, 0, 0], [0, 2, 0, 0], [0, 0, 2, 0], [0, 0, 0, 2]]},
    "graph": {"adjacency": [[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]},
    "decomposition": {"zeta": 0.5},
    "trigger": {"type": "static_time", "c0": 5, "c1": 5, "alpha": 0.8},
    "simulation": {"horizon": 20, "runs": 1000, "seed": 1}
  })");
}

Json builtin_heat_json() {
  return Json::parse(R"({
    "heat": {"grid_side": 5, "lambda": 0.1,
             "sensor_cells": [0, 1, 2, 4, 6, 8, 10, 12, 13, 14, 16, 18, 20, 22, 24],
             "link_radius": 2},
    "trigger": {"type": "static_time", "c0": 5, "c1": 5, "alpha": 0.8},
    "simulation": {"horizon": 200, "runs": 100, "seed": 1}
  })");
}

Scenario realize(const ScenarioConfig& cfg) {
  Scenario sc;
  sc.sys = cfg.plant.sys;
  sc.net = cfg.plant.net;
  sc.dec = cfg.gain ? build_decomposition(sc.sys, sc.net, *cfg.gain, cfg.decomposition)
                    : build_decomposition(sc.sys, sc.net, cfg.decomposition);
  sc.trigger = cfg.trigger;
  sc.horizon = cfg.horizon;
  sc.runs = cfg.runs;
  sc.masterSeed = cfg.seed;
  return sc;
}

Json decomposition_to_json(const Decomposition& dec) {
  Json F = Json::array();
  for (const Matrix& f : dec.F) F.push_back(matrix_to_json(f));
  Json poles = Json::array();
  for (Complex p : dec.stablePoles) poles.push_back({p.real(), p.imag()});
  return Json{{"n", dec.n},
              {"m", dec.m},
              {"r", dec.r},
              {"K", matrix_to_json(dec.K)},
              {"closed_loop", matrix_to_json(dec.closedLoop)},
              {"Lambda", matrix_to_json(dec.lambdaMat)},
              {"beta", vector_to_json(dec.beta)},
              {"S", matrix_to_json(dec.S)},
              {"stable_poles", poles},
              {"F", F},
              {"Ktilde", matrix_to_json(dec.Ktilde)},
              {"V", matrix_to_json(dec.V)},
              {"Gamma", vector_to_json(dec.gamma.transpose())},
              {"riccati_P", matrix_to_json(dec.riccatiP)},
              {"zeta", dec.zeta},
              {"mahler", dec.mahler},
              {"mahler_bound", std::isfinite(dec.mahlerBound) ? Json(dec.mahlerBound) : Json(nullptr)},
              {"laplacian_eigenvalues", vector_to_json(dec.laplacianEigenvalues)},
              {"max_sylvester_residual", dec.maxSylvesterResidual},
              {"sync_spectral_radii", dec.syncSpectralRadii},
              {"warnings", dec.warnings}};
}

Decomposition decomposition_from_json(const Json& j) {
  Decomposition dec;
  try {
    dec.n = j.at("n").get<int>();
    dec.m = j.at("m").get<int>();
    dec.r = j.at("r").get<int>();
    dec.K = matrix_from_json(j.at("K"));
    dec.closedLoop = matrix_from_json(j.at("closed_loop"));
    dec.lambdaMat = matrix_from_json(j.at("Lambda"));
    dec.beta = matrix_from_json(j.at("beta"));
    dec.S = matrix_from_json(j.at("S"));
    for (const Json& p : j.at("stable_poles")) dec.stablePoles.emplace_back(p.at(0), p.at(1));
    for (const Json& f : j.at("F")) dec.F.push_back(matrix_from_json(f));
    dec.Ktilde = matrix_from_json(j.at("Ktilde"));
    dec.V = matrix_from_json(j.at("V"));
    dec.gamma = matrix_from_json(j.at("Gamma")).transpose();
    dec.riccatiP = matrix_from_json(j.at("riccati_P"));
    dec.zeta = j.at("zeta").get<double>();
    dec.mahler = j.at("mahler").get<double>();
    dec.mahlerBound = j.at("mahler_bound").is_null() ? INFINITY : j.at("mahler_bound").get<double>();
    dec.laplacianEigenvalues = matrix_from_json(j.at("laplacian_eigenvalues"));
    dec.maxSylvesterResidual = j.at("max_sylvester_residual").get<double>();
    dec.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    parse_error(std::string("decomposition cache: ") + e.what());
  }
  if (dec.beta.size() != dec.n || dec.gamma.size() != dec.n || int(dec.F.size()) != dec.m)
    parse_error("decomposition cache has inconsistent sizes");
  assemble_operator(dec);
  return dec;
}

Json metrics_to_json(const AggregateMetrics& agg) {
  return Json{{"comm_rate_overall", agg.commRateOverall},
              {"comm_rate_per_node", agg.commRatePerNode},
              {"mse_per_node", agg.msePerNode},
              {"theorem2_gap_max", agg.gapMax},
              {"rel_err_vs_full", agg.relErrVsFull}};
}

void write_trace_csv_header(std::ostream& os) { os << "run,k,node,triggered,eps_sq,err_sq,cons_dev_sq\n"; }

void write_trace_csv(std::ostream& os, int run, const SimTrace& tr) {
  os << std::setprecision(17);
  for (int k = 1; k <= tr.horizon; ++k)
    for (int i = 0; i < tr.m; ++i) {
      size_t c = tr.at(k, i);
      os << run << ',' << k << ',' << i << ',' << int(tr.triggered[c]) << ',' << tr.epsSq[c] << ','
         << tr.errSq[c] << ',' << tr.consDevSq[c] << '\n';
    }
}

void write_step_csv_header(std::ostream& os) { os << "run,k,avg_gap\n"; }

void write_step_csv(std::ostream& os, int run, const SimTrace& tr) {
  os << std::setprecision(17);
  for (int k = 1; k <= tr.horizon; ++k) os << run << ',' << k << ',' << tr.avgGap[k - 1] << '\n';
}

}  // namespace etdkf
