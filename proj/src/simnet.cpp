#include "etdkf/simnet.hpp"

#include "etdkf/linalg.hpp"
#include "etdkf/rng.hpp"

#include <algorithm>
#include <numeric>

namespace etdkf {

NodeRuntime make_node(const Decomposition& dec, const TriggerSpec& spec) {
  NodeRuntime node;
  const Eigen::Index N = dec.stateDim();
  node.xiHat = Vector::Zero(dec.n);
  node.eta = Vector::Zero(N);
  node.etaHat = Vector::Zero(N);
  node.etaAtLastTrigger = Vector::Zero(N);
  node.lastBroadcast = Vector::Zero(dec.r);
  node.trigger = initial_trigger_state(spec);
  // χ(1) from χ(0) with ε(0) = 0 and no disagreement yet
  advance(spec, node.trigger, 0, 0.0, 0.0);
  return node;
}

double neighbourhood_disagreement(int i, const Matrix& adjacency, const std::vector<Vector>& b) {
  double q = 0.0;
  for (Eigen::Index j = 0; j < adjacency.cols(); ++j)
    if (adjacency(i, j) != 0.0) q += adjacency(i, j) * (b[j] - b[i]).squaredNorm();
  return 0.5 * q;
}

NodeStepRecord node_step(NodeRuntime& node, int i, const Decomposition& dec,
                         const TriggerSpec& spec, double yNext, long k, const NeighbourView& view,
                         bool denseReference) {
  NodeStepRecord rec;
  // Phase I: local filter
  LocalFilterStep lf = local_filter_step(node.xiHat, yNext, dec.beta, dec.S);
  node.xiHat = std::move(lf.xiHatNext);

  // Phase II: synchronization with the latest broadcasts
  Vector u = Vector::Zero(dec.r);
  for (Eigen::Index j = 0; j < view.adjacency.cols(); ++j)
    if (view.adjacency(i, j) != 0.0) u += view.adjacency(i, j) * (view.deltaHat[j] - view.deltaHat[i]);

  Vector next, hatNext;
  if (denseReference) {
    next = dec.H * node.eta + dec.L.col(i) * lf.z + dec.B * u;
    hatNext = dec.H * node.etaHat;
  } else {
    apply_H(dec, node.eta, next);
    next += dec.L.col(i) * lf.z;
    add_B(dec, u, next);
    apply_H(dec, node.etaHat, hatNext);
  }
  node.eta = std::move(next);
  node.etaHat = std::move(hatNext);

  rec.epsSqPre = (node.etaHat - node.eta).squaredNorm();
  rec.qHat = clip_qhat(spec, neighbourhood_disagreement(i, view.adjacency, view.lastBroadcast));
  rec.threshold = threshold(spec, node.trigger, k + 1, rec.qHat);
  rec.triggered = decide(rec.epsSqPre, rec.threshold);
  rec.epsSq = rec.epsSqPre;
  if (rec.triggered) {
    node.etaHat = node.eta;
    node.etaAtLastTrigger = node.eta;
    node.lastTriggerStep = k + 1;
    if (denseReference)
      node.lastBroadcast = dec.T * node.eta;
    else
      apply_T(dec, node.eta, node.lastBroadcast);
    rec.epsSq = 0.0;
  }
  advance(spec, node.trigger, k + 1, rec.qHat, rec.epsSq);
  return rec;
}

int SimTrace::trigger_count(int node) const {
  int c = 0;
  for (int k = 1; k <= horizon; ++k) c += triggered[at(k, node)];
  return c;
}

SimTrace simulate_run(const Scenario& sc, std::uint64_t runSeed, const SimOptions& opt) {
  const Decomposition& dec = sc.dec;
  const int m = dec.m, n = dec.n;
  const Matrix& A = sc.sys.A;
  const Matrix& C = sc.net.C;
  const Matrix sqrtQ = sym_sqrt(sc.sys.Q);
  const Matrix sqrtR = sym_sqrt(sc.net.R);
  const Matrix sqrtX0 = sym_sqrt(sc.sys.x0Cov);
  const CounterNormal rng(runSeed);

  std::vector<int> order = opt.nodeOrder;
  if (order.empty()) {
    order.resize(m);
    std::iota(order.begin(), order.end(), 0);
  }

  SimTrace tr;
  tr.m = m;
  tr.horizon = sc.horizon;
  const size_t cells = size_t(sc.horizon) * size_t(m);
  tr.triggered.assign(cells, 0);
  tr.epsSq.assign(cells, 0.0);
  tr.epsSqPre.assign(cells, 0.0);
  tr.threshold.assign(cells, 0.0);
  tr.errSq.assign(cells, 0.0);
  tr.consDevSq.assign(cells, 0.0);
  if (opt.keepLocalEstimates) tr.localEstimates.assign(cells, Vector());
  tr.truth.reserve(sc.horizon);
  tr.centralized.reserve(sc.horizon);
  tr.avgGap.reserve(sc.horizon);
  tr.xhatNorm.reserve(sc.horizon);

  std::vector<NodeRuntime> nodes(m, make_node(dec, sc.trigger));
  std::vector<Vector> deltaHat(m, Vector::Zero(dec.r));
  std::vector<Vector> lastBroadcast(m, Vector::Zero(dec.r));

  Vector x = opt.noise.initialState ? Vector(sqrtX0 * rng.normals(0, NoiseSource::InitialState, n))
                                    : Vector::Zero(n);
  Vector xhat = Vector::Zero(n);
  Vector etaBar(dec.stateDim());
  Vector sumEta0(n);

  for (long k = 0; k < sc.horizon; ++k) {
    // truth and measurement y(k+1)
    Vector xn = A * x;
    if (opt.noise.process) xn += sqrtQ * rng.normals(std::uint64_t(k), NoiseSource::Process, n);
    x = std::move(xn);
    Vector y = C * x;
    if (opt.noise.measurement)
      y += sqrtR * rng.normals(std::uint64_t(k + 1), NoiseSource::Measurement, m);
    xhat = dec.closedLoop * xhat + dec.K * y;

    // everything a node may read this step is fixed before anyone updates
    for (int j = 0; j < m; ++j) {
      if (opt.denseReference)
        deltaHat[j] = dec.T * nodes[j].etaHat;
      else
        apply_T(dec, nodes[j].etaHat, deltaHat[j]);
      lastBroadcast[j] = nodes[j].lastBroadcast;
    }
    const NeighbourView view{sc.net.adjacency, deltaHat, lastBroadcast};

    const int kk = int(k + 1);
    for (int i : order) {
      NodeStepRecord rec = node_step(nodes[i], i, dec, sc.trigger, y(i), k, view, opt.denseReference);
      size_t c = tr.at(kk, i);
      tr.triggered[c] = rec.triggered;
      tr.epsSq[c] = rec.epsSq;
      tr.epsSqPre[c] = rec.epsSqPre;
      tr.threshold[c] = rec.threshold;
    }

    etaBar.setZero();
    sumEta0.setZero();
    for (int i = 0; i < m; ++i) {
      etaBar += nodes[i].eta;
      sumEta0 += nodes[i].eta.head(n);
    }
    etaBar /= double(m);
    for (int i = 0; i < m; ++i) {
      size_t c = tr.at(kk, i);
      Vector local = double(m) * nodes[i].eta.head(n);
      tr.errSq[c] = (local - x).squaredNorm();
      tr.consDevSq[c] = (nodes[i].eta - etaBar).squaredNorm();
      if (opt.keepLocalEstimates) tr.localEstimates[c] = std::move(local);
    }
    tr.truth.push_back(x);
    tr.centralized.push_back(xhat);
    tr.avgGap.push_back((sumEta0 - xhat).norm());
    tr.xhatNorm.push_back(xhat.norm());
  }
  return tr;
}

namespace {

struct RunSummary {
  std::vector<int> triggers;       // per node
  std::vector<double> errSeries;   // [k−1][node]
  std::vector<double> consSeries;  // [k−1][node]
  double gapMax = 0.0, relGapMax = 0.0, gapSum = 0.0;
  double gapExcess = -INFINITY;
};

RunSummary summarize(const SimTrace& tr) {
  RunSummary s;
  s.triggers.resize(tr.m);
  for (int i = 0; i < tr.m; ++i) s.triggers[i] = tr.trigger_count(i);
  s.errSeries = tr.errSq;
  s.consSeries = tr.consDevSq;
  for (int k = 0; k < tr.horizon; ++k) {
    s.gapMax = std::max(s.gapMax, tr.avgGap[k]);
    s.relGapMax = std::max(s.relGapMax, tr.avgGap[k] / (1.0 + tr.xhatNorm[k]));
    s.gapSum += tr.avgGap[k];
  }
  for (size_t c = 0; c < tr.epsSq.size(); ++c)
    s.gapExcess = std::max(s.gapExcess, tr.epsSq[c] - std::max(tr.threshold[c], 0.0));
  return s;
}

std::vector<RunSummary> run_all(const Scenario& sc, const SimNoise& noise, bool parallel) {
  std::vector<RunSummary> out(sc.runs);
  SimOptions so;
  so.noise = noise;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int run = 0; run < sc.runs; ++run)
    out[run] = summarize(simulate_run(sc, run_seed(sc.masterSeed, std::uint64_t(run)), so));
  return out;
}

AggregateMetrics reduce(const Scenario& sc, const std::vector<RunSummary>& runs) {
  AggregateMetrics agg;
  const int m = sc.dec.m, H = sc.horizon, R = sc.runs;
  agg.runs = R;
  agg.horizon = H;
  agg.m = m;
  agg.commRatePerNode.assign(m, 0.0);
  agg.msePerNode.assign(m, 0.0);
  agg.mseSeries.assign(H, std::vector<double>(m, 0.0));
  agg.consDevSeries.assign(H, std::vector<double>(m, 0.0));
  double gapSum = 0.0;
  for (const RunSummary& s : runs) {
    int total = 0;
    for (int i = 0; i < m; ++i) {
      agg.commRatePerNode[i] += double(s.triggers[i]) / H;
      total += s.triggers[i];
    }
    agg.runCommRates.push_back(double(total) / (double(H) * m));
    for (int k = 0; k < H; ++k)
      for (int i = 0; i < m; ++i) {
        agg.mseSeries[k][i] += s.errSeries[size_t(k) * m + i];
        agg.consDevSeries[k][i] += s.consSeries[size_t(k) * m + i];
      }
    agg.gapMax = std::max(agg.gapMax, s.gapMax);
    agg.relGapMax = std::max(agg.relGapMax, s.relGapMax);
    agg.maxGapExcess = std::max(agg.maxGapExcess, s.gapExcess);
    gapSum += s.gapSum;
  }
  for (int i = 0; i < m; ++i) {
    agg.commRatePerNode[i] /= R;
    agg.commRateOverall += agg.commRatePerNode[i] / m;
  }
  for (int k = 0; k < H; ++k)
    for (int i = 0; i < m; ++i) {
      agg.mseSeries[k][i] /= R;
      agg.consDevSeries[k][i] /= R;
      agg.msePerNode[i] += agg.mseSeries[k][i] / H;
    }
  agg.meanGap = gapSum / (double(R) * H);
  return agg;
}

AggregateMetrics monte_carlo_impl(const Scenario& sc, const MonteCarloOptions& opt, bool parallel) {
  if (sc.runs < 1 || sc.horizon < 1)
    throw Error(ErrorCode::InvalidArgument, "runs and horizon must be >= 1");
  AggregateMetrics agg = reduce(sc, run_all(sc, opt.noise, parallel));
  if (opt.pairedFull) {
    Scenario full = sc;
    full.trigger = FullTransmission{};
    AggregateMetrics base = reduce(full, run_all(full, opt.noise, parallel));
    for (int i = 0; i < agg.m; ++i)
      agg.relErrVsFull.push_back(base.msePerNode[i] > 0.0
                                     ? (agg.msePerNode[i] - base.msePerNode[i]) / base.msePerNode[i]
                                     : 0.0);
  }
  return agg;
}

}  // namespace

AggregateMetrics monte_carlo(const Scenario& sc, const MonteCarloOptions& opt) {
  return monte_carlo_impl(sc, opt, true);
}

AggregateMetrics monte_carlo_serial(const Scenario& sc, const MonteCarloOptions& opt) {
  return monte_carlo_impl(sc, opt, false);
}

}  // namespace etdkf
