#pragma once

#include "etdkf/decomp.hpp"
#include "etdkf/model.hpp"
#include "etdkf/triggers.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace etdkf {

struct NodeRuntime {
  Vector xiHat;
  Vector eta;
  /// H^{k−k_s} η(k_s): the last snapshot propagated open loop.
  Vector etaHat;
  Vector etaAtLastTrigger;
  long lastTriggerStep = 0;
  /// T η(k_s), the r numbers sent at the last trigger.
  Vector lastBroadcast;
  TriggerState trigger;
};

NodeRuntime make_node(const Decomposition& dec, const TriggerSpec& spec);

struct Scenario {
  LtiSystem sys;
  SensorNetwork net;
  Decomposition dec;
  TriggerSpec trigger = StaticTime{};
  int horizon = 20;
  int runs = 1;
  std::uint64_t masterSeed = 1;
};

/// Turns noise sources off; used for the at-rest checks.
struct SimNoise {
  bool initialState = true;
  bool process = true;
  bool measurement = true;
};

struct SimOptions {
  SimNoise noise;
  /// Dense H, T, B products instead of the structured kernels.
  bool denseReference = false;
  /// Order in which nodes are stepped; empty means 0..m−1.
  std::vector<int> nodeOrder;
  bool keepLocalEstimates = false;
};

/// Everything the coupling term and q̂ need, read at the start of a step.
struct NeighbourView {
  const Matrix& adjacency;
  const std::vector<Vector>& deltaHat;       // T η̂_j(k)
  const std::vector<Vector>& lastBroadcast;  // T η_j(k_s^j)
};

struct NodeStepRecord {
  bool triggered = false;
  double epsSqPre = 0.0;
  double epsSq = 0.0;  // after a possible reset
  double threshold = 0.0;
  double qHat = 0.0;
};

/// Advances node i from step k to k+1 using y_i(k+1).
NodeStepRecord node_step(NodeRuntime& node, int i, const Decomposition& dec,
                         const TriggerSpec& spec, double yNext, long k, const NeighbourView& view,
                         bool denseReference = false);

/// ½ Σ_j a_ij ‖b_j − b_i‖², before clipping.
double neighbourhood_disagreement(int i, const Matrix& adjacency, const std::vector<Vector>& b);

struct SimTrace {
  int m = 0, horizon = 0;
  // per step k = 1..horizon, row-major [k−1][node]
  std::vector<char> triggered;
  std::vector<double> epsSq;
  std::vector<double> epsSqPre;
  std::vector<double> threshold;
  std::vector<double> errSq;
  std::vector<double> consDevSq;
  std::vector<Vector> localEstimates;  // only with keepLocalEstimates
  // per step
  std::vector<Vector> truth;
  std::vector<Vector> centralized;
  std::vector<double> avgGap;
  std::vector<double> xhatNorm;

  size_t at(int k, int node) const { return size_t(k - 1) * size_t(m) + size_t(node); }
  int trigger_count(int node) const;
};

SimTrace simulate_run(const Scenario& sc, std::uint64_t runSeed, const SimOptions& opt = {});

struct AggregateMetrics {
  int runs = 0, horizon = 0, m = 0;
  double commRateOverall = 0.0;
  std::vector<double> commRatePerNode;
  std::vector<double> msePerNode;
  /// [k−1][node], averaged over runs
  std::vector<std::vector<double>> mseSeries;
  std::vector<std::vector<double>> consDevSeries;
  double gapMax = 0.0;
  double relGapMax = 0.0;
  double meanGap = 0.0;
  double maxGapExcess = -INFINITY;  // max over traces of ε² − max(h, 0) after the decision
  std::vector<double> relErrVsFull;  // empty unless requested
  std::vector<double> runCommRates;
};

struct MonteCarloOptions {
  bool pairedFull = false;
  SimNoise noise;
};

/// Runs in parallel across runs; the result does not depend on thread count.
AggregateMetrics monte_carlo(const Scenario& sc, const MonteCarloOptions& opt = {});
/// Single-threaded reference with bit-identical output.
AggregateMetrics monte_carlo_serial(const Scenario& sc, const MonteCarloOptions& opt = {});

}  // namespace etdkf
