// Serial vs OpenMP Monte Carlo, and structured vs dense operator kernels.
//   bench_monte_carlo [runs] [horizon]

#include "etdkf/rng.hpp"
#include "etdkf/scenario.hpp"
#include "etdkf/simnet.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>

using namespace etdkf;

namespace {

template <class F>
double seconds(F&& f) {
  auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  const int runs = argc > 1 ? std::atoi(argv[1]) : 40;
  const int horizon = argc > 2 ? std::atoi(argv[2]) : 500;

  Scenario sc = realize(scenario_from_json(builtin_heat_json()));
  sc.runs = runs;
  sc.horizon = horizon;
  std::printf("heat benchmark: n=%d m=%d r=%d, %d runs x %d steps, %d OpenMP threads\n", sc.dec.n,
              sc.dec.m, sc.dec.r, runs, horizon, omp_get_max_threads());

  AggregateMetrics serial, parallel;
  double ts = seconds([&] { serial = monte_carlo_serial(sc); });
  double tp = seconds([&] { parallel = monte_carlo(sc); });
  bool same = serial.msePerNode == parallel.msePerNode &&
              serial.commRatePerNode == parallel.commRatePerNode &&
              serial.mseSeries == parallel.mseSeries;
  std::printf("monte carlo  serial %8.3fs  openmp %8.3fs  speedup %.2fx  identical %s\n", ts, tp,
              ts / tp, same ? "yes" : "NO");

  SimOptions structured, dense;
  dense.denseReference = true;
  const int reps = std::max(1, runs / 4);
  double tsd = seconds([&] {
    for (int i = 0; i < reps; ++i) simulate_run(sc, run_seed(1, i), structured);
  });
  double tdd = seconds([&] {
    for (int i = 0; i < reps; ++i) simulate_run(sc, run_seed(1, i), dense);
  });
  std::printf("kernels      structured %6.3fs  dense %8.3fs  ratio %.2fx  (%d runs)\n", tsd, tdd,
              tdd / tsd, reps);
  return same ? 0 : 1;
}
