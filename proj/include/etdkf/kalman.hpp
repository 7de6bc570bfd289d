#pragma once

#include "etdkf/model.hpp"

#include <vector>

namespace etdkf {

struct KalmanSolution {
  Matrix P;  // posterior
  Matrix K;
  Matrix closedLoop;  // A − KCA
  int r = 0;
};

struct SteadyGainOptions {
  double tol = 1e-12;
  int maxIter = 100000;
  bool checkObservability = true;
};

KalmanSolution solve_steady_gain(const LtiSystem& sys, const SensorNetwork& net,
                                 const SteadyGainOptions& opt = {});

KalmanSolution solve_steady_gain(const Matrix& A, const Matrix& Q, const Matrix& C,
                                 const Matrix& R, const Matrix& P0,
                                 const SteadyGainOptions& opt = {});

/// x̂(k+1) = (A−KCA)x̂(k) + K y(k+1), starting from x̂(0) = 0.
std::vector<Vector> run_centralized(const KalmanSolution& sol,
                                    const std::vector<Vector>& measurements);

/// Steady error covariance of the predictor-corrector observer with gain K.
Matrix luenberger_error_cov(const LtiSystem& sys, const SensorNetwork& net, const Matrix& K);

}  // namespace etdkf
