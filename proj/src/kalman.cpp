#include "etdkf/kalman.hpp"

#include "etdkf/linalg.hpp"

#include <cmath>

namespace etdkf {

KalmanSolution solve_steady_gain(const Matrix& A, const Matrix& Q, const Matrix& C,
                                 const Matrix& R, const Matrix& P0,
                                 const SteadyGainOptions& opt) {
  const Eigen::Index n = A.rows();
  if (C.cols() != n || R.rows() != C.rows() || Q.rows() != n || P0.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "solve_steady_gain: inconsistent dimensions");
  if (opt.checkObservability && !is_observable(A, C))
    throw Error(ErrorCode::NotObservable, "(A, C) is not observable");

  Matrix P = P0;
  bool converged = false;
  double prevTrace = P.trace();
  for (int it = 0; it < opt.maxIter; ++it) {
    Matrix M = A * P * A.transpose() + Q;
    Matrix S = C * M * C.transpose() + R;
    Matrix G = S.ldlt().solve(C * M).transpose();  // M Cᵀ S⁻¹
    Matrix Pn = symmetrize(M - G * C * M);
    if (!Pn.allFinite()) break;
    double change = (Pn - P).norm();
    prevTrace = P.trace();
    P = Pn;
    if (change <= opt.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    const char* why = P.trace() > prevTrace ? "covariance keeps growing" : "iteration cap reached";
    throw Error(ErrorCode::NoConvergence, std::string("steady-state Riccati iteration: ") + why);
  }
  KalmanSolution sol;
  sol.P = P;
  Matrix M = A * P * A.transpose() + Q;
  Matrix S = C * M * C.transpose() + R;
  sol.K = S.ldlt().solve(C * M).transpose();
  sol.closedLoop = A - sol.K * C * A;
  sol.r = sol.K.size() && sol.K.norm() > 0.0 ? numerical_rank(sol.K, 1e-9) : 0;
  if (spectral_radius(sol.closedLoop) >= 1.0 - 1e-9)
    throw Error(ErrorCode::NoConvergence, "steady-state closed loop is not stable");
  return sol;
}

KalmanSolution solve_steady_gain(const LtiSystem& sys, const SensorNetwork& net,
                                 const SteadyGainOptions& opt) {
  return solve_steady_gain(sys.A, sys.Q, net.C, net.R, sys.x0Cov, opt);
}

std::vector<Vector> run_centralized(const KalmanSolution& sol,
                                    const std::vector<Vector>& measurements) {
  const Eigen::Index n = sol.K.rows(), m = sol.K.cols();
  std::vector<Vector> out;
  out.reserve(measurements.size());
  Vector x = Vector::Zero(n);
  for (const Vector& y : measurements) {
    if (y.size() != m) throw Error(ErrorCode::DimensionMismatch, "measurement size differs from m");
    x = sol.closedLoop * x + sol.K * y;
    out.push_back(x);
  }
  return out;
}

Matrix luenberger_error_cov(const LtiSystem& sys, const SensorNetwork& net, const Matrix& K) {
  const Eigen::Index n = sys.n();
  if (K.rows() != n || K.cols() != net.m())
    throw Error(ErrorCode::DimensionMismatch, "gain must be n x m");
  Matrix F = sys.A - K * net.C * sys.A;
  if (spectral_radius(F) >= 1.0)
    throw Error(ErrorCode::UnstableClosedLoop, "A - KCA is not stable");
  Matrix IKC = Matrix::Identity(n, n) - K * net.C;
  Matrix W = IKC * sys.Q * IKC.transpose() + K * net.R * K.transpose();
  Matrix P = solve_stein(F, W);
  double res = (F * P * F.transpose() + W - P).norm();
  if (res > 1e-9 * (1.0 + P.norm()))
    throw Error(ErrorCode::UnstableClosedLoop, "Stein residual too large; closed loop nearly unstable");
  return P;
}

}  // namespace etdkf
