#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace etdkf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Failure categories. The CLI maps each one to its own exit code.
enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotSymmetric,
  NegativeWeight,
  DisconnectedSensorGraph,
  DefectiveSplitting,
  NotObservable,
  NoConvergence,
  UnstableClosedLoop,
  ControllabilityLost,
  PlacementFailed,
  NoSolution,
  ZeroGain,
  MahlerBoundViolated,
  ZetaInfeasible,
  MareDiverged,
  SyncSpectrumUnstable,
  Divergence,
  InfeasibleRank,
  VirtualNotDetectable,
  ConfigParse,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace etdkf
