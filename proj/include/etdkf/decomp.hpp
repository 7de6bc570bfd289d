#pragma once

#include "etdkf/kalman.hpp"
#include "etdkf/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace etdkf {

/// Real modal/Jordan form with the same characteristic polynomial, sorted by (real, imag).
Matrix build_lambda(const Matrix& closedLoop);

/// min over eigenvalues λ of σ_min([M − λI | b]).
double pbh_margin(const Matrix& M, const Vector& b);

enum class PolePolicyKind {
  Auto,         // evenly spaced, falling back to interlacing when placement is ill-conditioned
  Evenly,       // 0.05 + 0.4·j/(c+1)
  Interlacing,  // midpoints between consecutive eigenvalues of Λ
  Explicit,
};

struct StablePolePolicy {
  PolePolicyKind kind = PolePolicyKind::Auto;
  std::vector<Complex> poles;  // Explicit only
};

struct BetaS {
  Vector beta;
  Matrix S;
  std::vector<Complex> stablePoles;
  std::vector<std::string> warnings;
};

/// β with eig(Λ + 1βᵀ) = targets; conjugate pairs must both be listed.
Vector place_single_input(const Matrix& lambdaMat, const std::vector<Complex>& targets);

BetaS design_beta_S(const Matrix& lambdaMat, const ComplexVector& unstableEigs,
                    const StablePolePolicy& policy = {});

/// T with TX = YT and Tp = q.
Matrix solve_constrained_sylvester(const Matrix& X, const Matrix& Y, const Vector& p,
                                   const Vector& q);
/// One solve per column of Qcols, sharing the factorization.
std::vector<Matrix> solve_constrained_sylvester_batch(const Matrix& X, const Matrix& Y,
                                                      const Vector& p, const Matrix& Qcols);

struct RankFactor {
  Matrix Ktilde;
  Matrix V;
  std::vector<int> columns;  // columns of K that form Ktilde
};

RankFactor rank_factorize(const Matrix& K, double tol = 1e-9);

struct MareResult {
  RowVector gamma;
  Matrix P;
  double zeta = 0.0;
  double mahler = 1.0;
  double bound = 0.0;
  int iterations = 0;
};

double mahler_bound(double mu2, double muM);

MareResult solve_mare_gamma(const Matrix& S, const Vector& oneVec, double mu2, double muM,
                            std::optional<double> zetaOverride = std::nullopt);

struct Decomposition {
  int n = 0, m = 0, r = 0;
  Matrix K;
  Matrix closedLoop;
  Matrix lambdaMat;
  Vector beta;
  Matrix S;
  std::vector<Complex> stablePoles;
  std::vector<Matrix> F;
  Matrix Ktilde;
  Matrix V;
  RowVector gamma;
  Matrix riccatiP;
  double zeta = 0.0;
  double mahler = 1.0;
  double mahlerBound = 0.0;
  Vector laplacianEigenvalues;
  Matrix H, L, B, T;
  double maxSylvesterResidual = 0.0;
  std::vector<double> syncSpectralRadii;  // ρ(H − μ_j BT), j = 2..m
  std::vector<std::string> warnings;

  Eigen::Index stateDim() const { return Eigen::Index(n) * (r + 1); }
};

struct DecompositionOptions {
  StablePolePolicy poles;
  std::optional<double> zeta;
  double rankTol = 1e-9;
};

/// Builds from the steady Kalman gain.
Decomposition build_decomposition(const LtiSystem& sys, const SensorNetwork& net,
                                  const DecompositionOptions& opt = {});
/// Builds around an arbitrary stabilizing gain (Kalman or low-rank).
Decomposition build_decomposition(const LtiSystem& sys, const SensorNetwork& net,
                                  const Matrix& K, const DecompositionOptions& opt = {});

/// Fills H, L, B, T and checks the synchronization spectra.
void assemble_operator(Decomposition& dec);

// Structured kernels; each has a dense counterpart through dec.H / dec.T / dec.B.
void apply_H(const Decomposition& dec, const Vector& eta, Vector& out);
void apply_T(const Decomposition& dec, const Vector& eta, Vector& out);
/// out += B u
void add_B(const Decomposition& dec, const Vector& u, Vector& out);

struct LocalFilterStep {
  double z;
  Vector xiHatNext;
};

LocalFilterStep local_filter_step(const Vector& xiHat, double yNext, const Vector& beta,
                                  const Matrix& S);

Vector recover_estimate(const std::vector<Matrix>& F, const std::vector<Vector>& xiHats);

}  // namespace etdkf
