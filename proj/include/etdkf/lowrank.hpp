#pragma once

#include "etdkf/kalman.hpp"
#include "etdkf/model.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace etdkf {

struct ObjectiveValue {
  double f = 0.0;
  Matrix grad;
  Matrix Ptilde;  // posterior covariance at X
};

/// f(X) = tr P̃(X) with P̃ = [(AP̃Aᵀ+Q)⁻¹ + C̄ᵀXC̄]⁻¹, and its gradient in X.
ObjectiveValue relaxation_objective_grad(const LtiSystem& sys, const Matrix& Cbar, const Matrix& X,
                                         bool withGradient = true);

/// Euclidean projection of v onto {0 ≤ x ≤ 1, Σx = r}.
Vector project_capped_simplex(const Vector& v, double r);
/// Projection onto {X = Xᵀ, 0 ≤ X ≤ I, tr X = r}.
Matrix project_spectahedron(const Matrix& X, double r);

struct RelaxationResult {
  Matrix Xstar;
  double f = 0.0;
  int iterations = 0;
  std::vector<double> history;  // objective at accepted iterates
};

RelaxationResult solve_relaxation(const LtiSystem& sys, const SensorNetwork& net, int rTilde);

struct Rounding {
  Matrix X0;
  Matrix W;
  std::vector<std::string> warnings;
};

Rounding round_and_recover(const Matrix& Xstar, const Matrix& R, int rTilde);

struct RefineOptions {
  int samples = 64;  // Gaussian draws with covariance X*
  int maxIter = 300;
  std::uint64_t seed = 0x5eed;
};

/// Best rank-r̃ projection found by sampling around X* and descending on the Grassmannian,
/// started from the eigen-rounded X0. Never worse than X0.
Rounding refine_rounding(const LtiSystem& sys, const Matrix& Cbar, const Matrix& Xstar,
                         const Matrix& R, const Rounding& start, int rTilde,
                         const RefineOptions& opt = {});

struct VirtualGain {
  Matrix Kbar;
  Matrix Krt;
  Matrix Ptilde;
  double costIdentityResidual = 0.0;  // ‖luenberger_error_cov(Krt) − P̃‖_F
};

VirtualGain design_gain(const LtiSystem& sys, const SensorNetwork& net, const Matrix& W);

struct LowRankDesign {
  int rTilde = 0;
  Matrix Xstar, X0, W, Kbar, Krt, Ptilde;
  double Jrt = 1.0;
  double eigenRoundedJ = 1.0;  // J of the plain eigenvector rounding, before refinement
  double relaxedObjective = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

LowRankDesign design_low_rank(const LtiSystem& sys, const SensorNetwork& net, int rTilde);

/// (r̃, J_r̃) sorted by r̃.
std::vector<std::pair<int, double>> performance_table(const LtiSystem& sys,
                                                      const SensorNetwork& net,
                                                      std::vector<int> rTildeRange,
                                                      std::vector<LowRankDesign>* designs = nullptr);

/// Smallest eigenvalues of the two LMI blocks with Θ = P̃⁻¹.
std::pair<double, double> lmi_min_eigenvalues(const LtiSystem& sys, const Matrix& Cbar,
                                              const Matrix& X, const Matrix& Ptilde);

}  // namespace etdkf
