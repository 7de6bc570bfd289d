#pragma once

#include "etdkf/types.hpp"

#include <vector>

namespace etdkf {

/// Moduli within this distance of 1 count as unstable.
inline constexpr double kUnitCircleTol = 1e-8;

struct LtiSystem {
  Matrix A;
  Matrix Q;
  Matrix x0Cov;
  /// -1 when A has not been put in split block form.
  int nUnstable = -1;

  Eigen::Index n() const { return A.rows(); }
  void validate() const;
};

struct SensorNetwork {
  Matrix C;
  Matrix R;
  Matrix adjacency;

  Eigen::Index m() const { return C.rows(); }
  /// Checks everything except connectedness.
  void validate(Eigen::Index n) const;
};

struct LaplacianSpectrum {
  Matrix laplacian;
  Vector eigenvalues;
  bool connected = false;
  int components = 0;

  double mu2() const { return eigenvalues.size() > 1 ? eigenvalues(1) : 0.0; }
  double muMax() const { return eigenvalues.size() ? eigenvalues(eigenvalues.size() - 1) : 0.0; }
};

LaplacianSpectrum build_laplacian(const Matrix& adjacency);

struct SpectralSplit {
  Matrix similarity;
  Matrix blockA;
  int nUnstable = 0;
};

/// similarity * A * similarity^{-1} = blockA with the unstable block first.
SpectralSplit spectral_split(const Matrix& A);

Vector unstable_eigen_moduli(const Matrix& A);
ComplexVector unstable_eigenvalues(const Matrix& A);

struct HeatGridParams {
  int gridSide = 5;
  double lambda = 0.1;
  std::vector<int> sensorCells{0, 1, 2, 4, 6, 8, 10, 12, 13, 14, 16, 18, 20, 22, 24};
  int linkRadius = 2;
};

struct PlantAndNetwork {
  LtiSystem sys;
  SensorNetwork net;
};

Matrix grid_laplacian(int gridSide);
PlantAndNetwork heat_grid_system(const HeatGridParams& p);
PlantAndNetwork example1_system();

Matrix ring_adjacency(int m);

}  // namespace etdkf
