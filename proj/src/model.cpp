#include "etdkf/model.hpp"

#include "etdkf/linalg.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace etdkf {

namespace {

bool is_symmetric(const Matrix& M, double tol) {
  return M.rows() == M.cols() && (M - M.transpose()).cwiseAbs().maxCoeff() <= tol;
}

int count_components(const Matrix& adjacency) {
  const Eigen::Index m = adjacency.rows();
  std::vector<int> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      if (adjacency(i, j) > 0.0) parent[find(int(i))] = find(int(j));
  std::set<int> roots;
  for (Eigen::Index i = 0; i < m; ++i) roots.insert(find(int(i)));
  return int(roots.size());
}

lapack_logical select_unstable(const double* wr, const double* wi) {
  return std::hypot(*wr, *wi) >= 1.0 - kUnitCircleTol;
}

}  // namespace

void LtiSystem::validate() const {
  require_square(A, "A");
  if (Q.rows() != A.rows() || Q.cols() != A.rows() || x0Cov.rows() != A.rows() ||
      x0Cov.cols() != A.rows())
    throw Error(ErrorCode::DimensionMismatch, "Q and x0_cov must match A");
  if (!is_symmetric(Q, 1e-10) || !is_symmetric(x0Cov, 1e-10))
    throw Error(ErrorCode::NotSymmetric, "Q and x0_cov must be symmetric");
  if (min_sym_eigenvalue(Q) < -1e-10 || min_sym_eigenvalue(x0Cov) < -1e-10)
    throw Error(ErrorCode::InvalidArgument, "Q and x0_cov must be positive semidefinite");
  if (nUnstable >= 0) {
    const Eigen::Index nu = nUnstable, ns = A.rows() - nUnstable;
    if (nu > A.rows()) throw Error(ErrorCode::InvalidArgument, "nUnstable exceeds n");
    if (nu > 0 && ns > 0 &&
        (A.topRightCorner(nu, ns).cwiseAbs().maxCoeff() > 1e-12 ||
         A.bottomLeftCorner(ns, nu).cwiseAbs().maxCoeff() > 1e-12))
      throw Error(ErrorCode::InvalidArgument, "A is not block diagonal");
    if (nu > 0) {
      Eigen::EigenSolver<Matrix> es(A.topLeftCorner(nu, nu), false);
      if (es.eigenvalues().cwiseAbs().minCoeff() < 1.0 - kUnitCircleTol)
        throw Error(ErrorCode::InvalidArgument, "unstable block has a stable eigenvalue");
    }
    if (ns > 0 && spectral_radius(A.bottomRightCorner(ns, ns)) >= 1.0 - kUnitCircleTol)
      throw Error(ErrorCode::InvalidArgument, "stable block has an unstable eigenvalue");
  }
}

void SensorNetwork::validate(Eigen::Index n) const {
  const Eigen::Index m = C.rows();
  if (C.cols() != n) throw Error(ErrorCode::DimensionMismatch, "C must have n columns");
  if (R.rows() != m || R.cols() != m)
    throw Error(ErrorCode::DimensionMismatch, "R must be m x m");
  if (adjacency.rows() != m || adjacency.cols() != m)
    throw Error(ErrorCode::DimensionMismatch, "adjacency must be m x m");
  if (!is_symmetric(R, 1e-10)) throw Error(ErrorCode::NotSymmetric, "R must be symmetric");
  if (min_sym_eigenvalue(R) <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "R must be positive definite");
  if (!is_symmetric(adjacency, 0.0))
    throw Error(ErrorCode::NotSymmetric, "adjacency must be symmetric");
  if (adjacency.minCoeff() < 0.0)
    throw Error(ErrorCode::NegativeWeight, "adjacency has a negative weight");
  if (adjacency.diagonal().cwiseAbs().maxCoeff() != 0.0)
    throw Error(ErrorCode::InvalidArgument, "adjacency diagonal must be zero");
}

LaplacianSpectrum build_laplacian(const Matrix& adjacency) {
  require_square(adjacency, "adjacency");
  if (!is_symmetric(adjacency, 0.0))
    throw Error(ErrorCode::NotSymmetric, "adjacency must be symmetric");
  if (adjacency.size() && adjacency.minCoeff() < 0.0)
    throw Error(ErrorCode::NegativeWeight, "adjacency has a negative weight");
  LaplacianSpectrum out;
  Vector deg = adjacency.rowwise().sum();
  out.laplacian = Matrix(deg.asDiagonal()) - adjacency;
  Eigen::SelfAdjointEigenSolver<Matrix> es(out.laplacian, Eigen::EigenvaluesOnly);
  out.eigenvalues = es.eigenvalues();
  out.components = count_components(adjacency);
  out.connected = adjacency.rows() == 1 || out.mu2() > 1e-9;
  return out;
}

Vector unstable_eigen_moduli(const Matrix& A) {
  ComplexVector ev = unstable_eigenvalues(A);
  return ev.cwiseAbs();
}

ComplexVector unstable_eigenvalues(const Matrix& A) {
  ComplexVector ev = sorted_eigenvalues(A);
  std::vector<Complex> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (std::abs(ev(i)) >= 1.0 - kUnitCircleTol) keep.push_back(ev(i));
  return Eigen::Map<ComplexVector>(keep.data(), Eigen::Index(keep.size()));
}

SpectralSplit spectral_split(const Matrix& A) {
  require_square(A, "A");
  const Eigen::Index n = A.rows();
  // already in block form?
  for (Eigen::Index nu = 0; nu <= n; ++nu) {
    const Eigen::Index ns = n - nu;
    bool zeroCoupling = nu == 0 || ns == 0 ||
                        (A.topRightCorner(nu, ns).cwiseAbs().maxCoeff() == 0.0 &&
                         A.bottomLeftCorner(ns, nu).cwiseAbs().maxCoeff() == 0.0);
    if (!zeroCoupling) continue;
    bool topOk = true, botOk = true;
    if (nu > 0) {
      Eigen::EigenSolver<Matrix> es(A.topLeftCorner(nu, nu), false);
      topOk = es.eigenvalues().cwiseAbs().minCoeff() >= 1.0 - kUnitCircleTol;
    }
    if (ns > 0) botOk = spectral_radius(A.bottomRightCorner(ns, ns)) < 1.0 - kUnitCircleTol;
    if (topOk && botOk) return {Matrix::Identity(n, n), A, int(nu)};
  }

  // ordered real Schur form A = Z T Zᵀ with the unstable eigenvalues leading
  Matrix T = A;
  Matrix Z(n, n);
  std::vector<double> wr(n), wi(n);
  lapack_int sdim = 0;
  lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'S', select_unstable, lapack_int(n),
                                  T.data(), lapack_int(n), &sdim, wr.data(), wi.data(), Z.data(),
                                  lapack_int(n));
  if (info != 0)
    throw Error(ErrorCode::DefectiveSplitting, "real Schur decomposition failed");
  const Eigen::Index nu = sdim, ns = n - sdim;
  // remove the coupling T12 by solving T11 X − X T22 = −T12, then
  // [I X; 0 I]^{-1} T [I X; 0 I] = diag(T11, T22)
  Matrix X = Matrix::Zero(nu, ns);
  if (nu > 0 && ns > 0) {
    Matrix T11 = T.topLeftCorner(nu, nu), T22 = T.bottomRightCorner(ns, ns);
    Matrix T12 = T.topRightCorner(nu, ns);
    Matrix M = kron(Matrix::Identity(ns, ns), T11) - kron(T22.transpose(), Matrix::Identity(nu, nu));
    Eigen::FullPivLU<Matrix> lu(M);
    if (!lu.isInvertible())
      throw Error(ErrorCode::DefectiveSplitting, "Sylvester system for the coupling is singular");
    Vector rhs = -Eigen::Map<const Vector>(T12.data(), T12.size());
    Vector x = lu.solve(rhs);
    X = Eigen::Map<Matrix>(x.data(), nu, ns);
    if ((T11 * X - X * T22 + T12).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + T12.norm()))
      throw Error(ErrorCode::DefectiveSplitting, "Sylvester residual too large");
  }
  Matrix Y = Matrix::Identity(n, n);
  Y.topRightCorner(nu, ns) = X;
  // blockA = Y^{-1} Zᵀ A Z Y, so similarity = Y^{-1} Zᵀ
  Matrix Yinv = Matrix::Identity(n, n);
  Yinv.topRightCorner(nu, ns) = -X;
  SpectralSplit out;
  out.similarity = Yinv * Z.transpose();
  Matrix Ti = Yinv * T * Y;
  if (nu > 0 && ns > 0) {
    Ti.topRightCorner(nu, ns).setZero();
    Ti.bottomLeftCorner(ns, nu).setZero();
  }
  out.blockA = Ti;
  out.nUnstable = int(nu);
  return out;
}

Matrix grid_laplacian(int gridSide) {
  const int N = gridSide * gridSide;
  Matrix L = Matrix::Zero(N, N);
  for (int r = 0; r < gridSide; ++r)
    for (int c = 0; c < gridSide; ++c) {
      const int i = r * gridSide + c;
      const int dr[4] = {1, -1, 0, 0}, dc[4] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        int rr = r + dr[d], cc = c + dc[d];
        if (rr < 0 || rr >= gridSide || cc < 0 || cc >= gridSide) continue;
        L(i, rr * gridSide + cc) -= 1.0;
        L(i, i) += 1.0;
      }
    }
  return L;
}

PlantAndNetwork heat_grid_system(const HeatGridParams& p) {
  if (p.gridSide < 1) throw Error(ErrorCode::InvalidArgument, "grid_side must be >= 1");
  if (!(p.lambda > 0.0 && p.lambda < 0.125))
    throw Error(ErrorCode::InvalidArgument, "lambda must lie in (0, 1/8)");
  const int N = p.gridSide * p.gridSide;
  std::set<int> seen;
  for (int c : p.sensorCells) {
    if (c < 0 || c >= N) throw Error(ErrorCode::InvalidArgument, "sensor cell out of range");
    if (!seen.insert(c).second) throw Error(ErrorCode::InvalidArgument, "duplicate sensor cell");
  }
  if (p.sensorCells.empty()) throw Error(ErrorCode::InvalidArgument, "no sensor cells");
  const int m = int(p.sensorCells.size());

  PlantAndNetwork out;
  out.sys.A = Matrix::Identity(N, N) - p.lambda * grid_laplacian(p.gridSide);
  out.sys.Q = Matrix::Identity(N, N);
  out.sys.x0Cov = Matrix::Identity(N, N);
  out.net.C = Matrix::Zero(m, N);
  out.net.R = Matrix::Identity(m, m);
  out.net.adjacency = Matrix::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    out.net.C(i, p.sensorCells[i]) = 1.0;
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      int ri = p.sensorCells[i] / p.gridSide, ci = p.sensorCells[i] % p.gridSide;
      int rj = p.sensorCells[j] / p.gridSide, cj = p.sensorCells[j] % p.gridSide;
      if (std::max(std::abs(ri - rj), std::abs(ci - cj)) <= p.linkRadius)
        out.net.adjacency(i, j) = 1.0;
    }
  }
  if (!build_laplacian(out.net.adjacency).connected)
    throw Error(ErrorCode::DisconnectedSensorGraph, "sensor graph is disconnected; increase link_radius");
  return out;
}

Matrix ring_adjacency(int m) {
  Matrix adj = Matrix::Zero(m, m);
  if (m < 2) return adj;
  for (int i = 0; i < m; ++i) {
    int j = (i + 1) % m;
    if (i == j) continue;
    adj(i, j) = adj(j, i) = 1.0;
  }
  return adj;
}

PlantAndNetwork example1_system() {
  PlantAndNetwork out;
  out.sys.A = Eigen::Vector2d(0.9, 1.1).asDiagonal();
  out.sys.Q = 0.5 * Matrix::Identity(2, 2);
  out.sys.x0Cov = Matrix::Identity(2, 2);
  out.net.C.resize(4, 2);
  out.net.C << 1, 0, 0, 1, 1, 1, 1, -1;
  out.net.R = 2.0 * Matrix::Identity(4, 4);
  out.net.adjacency = ring_adjacency(4);
  return out;
}

}  // namespace etdkf
