#include "etdkf/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace etdkf {

void require_square(const Matrix& M, const char* name) {
  if (M.rows() != M.cols())
    throw Error(ErrorCode::DimensionMismatch, std::string(name) + " must be square");
}

double spectral_radius(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

ComplexVector sorted_eigenvalues(const Matrix& M) {
  if (M.size() == 0) return ComplexVector();
  Eigen::EigenSolver<Matrix> es(M, false);
  std::vector<Complex> v(es.eigenvalues().data(), es.eigenvalues().data() + M.rows());
  std::sort(v.begin(), v.end(), [](Complex a, Complex b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return Eigen::Map<ComplexVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

double min_sym_eigenvalue(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Matrix sym_sqrt(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M));
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Matrix sym_inv_sqrt(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M));
  if (es.eigenvalues()(0) <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "matrix is not positive definite");
  Vector d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Matrix solve_stein(const Matrix& F, const Matrix& W) {
  Matrix P = W;
  Matrix Fk = F;
  for (int it = 0; it < 200; ++it) {
    Matrix inc = Fk * P * Fk.transpose();
    P += inc;
    Fk = Fk * Fk;
    if (inc.norm() <= 1e-17 * (1.0 + P.norm()) || Fk.norm() < 1e-300) break;
  }
  return symmetrize(P);
}

int numerical_rank(const Matrix& M, double relTol) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > relTol * s(0)) ++r;
  return r;
}

bool is_observable(const Matrix& A, const Matrix& C, double relTol) {
  const Eigen::Index n = A.rows();
  Matrix O(C.rows() * n, n);
  Matrix blk = C;
  for (Eigen::Index k = 0; k < n; ++k) {
    O.middleRows(k * C.rows(), C.rows()) = blk;
    blk = blk * A;
  }
  return numerical_rank(O, relTol) >= n;
}

Matrix kron(const Matrix& X, const Matrix& Y) {
  Matrix out(X.rows() * Y.rows(), X.cols() * Y.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      out.block(i * Y.rows(), j * Y.cols(), Y.rows(), Y.cols()) = X(i, j) * Y;
  return out;
}

double multiset_distance(const ComplexVector& a, const ComplexVector& b) {
  if (a.size() != b.size()) return INFINITY;
  // greedy nearest matching is more robust than lexicographic sorting when
  // real parts tie up to roundoff
  std::vector<Complex> rest(b.data(), b.data() + b.size());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    auto best = std::min_element(rest.begin(), rest.end(), [&](Complex x, Complex y) {
      return std::abs(x - a(i)) < std::abs(y - a(i));
    });
    worst = std::max(worst, std::abs(*best - a(i)));
    rest.erase(best);
  }
  return worst;
}

double mahler_measure(const ComplexVector& eigs) {
  double prod = 1.0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    double mod = std::abs(eigs(i));
    if (mod >= 1.0 - 1e-8) prod *= mod;
  }
  return prod;
}

}  // namespace etdkf
