#include "etdkf/lowrank.hpp"

#include "etdkf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

namespace etdkf {

namespace {

/// Prior covariance Σ = AΣ(I + GΣ)⁻¹Aᵀ + Q by structure-preserving doubling.
Matrix prior_by_doubling(const Matrix& A, const Matrix& G, const Matrix& Q) {
  const Eigen::Index n = A.rows();
  const Matrix I = Matrix::Identity(n, n);
  Matrix Ak = A.transpose(), Gk = G, Hk = Q;
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<Matrix> W(I + Gk * Hk);
    Matrix WA = W.solve(Ak);
    Matrix WG = W.solve(Gk);
    Matrix Hn = symmetrize(Hk + Ak.transpose() * Hk * WA);
    Gk = symmetrize(Gk + Ak * WG * Ak.transpose());
    Ak = Ak * WA;
    if (!Hn.allFinite() || Hn.norm() > 1e14)
      throw Error(ErrorCode::Divergence, "prior covariance grows without bound");
    double change = (Hn - Hk).norm();
    Hk = std::move(Hn);
    if (change <= 1e-15 * (1.0 + Hk.norm())) return Hk;
  }
  throw Error(ErrorCode::Divergence, "doubling iteration did not settle");
}

}  // namespace

ObjectiveValue relaxation_objective_grad(const LtiSystem& sys, const Matrix& Cbar, const Matrix& X,
                                         bool withGradient) {
  const Eigen::Index n = sys.n();
  const Matrix I = Matrix::Identity(n, n);
  Matrix G = symmetrize(Cbar.transpose() * X * Cbar);
  Matrix Sigma = prior_by_doubling(sys.A, G, sys.Q);
  Eigen::PartialPivLU<Matrix> lu(I + Sigma * G);
  ObjectiveValue out;
  out.Ptilde = symmetrize(lu.solve(Sigma));
  out.f = out.Ptilde.trace();
  if (withGradient) {
    Matrix Fc = lu.solve(sys.A);
    if (spectral_radius(Fc) >= 1.0)
      throw Error(ErrorCode::Divergence, "closed loop at X is not stable");
    Matrix Y = solve_stein(Fc.transpose(), I);
    Matrix PC = out.Ptilde * Cbar.transpose();
    out.grad = -symmetrize(PC.transpose() * Y * PC);
  }
  return out;
}

Vector project_capped_simplex(const Vector& v, double r) {
  const Eigen::Index m = v.size();
  if (r < 0.0 || r > double(m)) throw Error(ErrorCode::InfeasibleRank, "sum outside [0, m]");
  auto mass = [&](double tau) { return (v.array() - tau).cwiseMax(0.0).cwiseMin(1.0).sum(); };
  double lo = v.minCoeff() - 1.0, hi = v.maxCoeff();
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
    double mid = 0.5 * (lo + hi);
    (mass(mid) > r ? lo : hi) = mid;
  }
  double tau = 0.5 * (lo + hi);
  // exact shift on the free set found by bisection
  double sumFree = 0.0;
  int free = 0, ones = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double t = v(i) - tau;
    if (t >= 1.0) ++ones;
    else if (t > 0.0) {
      sumFree += v(i);
      ++free;
    }
  }
  if (free > 0) {
    double exact = (sumFree + ones - r) / free;
    double probe = (v.array() - exact).cwiseMax(0.0).cwiseMin(1.0).sum();
    if (std::abs(probe - r) <= std::abs(mass(tau) - r)) tau = exact;
  }
  return (v.array() - tau).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

Matrix project_spectahedron(const Matrix& X, double r) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(X));
  Vector d = project_capped_simplex(es.eigenvalues(), r);
  return symmetrize(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

RelaxationResult solve_relaxation(const LtiSystem& sys, const SensorNetwork& net, int rTilde) {
  const Eigen::Index m = net.m();
  if (rTilde < 1 || rTilde > m) throw Error(ErrorCode::InfeasibleRank, "rank must lie in [1, m]");
  const Matrix Cbar = sym_inv_sqrt(net.R) * net.C;
  RelaxationResult res;
  Matrix X = (double(rTilde) / double(m)) * Matrix::Identity(m, m);
  if (rTilde == m) {
    res.Xstar = Matrix::Identity(m, m);
    res.f = relaxation_objective_grad(sys, Cbar, res.Xstar, false).f;
    res.history.push_back(res.f);
    return res;
  }
  ObjectiveValue cur = relaxation_objective_grad(sys, Cbar, X);
  res.history.push_back(cur.f);
  double t = 1.0 / std::max(cur.grad.norm(), 1e-12);
  const double sigma = 1e-4;
  for (int it = 0; it < 5000; ++it) {
    bool accepted = false;
    Matrix Xn;
    ObjectiveValue nxt;
    for (int bt = 0; bt < 60; ++bt) {
      Xn = project_spectahedron(X - t * cur.grad, rTilde);
      double step2 = (Xn - X).squaredNorm();
      if (step2 == 0.0) break;
      try {
        nxt = relaxation_objective_grad(sys, Cbar, Xn);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Divergence) throw;
        t *= 0.5;
        continue;
      }
      if (nxt.f <= cur.f - sigma / t * step2) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    Matrix s = Xn - X;
    Matrix yv = nxt.grad - cur.grad;
    double sy = (s.array() * yv.array()).sum();
    t = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * t;
    t = std::clamp(t, 1e-12, 1e12);
    X = std::move(Xn);
    cur = std::move(nxt);
    res.history.push_back(cur.f);
    res.iterations = it + 1;
    const size_t h = res.history.size();
    if (h > 20 && (res.history[h - 21] - cur.f) <= 1e-8 * std::abs(cur.f)) break;
  }
  res.Xstar = X;
  res.f = cur.f;
  return res;
}

Rounding round_and_recover(const Matrix& Xstar, const Matrix& R, int rTilde) {
  const Eigen::Index m = Xstar.rows();
  if (rTilde < 1 || rTilde > m) throw Error(ErrorCode::InfeasibleRank, "rank must lie in [1, m]");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(Xstar));
  Matrix U = es.eigenvectors();
  Vector lam = es.eigenvalues();
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i)
      if (std::abs(U(i, j)) > 1e-12) {
        if (U(i, j) < 0.0) U.col(j) *= -1.0;
        break;
      }
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return lam(a) > lam(b); });
  Rounding out;
  if (rTilde < m && lam(idx[rTilde - 1]) - lam(idx[rTilde]) < 1e-6)
    out.warnings.push_back("DegenerateSpectrum: eigenvalue gap at the rounding rank is below 1e-6");
  Matrix Ur(m, rTilde);
  for (int j = 0; j < rTilde; ++j) Ur.col(j) = U.col(idx[j]);
  out.X0 = Ur * Ur.transpose();
  out.W = (sym_inv_sqrt(R) * Ur).transpose();
  return out;
}

namespace {

Matrix orthonormal_basis(const Matrix& M) {
  Eigen::HouseholderQR<Matrix> qr(M);
  return Matrix(qr.householderQ()).leftCols(M.cols());
}

double try_objective(const LtiSystem& sys, const Matrix& Cbar, const Matrix& U) {
  try {
    return relaxation_objective_grad(sys, Cbar, U * U.transpose(), false).f;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Divergence) throw;
    return INFINITY;
  }
}

}  // namespace

Rounding refine_rounding(const LtiSystem& sys, const Matrix& Cbar, const Matrix& Xstar,
                         const Matrix& R, const Rounding& start, int rTilde,
                         const RefineOptions& opt) {
  const Eigen::Index m = Xstar.rows();
  Matrix U = sym_sqrt(R) * start.W.transpose();
  double f = try_objective(sys, Cbar, U);
  const double f0 = f;

  std::mt19937_64 gen(opt.seed ^ std::uint64_t(rTilde));
  std::normal_distribution<double> nd;
  const Matrix root = sym_sqrt(Xstar);
  for (int s = 0; s < opt.samples; ++s) {
    Matrix Z(m, rTilde);
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = nd(gen);
    Matrix Us = orthonormal_basis(root * Z + 1e-9 * Z);
    double fs = try_objective(sys, Cbar, Us);
    if (fs < f) {
      f = fs;
      U = Us;
    }
  }

  // Riemannian descent on span(U); the gradient of f(UUᵀ) in U is 2∇f·U
  const Matrix I = Matrix::Identity(m, m);
  double t = 1.0;
  int stall = 0;
  for (int it = 0; it < opt.maxIter && std::isfinite(f); ++it) {
    ObjectiveValue v = relaxation_objective_grad(sys, Cbar, U * U.transpose());
    Matrix xi = (I - U * U.transpose()) * (2.0 * v.grad * U);
    const double g2 = xi.squaredNorm();
    if (g2 <= 1e-24 * (1.0 + f * f)) break;
    bool accepted = false;
    for (int bt = 0; bt < 50; ++bt) {
      Matrix Un = orthonormal_basis(U - t * xi);
      double fn = try_objective(sys, Cbar, Un);
      if (fn <= f - 1e-4 * t * g2) {
        stall = (f - fn) <= 1e-12 * std::abs(f) ? stall + 1 : 0;
        U = std::move(Un);
        f = fn;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || stall >= 10) break;
    t *= 2.0;
  }

  if (!(f < f0)) return start;
  Rounding out;
  out.X0 = U * U.transpose();
  out.W = (sym_inv_sqrt(R) * U).transpose();
  out.warnings = start.warnings;
  return out;
}

VirtualGain design_gain(const LtiSystem& sys, const SensorNetwork& net, const Matrix& W) {
  if (W.cols() != net.m()) throw Error(ErrorCode::DimensionMismatch, "W must have m columns");
  Matrix Ct = W * net.C;
  Matrix Rt = symmetrize(W * net.R * W.transpose());
  SteadyGainOptions opt;
  opt.checkObservability = false;
  KalmanSolution ks;
  try {
    ks = solve_steady_gain(sys.A, sys.Q, Ct, Rt, sys.x0Cov, opt);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoConvergence)
      throw Error(ErrorCode::VirtualNotDetectable, "(A, WC) is not detectable");
    throw;
  }
  VirtualGain out;
  out.Ptilde = ks.P;
  out.Kbar = ks.K;
  out.Krt = ks.K * W;
  out.costIdentityResidual = (luenberger_error_cov(sys, net, out.Krt) - out.Ptilde).norm();
  return out;
}

LowRankDesign design_low_rank(const LtiSystem& sys, const SensorNetwork& net, int rTilde) {
  LowRankDesign d;
  d.rTilde = rTilde;
  RelaxationResult rel = solve_relaxation(sys, net, rTilde);
  d.Xstar = rel.Xstar;
  d.relaxedObjective = rel.f;
  d.iterations = rel.iterations;
  Rounding eig = round_and_recover(rel.Xstar, net.R, rTilde);
  const Matrix Cbar = sym_inv_sqrt(net.R) * net.C;
  Rounding rd = rTilde < net.m() ? refine_rounding(sys, Cbar, rel.Xstar, net.R, eig, rTilde) : eig;
  d.X0 = rd.X0;
  d.W = rd.W;
  d.warnings = rd.warnings;
  VirtualGain vg = design_gain(sys, net, rd.W);
  d.Kbar = vg.Kbar;
  d.Krt = vg.Krt;
  d.Ptilde = vg.Ptilde;
  KalmanSolution full = solve_steady_gain(sys, net);
  d.Jrt = d.Ptilde.trace() / full.P.trace();
  d.eigenRoundedJ = d.Jrt;
  if (rd.X0 != eig.X0) {
    d.eigenRoundedJ = try_objective(sys, Cbar, sym_sqrt(net.R) * eig.W.transpose()) / full.P.trace();
  }
  return d;
}

std::vector<std::pair<int, double>> performance_table(const LtiSystem& sys,
                                                      const SensorNetwork& net,
                                                      std::vector<int> rTildeRange,
                                                      std::vector<LowRankDesign>* designs) {
  std::sort(rTildeRange.begin(), rTildeRange.end());
  rTildeRange.erase(std::unique(rTildeRange.begin(), rTildeRange.end()), rTildeRange.end());
  for (int r : rTildeRange)
    if (r < 1 || r > net.m()) throw Error(ErrorCode::InfeasibleRank, "rank must lie in [1, m]");
  std::vector<LowRankDesign> out(rTildeRange.size());
  std::vector<std::optional<Error>> errors(rTildeRange.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < int(rTildeRange.size()); ++i) {
    try {
      out[i] = design_low_rank(sys, net, rTildeRange[i]);
    } catch (const Error& e) {
      errors[i] = e;
    }
  }
  for (const auto& e : errors)
    if (e) throw *e;
  std::vector<std::pair<int, double>> table;
  for (const LowRankDesign& d : out) table.emplace_back(d.rTilde, d.Jrt);
  if (designs) *designs = std::move(out);
  return table;
}

std::pair<double, double> lmi_min_eigenvalues(const LtiSystem& sys, const Matrix& Cbar,
                                              const Matrix& X, const Matrix& Ptilde) {
  const Eigen::Index n = sys.n();
  const Matrix I = Matrix::Identity(n, n);
  Matrix Theta = symmetrize(Ptilde.inverse());
  Matrix Qi = symmetrize(sys.Q.inverse());
  Matrix L1(2 * n, 2 * n);
  L1 << Ptilde, I, I, Theta;
  Matrix L2(2 * n, 2 * n);
  L2 << Qi - Theta + Cbar.transpose() * X * Cbar, Qi * sys.A, sys.A.transpose() * Qi,
      Theta + sys.A.transpose() * Qi * sys.A;
  return {min_sym_eigenvalue(L1), min_sym_eigenvalue(L2)};
}

}  // namespace etdkf
