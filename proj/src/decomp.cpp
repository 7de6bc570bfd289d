#include "etdkf/decomp.hpp"

#include "etdkf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace etdkf {

namespace {

using ComplexMatrix = Eigen::MatrixXcd;

struct ModalBlock {
  Complex value;
  int size;  // Jordan size (in pairs for complex values)
};

constexpr double kClusterTol = 1e-6;
constexpr double kRealTol = 1e-9;

std::vector<ModalBlock> modal_blocks(const ComplexVector& ev) {
  std::vector<Complex> reals, uppers;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i).imag()) <= kRealTol * std::max(1.0, std::abs(ev(i))))
      reals.push_back({ev(i).real(), 0.0});
    else if (ev(i).imag() > 0)
      uppers.push_back(ev(i));
  }
  auto less = [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  };
  std::sort(reals.begin(), reals.end(), less);
  std::sort(uppers.begin(), uppers.end(), less);
  std::vector<ModalBlock> blocks;
  auto cluster = [&](const std::vector<Complex>& vals) {
    std::vector<bool> used(vals.size(), false);
    for (size_t i = 0; i < vals.size(); ++i) {
      if (used[i]) continue;
      Complex sum = vals[i];
      int cnt = 1;
      used[i] = true;
      for (size_t j = i + 1; j < vals.size(); ++j)
        if (!used[j] && std::abs(vals[j] - vals[i]) <= kClusterTol) {
          used[j] = true;
          sum += vals[j];
          ++cnt;
        }
      blocks.push_back({sum / double(cnt), cnt});
    }
  };
  cluster(reals);
  cluster(uppers);
  std::sort(blocks.begin(), blocks.end(),
            [&](const ModalBlock& a, const ModalBlock& b) { return less(a.value, b.value); });
  return blocks;
}

ComplexVector resolvent_times(const Matrix& lambdaMat, Complex s, const Vector& b, int power) {
  const Eigen::Index n = lambdaMat.rows();
  ComplexMatrix M = s * ComplexMatrix::Identity(n, n) - lambdaMat.cast<Complex>();
  Eigen::PartialPivLU<ComplexMatrix> lu(M);
  ComplexVector v = b.cast<Complex>();
  for (int p = 0; p < power; ++p) v = lu.solve(v);
  return v;
}

std::vector<Complex> evenly_spaced_poles(int c) {
  std::vector<Complex> poles;
  for (int j = 1; j <= c; ++j) poles.push_back(0.05 + 0.4 * double(j) / double(c + 1));
  return poles;
}

std::vector<Complex> interlacing_poles(const ComplexVector& eigLambda, int c) {
  std::vector<double> re(eigLambda.size());
  for (Eigen::Index i = 0; i < eigLambda.size(); ++i) re[i] = eigLambda(i).real();
  std::sort(re.begin(), re.end());
  std::vector<Complex> poles;
  if (c == int(re.size()) && !re.empty()) poles.push_back(re.front() / 2.0);
  for (size_t i = 0; i + 1 < re.size() && int(poles.size()) < c; ++i)
    poles.push_back(0.5 * (re[i] + re[i + 1]));
  return poles;
}

void nudge_poles(std::vector<Complex>& poles, const ComplexVector& eigLambda,
                 std::vector<std::string>& warnings) {
  auto too_close = [&](Complex p, size_t self) {
    for (Eigen::Index i = 0; i < eigLambda.size(); ++i)
      if (std::abs(p - eigLambda(i)) < 1e-3) return true;
    for (size_t j = 0; j < self; ++j)
      if (std::abs(p - poles[j]) < 1e-3) return true;
    return false;
  };
  for (size_t i = 0; i < poles.size(); ++i) {
    Complex orig = poles[i];
    int tries = 0;
    while (too_close(poles[i], i) && tries < 1000) {
      poles[i] += 1e-3;
      ++tries;
    }
    if (tries > 0)
      warnings.push_back("stable pole " + std::to_string(orig.real()) + " nudged to " +
                         std::to_string(poles[i].real()));
  }
}

BetaS place_and_verify(const Matrix& lambdaMat, const ComplexVector& unstableEigs,
                       std::vector<Complex> poles, std::vector<std::string> warnings) {
  const Eigen::Index n = lambdaMat.rows();
  ComplexVector eigLambda = sorted_eigenvalues(lambdaMat);
  nudge_poles(poles, eigLambda, warnings);
  std::vector<Complex> targets(unstableEigs.data(), unstableEigs.data() + unstableEigs.size());
  targets.insert(targets.end(), poles.begin(), poles.end());
  if (Eigen::Index(targets.size()) != n)
    throw Error(ErrorCode::PlacementFailed, "number of target poles differs from n");
  BetaS out;
  out.beta = place_single_input(lambdaMat, targets);
  out.S = lambdaMat + Vector::Ones(n) * out.beta.transpose();
  ComplexVector want = Eigen::Map<ComplexVector>(targets.data(), n);
  double err = multiset_distance(sorted_eigenvalues(out.S), want);
  if (!(err <= 1e-6))
    throw Error(ErrorCode::PlacementFailed,
                "placed spectrum misses the targets by " + std::to_string(err));
  double bn = out.beta.norm();
  if (bn > 0.0 && pbh_margin(out.S.transpose(), out.beta / bn) < 1e-8)
    throw Error(ErrorCode::PlacementFailed, "(S^T, beta) fails the PBH test");
  out.stablePoles = poles;
  out.warnings = std::move(warnings);
  return out;
}

}  // namespace

Matrix build_lambda(const Matrix& closedLoop) {
  require_square(closedLoop, "closed loop");
  const Eigen::Index n = closedLoop.rows();
  if (spectral_radius(closedLoop) >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "closed loop must be stable");
  std::vector<ModalBlock> blocks = modal_blocks(sorted_eigenvalues(closedLoop));
  Matrix L = Matrix::Zero(n, n);
  Eigen::Index at = 0;
  for (const ModalBlock& b : blocks) {
    if (b.value.imag() == 0.0) {
      for (int k = 0; k < b.size; ++k) {
        L(at + k, at + k) = b.value.real();
        if (k + 1 < b.size) L(at + k, at + k + 1) = 1.0;
      }
      at += b.size;
    } else {
      const double a = b.value.real(), w = b.value.imag();
      for (int k = 0; k < b.size; ++k) {
        Eigen::Index o = at + 2 * k;
        L(o, o) = a;
        L(o, o + 1) = w;
        L(o + 1, o) = -w;
        L(o + 1, o + 1) = a;
        if (k + 1 < b.size) {
          L(o, o + 2) = 1.0;
          L(o + 1, o + 3) = 1.0;
        }
      }
      at += 2 * b.size;
    }
  }
  if (at != n) throw Error(ErrorCode::ControllabilityLost, "modal form lost eigenvalues");
  if (pbh_margin(L, Vector::Ones(n)) < 1e-8)
    throw Error(ErrorCode::ControllabilityLost, "(Lambda, 1) fails the PBH test");
  return L;
}

double pbh_margin(const Matrix& M, const Vector& b) {
  const Eigen::Index n = M.rows();
  if (n == 0) return INFINITY;
  ComplexVector ev = sorted_eigenvalues(M);
  double worst = INFINITY;
  for (Eigen::Index i = 0; i < n; ++i) {
    ComplexMatrix blk(n, n + 1);
    blk.leftCols(n) = M.cast<Complex>() - ev(i) * ComplexMatrix::Identity(n, n);
    blk.col(n) = b.cast<Complex>();
    Eigen::JacobiSVD<ComplexMatrix> svd(blk);
    worst = std::min(worst, svd.singularValues()(n - 1));
  }
  return worst;
}

Vector place_single_input(const Matrix& lambdaMat, const std::vector<Complex>& targets) {
  const Eigen::Index n = lambdaMat.rows();
  const Vector one = Vector::Ones(n);
  // det(sI − Λ − 1βᵀ) = det(sI − Λ)(1 − βᵀ(sI − Λ)⁻¹1), so every target s needs
  // βᵀ(sI − Λ)⁻¹1 = 1, and a root of multiplicity k also needs
  // βᵀ(sI − Λ)^{-(j+1)}1 = 0 for j = 1..k−1.
  std::vector<Complex> seen;
  Matrix rows(0, n);
  std::vector<double> rhs;
  auto push = [&](const Vector& row, double value) {
    rows.conservativeResize(rows.rows() + 1, n);
    rows.row(rows.rows() - 1) = row.transpose();
    rhs.push_back(value);
  };
  for (Complex s : targets) {
    if (s.imag() < -kRealTol) continue;  // conjugate handled with its partner
    bool isReal = std::abs(s.imag()) <= kRealTol;
    if (isReal) s = {s.real(), 0.0};
    int mult = 0;
    for (Complex t : seen)
      if (std::abs(t - s) <= 1e-9) ++mult;
    seen.push_back(s);
    ComplexVector v = resolvent_times(lambdaMat, s, one, mult + 1);
    double value = mult == 0 ? 1.0 : 0.0;
    push(v.real(), value);
    if (!isReal) push(v.imag(), 0.0);
  }
  if (rows.rows() != n)
    throw Error(ErrorCode::PlacementFailed, "targets must be closed under conjugation and number n");
  Eigen::Map<Vector> b(rhs.data(), n);
  Eigen::ColPivHouseholderQR<Matrix> qr(rows);
  Vector beta = qr.solve(b);
  if (!beta.allFinite()) throw Error(ErrorCode::PlacementFailed, "placement system is singular");
  return beta;
}

BetaS design_beta_S(const Matrix& lambdaMat, const ComplexVector& unstableEigs,
                    const StablePolePolicy& policy) {
  require_square(lambdaMat, "Lambda");
  const Eigen::Index n = lambdaMat.rows();
  if (unstableEigs.size() > n)
    throw Error(ErrorCode::PlacementFailed, "more unstable eigenvalues than states");
  const int c = int(n - unstableEigs.size());
  ComplexVector eigLambda = sorted_eigenvalues(lambdaMat);
  switch (policy.kind) {
    case PolePolicyKind::Evenly:
      return place_and_verify(lambdaMat, unstableEigs, evenly_spaced_poles(c), {});
    case PolePolicyKind::Interlacing:
      return place_and_verify(lambdaMat, unstableEigs, interlacing_poles(eigLambda, c), {});
    case PolePolicyKind::Explicit:
      if (int(policy.poles.size()) != c)
        throw Error(ErrorCode::PlacementFailed, "explicit pole count must equal n - n_u");
      return place_and_verify(lambdaMat, unstableEigs, policy.poles, {});
    case PolePolicyKind::Auto:
      break;
  }
  try {
    return place_and_verify(lambdaMat, unstableEigs, evenly_spaced_poles(c), {});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::PlacementFailed) throw;
    return place_and_verify(lambdaMat, unstableEigs, interlacing_poles(eigLambda, c),
                            {"evenly spaced poles ill-conditioned, used interlacing poles"});
  }
}

namespace {

Matrix sylvester_system(const Matrix& X, const Matrix& Y, const Vector& p) {
  const Eigen::Index n = X.rows();
  Matrix M(n * n + n, n * n);
  M.topRows(n * n) = kron(X.transpose(), Matrix::Identity(n, n)) - kron(Matrix::Identity(n, n), Y);
  M.bottomRows(n) = kron(p.transpose(), Matrix::Identity(n, n));
  return M;
}

}  // namespace

std::vector<Matrix> solve_constrained_sylvester_batch(const Matrix& X, const Matrix& Y,
                                                      const Vector& p, const Matrix& Qcols) {
  require_square(X, "X");
  const Eigen::Index n = X.rows();
  if (Y.rows() != n || Y.cols() != n || p.size() != n || Qcols.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "constrained Sylvester: inconsistent sizes");
  Eigen::ColPivHouseholderQR<Matrix> qr(sylvester_system(X, Y, p));
  Matrix rhs = Matrix::Zero(n * n + n, Qcols.cols());
  rhs.bottomRows(n) = Qcols;
  Matrix sol = qr.solve(rhs);
  std::vector<Matrix> out;
  for (Eigen::Index c = 0; c < Qcols.cols(); ++c) {
    Matrix T = Eigen::Map<const Matrix>(sol.col(c).data(), n, n);
    double res = std::max((T * X - Y * T).norm(), (T * p - Qcols.col(c)).norm());
    if (!(res <= 1e-8 * (1.0 + T.norm())))
      throw Error(ErrorCode::NoSolution,
                  "constrained Sylvester residual " + std::to_string(res) + " exceeds tolerance");
    out.push_back(std::move(T));
  }
  return out;
}

Matrix solve_constrained_sylvester(const Matrix& X, const Matrix& Y, const Vector& p,
                                   const Vector& q) {
  return solve_constrained_sylvester_batch(X, Y, p, q).front();
}

RankFactor rank_factorize(const Matrix& K, double tol) {
  if (K.size() == 0 || K.cwiseAbs().maxCoeff() == 0.0)
    throw Error(ErrorCode::ZeroGain, "gain is zero");
  Eigen::JacobiSVD<Matrix> svdK(K);
  const double smax = svdK.singularValues()(0);
  const int r = numerical_rank(K, tol);
  RankFactor out;
  Matrix picked(K.rows(), 0);
  // greedy: keep the leftmost columns that raise the numerical rank
  for (Eigen::Index j = 0; j < K.cols() && int(out.columns.size()) < r; ++j) {
    Matrix trial(K.rows(), picked.cols() + 1);
    trial << picked, K.col(j);
    Eigen::JacobiSVD<Matrix> svd(trial);
    if (svd.singularValues()(trial.cols() - 1) > tol * smax) {
      picked = trial;
      out.columns.push_back(int(j));
    }
  }
  out.Ktilde = picked;
  out.V = picked.colPivHouseholderQr().solve(K);
  if ((out.Ktilde * out.V - K).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, smax))
    throw Error(ErrorCode::ZeroGain, "rank factorization does not reproduce K");
  return out;
}

double mahler_bound(double mu2, double muM) {
  if (muM <= 0.0) return 0.0;
  double ratio = mu2 / muM;
  if (ratio >= 1.0) return INFINITY;
  return (1.0 + ratio) / (1.0 - ratio);
}

MareResult solve_mare_gamma(const Matrix& S, const Vector& one, double mu2, double muM,
                            std::optional<double> zetaOverride) {
  require_square(S, "S");
  const Eigen::Index n = S.rows();
  MareResult out;
  out.mahler = mahler_measure(sorted_eigenvalues(S));
  out.bound = mahler_bound(mu2, muM);
  if (!(out.mahler < out.bound))
    throw Error(ErrorCode::MahlerBoundViolated,
                "Mahler measure " + std::to_string(out.mahler) + " is not below " +
                    std::to_string(out.bound));
  if (zetaOverride) {
    double z = *zetaOverride;
    if (!(z > 0.0 && z < 1.0) || !(out.mahler < 1.0 / z) || !(1.0 / z <= out.bound))
      throw Error(ErrorCode::ZetaInfeasible,
                  "zeta " + std::to_string(z) + " needs Mahler < 1/zeta <= bound");
    out.zeta = z;
  } else {
    double inv = std::isfinite(out.bound) ? std::sqrt(out.mahler * out.bound) : 2.0 * out.mahler;
    out.zeta = std::min(1.0 / inv, 0.99);
  }
  const double z2 = out.zeta * out.zeta;
  Matrix P = Matrix::Identity(n, n);
  bool converged = false;
  for (int it = 0; it < 100000; ++it) {
    Vector Pone = P * one;
    double denom = one.dot(Pone);
    Vector SPone = S.transpose() * Pone;
    Matrix Pn = symmetrize(S.transpose() * P * S - (1.0 - z2) * SPone * SPone.transpose() / denom +
                           Matrix::Identity(n, n));
    if (!Pn.allFinite() || Pn.norm() > 1e14)
      throw Error(ErrorCode::MareDiverged, "modified Riccati iteration diverged");
    double change = (Pn - P).norm();
    P = Pn;
    out.iterations = it + 1;
    if (change <= 1e-10) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorCode::MareDiverged, "modified Riccati iteration hit the cap");
  Vector Pone = P * one;
  double denom = one.dot(Pone);
  Vector SPone = S.transpose() * Pone;
  Matrix lhs = P - S.transpose() * P * S + (1.0 - z2) * SPone * SPone.transpose() / denom;
  if (min_sym_eigenvalue(P) <= 0.0 || min_sym_eigenvalue(lhs) < 1e-10)
    throw Error(ErrorCode::MareDiverged, "modified Riccati inequality not strictly satisfied");
  out.P = P;
  out.gamma = (2.0 / (mu2 + muM)) * (one.transpose() * P * S) / denom;
  return out;
}

Decomposition build_decomposition(const LtiSystem& sys, const SensorNetwork& net,
                                  const DecompositionOptions& opt) {
  KalmanSolution kal = solve_steady_gain(sys, net);
  return build_decomposition(sys, net, kal.K, opt);
}

Decomposition build_decomposition(const LtiSystem& sys, const SensorNetwork& net,
                                  const Matrix& K, const DecompositionOptions& opt) {
  sys.validate();
  net.validate(sys.n());
  LaplacianSpectrum lap = build_laplacian(net.adjacency);
  if (!lap.connected) throw Error(ErrorCode::DisconnectedSensorGraph, "sensor graph is disconnected");

  Decomposition dec;
  dec.n = int(sys.n());
  dec.m = int(net.m());
  dec.K = K;
  dec.closedLoop = sys.A - K * net.C * sys.A;
  if (spectral_radius(dec.closedLoop) >= 1.0 - 1e-9)
    throw Error(ErrorCode::UnstableClosedLoop, "A - KCA is not stable");
  dec.laplacianEigenvalues = lap.eigenvalues;
  dec.lambdaMat = build_lambda(dec.closedLoop);

  BetaS bs = design_beta_S(dec.lambdaMat, unstable_eigenvalues(sys.A), opt.poles);
  dec.beta = bs.beta;
  dec.S = bs.S;
  dec.stablePoles = bs.stablePoles;
  dec.warnings = bs.warnings;

  const Vector one = Vector::Ones(dec.n);
  dec.F = solve_constrained_sylvester_batch(dec.lambdaMat, dec.closedLoop, one, K);
  for (int i = 0; i < dec.m; ++i) {
    const Matrix& Fi = dec.F[i];
    double res = std::max((Fi * dec.lambdaMat - dec.closedLoop * Fi).norm(),
                          (Fi * one - K.col(i)).norm());
    dec.maxSylvesterResidual = std::max(dec.maxSylvesterResidual, res / (1.0 + Fi.norm()));
  }

  RankFactor rf = rank_factorize(K, opt.rankTol);
  dec.Ktilde = rf.Ktilde;
  dec.V = rf.V;
  dec.r = int(rf.Ktilde.cols());

  if (dec.m == 1) {
    dec.gamma = RowVector::Zero(dec.n);
    dec.riccatiP = Matrix::Identity(dec.n, dec.n);
    dec.zeta = 0.5;
    dec.mahler = mahler_measure(sorted_eigenvalues(dec.S));
    dec.mahlerBound = INFINITY;
  } else {
    MareResult mr = solve_mare_gamma(dec.S, one, lap.mu2(), lap.muMax(), opt.zeta);
    dec.gamma = mr.gamma;
    dec.riccatiP = mr.P;
    dec.zeta = mr.zeta;
    dec.mahler = mr.mahler;
    dec.mahlerBound = mr.bound;
  }
  assemble_operator(dec);
  return dec;
}

void assemble_operator(Decomposition& dec) {
  const int n = dec.n, r = dec.r, m = dec.m;
  const Eigen::Index N = dec.stateDim();
  const Vector one = Vector::Ones(n);
  dec.H = Matrix::Zero(N, N);
  dec.H.topLeftCorner(n, n) = dec.closedLoop;
  for (int l = 0; l < r; ++l) {
    dec.H.block(0, n * (l + 1), n, n) = dec.Ktilde.col(l) * dec.beta.transpose();
    dec.H.block(n * (l + 1), n * (l + 1), n, n) = dec.S;
  }
  dec.L.resize(N, m);
  dec.L.topRows(n) = dec.K;
  dec.L.bottomRows(N - n) = kron(dec.V, one);
  dec.B = Matrix::Zero(N, r);
  dec.B.bottomRows(N - n) = kron(Matrix::Identity(r, r), one);
  dec.T = Matrix::Zero(r, N);
  dec.T.rightCols(N - n) = kron(Matrix::Identity(r, r), dec.gamma);

  // H − μBT is block upper triangular with diagonal blocks A−KCA and r copies of S − μ1Γ
  dec.syncSpectralRadii.clear();
  const double rhoF = spectral_radius(dec.closedLoop);
  for (int j = 1; j < m; ++j) {
    double mu = dec.laplacianEigenvalues(j);
    double rho = std::max(rhoF, spectral_radius(dec.S - mu * one * dec.gamma));
    dec.syncSpectralRadii.push_back(rho);
    if (!(rho < 1.0 - 1e-9))
      throw Error(ErrorCode::SyncSpectrumUnstable,
                  "rho(H - mu_" + std::to_string(j + 1) + " BT) = " + std::to_string(rho));
  }
}

void apply_H(const Decomposition& dec, const Vector& eta, Vector& out) {
  const int n = dec.n;
  out.resize(eta.size());
  out.head(n).noalias() = dec.closedLoop * eta.head(n);
  for (int l = 0; l < dec.r; ++l) {
    auto blk = eta.segment(n * (l + 1), n);
    out.head(n) += dec.Ktilde.col(l) * dec.beta.dot(blk);
    out.segment(n * (l + 1), n).noalias() = dec.S * blk;
  }
}

void apply_T(const Decomposition& dec, const Vector& eta, Vector& out) {
  out.resize(dec.r);
  for (int l = 0; l < dec.r; ++l) out(l) = dec.gamma.dot(eta.segment(dec.n * (l + 1), dec.n));
}

void add_B(const Decomposition& dec, const Vector& u, Vector& out) {
  for (int l = 0; l < dec.r; ++l) out.segment(dec.n * (l + 1), dec.n).array() += u(l);
}

LocalFilterStep local_filter_step(const Vector& xiHat, double yNext, const Vector& beta,
                                  const Matrix& S) {
  LocalFilterStep out;
  out.z = yNext - beta.dot(xiHat);
  out.xiHatNext = S * xiHat;
  out.xiHatNext.array() += out.z;
  return out;
}

Vector recover_estimate(const std::vector<Matrix>& F, const std::vector<Vector>& xiHats) {
  if (F.size() != xiHats.size() || F.empty())
    throw Error(ErrorCode::DimensionMismatch, "need one local state per F_i");
  Vector x = Vector::Zero(F.front().rows());
  for (size_t i = 0; i < F.size(); ++i) {
    if (xiHats[i].size() != F[i].cols())
      throw Error(ErrorCode::DimensionMismatch, "local state size differs from n");
    x += F[i] * xiHats[i];
  }
  return x;
}

}  // namespace etdkf
