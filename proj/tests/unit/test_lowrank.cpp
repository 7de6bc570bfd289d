#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "etdkf/linalg.hpp"
#include "etdkf/lowrank.hpp"
#include "etdkf/rng.hpp"
#include "etdkf/simnet.hpp"
#include "oracles.hpp"

using namespace etdkf;

namespace {

struct Plant {
  LtiSystem sys;
  SensorNetwork net;
};

Plant random_plant(std::mt19937_64& g, int n, int m, double rho) {
  Plant p;
  p.sys.A = oracle::random_with_radius(g, n, rho);
  p.sys.Q = oracle::random_spd(g, n);
  p.sys.x0Cov = Matrix::Identity(n, n);
  p.net.C = oracle::random_matrix(g, m, n);
  p.net.R = oracle::random_spd(g, m, 0.5);
  p.net.adjacency = ring_adjacency(m);
  return p;
}

/// Random point strictly inside {0 ≤ X ≤ I, tr X = r}.
Matrix random_feasible(std::mt19937_64& g, int m, double r) {
  Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(g, m, m));
  Matrix U = qr.householderQ();
  std::uniform_real_distribution<double> u(0.1, 0.9);
  Vector d(m);
  for (int i = 0; i < m; ++i) d(i) = u(g);
  d = project_capped_simplex(d, r);
  d = 0.9 * d + 0.1 * Vector::Constant(m, r / m);
  return U * d.asDiagonal() * U.transpose();
}

Matrix random_sym(std::mt19937_64& g, int m) {
  Matrix D = oracle::random_matrix(g, m, m);
  return 0.5 * (D + D.transpose());
}

double ip(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

}  // namespace

TEST_CASE("gradient agrees with central finite differences") {
  std::mt19937_64 g(31);
  int probes = 0;
  for (int sys = 0; sys < 5; ++sys) {
    Plant p = random_plant(g, 2 + sys % 3, 3 + sys % 2, 0.9 + 0.05 * sys);
    const int m = int(p.net.m());
    Matrix Cbar = sym_inv_sqrt(p.net.R) * p.net.C;
    for (int k = 0; k < 10; ++k) {
      Matrix X = random_feasible(g, m, 1.0 + k % (m - 1));
      Matrix D = random_sym(g, m);
      D /= D.norm();
      const double h = 1e-6;
      ObjectiveValue v = relaxation_objective_grad(p.sys, Cbar, X);
      double fp = relaxation_objective_grad(p.sys, Cbar, X + h * D, false).f;
      double fm = relaxation_objective_grad(p.sys, Cbar, X - h * D, false).f;
      double fd = (fp - fm) / (2 * h);
      double an = ip(v.grad, D);
      CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(an), 1e-3 * v.grad.norm()));
      CHECK((v.grad - v.grad.transpose()).norm() == 0.0);
      ++probes;
    }
  }
  CHECK(probes == 50);
}

TEST_CASE("objective is convex along random chords") {
  std::mt19937_64 g(12);
  Plant p = random_plant(g, 3, 4, 1.05);
  Matrix Cbar = sym_inv_sqrt(p.net.R) * p.net.C;
  for (int t = 0; t < 100; ++t) {
    Matrix X1 = random_feasible(g, 4, 2), X2 = random_feasible(g, 4, 2);
    double f1 = relaxation_objective_grad(p.sys, Cbar, X1, false).f;
    double f2 = relaxation_objective_grad(p.sys, Cbar, X2, false).f;
    double fm = relaxation_objective_grad(p.sys, Cbar, 0.5 * (X1 + X2), false).f;
    CHECK(fm <= 0.5 * (f1 + f2) + 1e-8);
  }
}

TEST_CASE("objective special cases") {
  PlantAndNetwork ex = example1_system();
  ex.net.R = Matrix::Identity(4, 4);
  ObjectiveValue full = relaxation_objective_grad(ex.sys, ex.net.C, Matrix::Identity(4, 4));
  CHECK(full.f == doctest::Approx(solve_steady_gain(ex.sys, ex.net).P.trace()).epsilon(1e-10));

  try {
    relaxation_objective_grad(ex.sys, ex.net.C, Matrix::Zero(4, 4));
    FAIL("expected Divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Divergence);
  }

  std::mt19937_64 g(7);
  Plant p = random_plant(g, 3, 2, 0.7);
  double f0 = relaxation_objective_grad(p.sys, p.net.C, Matrix::Zero(2, 2), false).f;
  CHECK(f0 == doctest::Approx(oracle::lyapunov_series(p.sys.A, p.sys.Q, 1000).trace()).epsilon(1e-10));
}

TEST_CASE("capped simplex projection matches the breakpoint sweep") {
  std::mt19937_64 g(44);
  std::normal_distribution<double> nd(0.5, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int m = 2 + t % 12;
    Vector v(m);
    for (int i = 0; i < m; ++i) v(i) = nd(g);
    const double r = 1 + t % (m - 1) + (t % 3 == 0 ? 0.5 : 0.0);
    if (r > m) continue;
    Vector x = project_capped_simplex(v, r);
    Vector ref = oracle::sorted_capped_simplex(v, r);
    CHECK(x.minCoeff() >= 0.0);
    CHECK(x.maxCoeff() <= 1.0);
    CHECK(std::abs(x.sum() - r) <= 1e-10);
    CHECK((x - ref).norm() <= 1e-9);
  }
  CHECK_THROWS_AS(project_capped_simplex(Vector::Zero(3), 4.0), Error);
}

TEST_CASE("spectahedron projection lands in the feasible set") {
  std::mt19937_64 g(45);
  for (int t = 0; t < 30; ++t) {
    const int m = 3 + t % 5;
    Matrix X = project_spectahedron(3.0 * random_sym(g, m), 2.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(X);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
    CHECK(X.trace() == doctest::Approx(2.0).epsilon(1e-10));
  }
}

TEST_CASE("relaxation at full rank is the identity") {
  PlantAndNetwork ex = example1_system();
  RelaxationResult r = solve_relaxation(ex.sys, ex.net, 4);
  CHECK((r.Xstar - Matrix::Identity(4, 4)).norm() == 0.0);
  CHECK_THROWS_AS(solve_relaxation(ex.sys, ex.net, 0), Error);
  CHECK_THROWS_AS(solve_relaxation(ex.sys, ex.net, 5), Error);
}

TEST_CASE("relaxation output satisfies the constraints and descends") {
  PlantAndNetwork ex = example1_system();
  for (int rt = 1; rt <= 3; ++rt) {
    RelaxationResult r = solve_relaxation(ex.sys, ex.net, rt);
    const Matrix& X = r.Xstar;
    CHECK((X - X.transpose()).norm() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(X);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
    CHECK(std::abs(X.trace() - rt) <= 1e-6);
    for (size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1]);
  }
}

TEST_CASE("heat starting point is feasible with a finite objective") {
  PlantAndNetwork pn = heat_grid_system(HeatGridParams{});
  Matrix Cbar = sym_inv_sqrt(pn.net.R) * pn.net.C;
  ObjectiveValue v = relaxation_objective_grad(pn.sys, Cbar, (1.0 / 15.0) * Matrix::Identity(15, 15));
  CHECK(std::isfinite(v.f));
}

TEST_CASE("rounding examples") {
  Matrix Xs = Eigen::Vector3d(0.9, 0.6, 0.5).asDiagonal();
  Rounding r = round_and_recover(Xs, Matrix::Identity(3, 3), 1);
  Matrix want = Eigen::Vector3d(1, 0, 0).asDiagonal();
  CHECK((r.X0 - want).norm() <= 1e-12);
  REQUIRE(r.W.rows() == 1);
  CHECK((r.W - RowVector::Unit(3, 0)).norm() <= 1e-12);

  std::mt19937_64 g(3);
  Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(g, 4, 4));
  Matrix U = Matrix(qr.householderQ()).leftCols(2);
  Matrix proj = U * U.transpose();
  Rounding id = round_and_recover(proj, Matrix::Identity(4, 4), 2);
  CHECK((id.X0 - proj).norm() <= 1e-10);
}

TEST_CASE("rounding reconstruction identity and degenerate warning") {
  std::mt19937_64 g(19);
  for (int t = 0; t < 20; ++t) {
    const int m = 3 + t % 4, rt = 1 + t % (m - 1);
    Matrix Xs = random_feasible(g, m, rt);
    Matrix R = oracle::random_spd(g, m, 0.3);
    Rounding r = round_and_recover(Xs, R, rt);
    CHECK((r.X0 * r.X0 - r.X0).norm() <= 1e-8);
    CHECK(std::abs(r.X0.trace() - rt) <= 1e-8);
    Matrix Rh = sym_sqrt(R);
    Matrix rec = Rh * r.W.transpose() * (r.W * R * r.W.transpose()).inverse() * r.W * Rh;
    CHECK((rec - r.X0).norm() <= 1e-8);
  }
  Rounding d = round_and_recover(0.5 * Matrix::Identity(4, 4), Matrix::Identity(4, 4), 2);
  CHECK_FALSE(d.warnings.empty());
}

TEST_CASE("full-rank virtual network reproduces the Kalman gain") {
  PlantAndNetwork pn = heat_grid_system(HeatGridParams{});
  VirtualGain vg = design_gain(pn.sys, pn.net, Matrix::Identity(15, 15));
  KalmanSolution ks = solve_steady_gain(pn.sys, pn.net);
  CHECK((vg.Krt - ks.K).norm() <= 1e-7);
  CHECK(vg.Ptilde.trace() / ks.P.trace() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single-sensor virtual network on Example 1") {
  PlantAndNetwork ex = example1_system();
  // sensor 3 sees x1 + x2, which detects the unstable mode
  RowVector W = RowVector::Unit(4, 2);
  VirtualGain vg = design_gain(ex.sys, ex.net, W);
  Matrix c3 = ex.net.C.row(2);
  KalmanSolution single = solve_steady_gain(ex.sys.A, ex.sys.Q, c3, ex.net.R.block(2, 2, 1, 1),
                                            ex.sys.x0Cov);
  Matrix padded = Matrix::Zero(2, 4);
  padded.col(2) = single.K.col(0);
  CHECK((vg.Krt - padded).norm() <= 1e-7);
  CHECK(numerical_rank(vg.Krt, 1e-9) == 1);

  // sensor 1 sees x1 only, which leaves the 1.1 mode undetectable
  try {
    design_gain(ex.sys, ex.net, RowVector::Unit(4, 0));
    FAIL("expected VirtualNotDetectable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VirtualNotDetectable);
  }
}

TEST_CASE("rank-factored cost identity holds for random W on random stable systems") {
  std::mt19937_64 g(23);
  for (int t = 0; t < 20; ++t) {
    Plant p = random_plant(g, 3, 4, 0.9);
    Matrix W = oracle::random_matrix(g, 1 + t % 3, 4);
    VirtualGain vg = design_gain(p.sys, p.net, W);
    Matrix P = luenberger_error_cov(p.sys, p.net, vg.Krt);
    CHECK((P - vg.Ptilde).norm() <= 1e-7 * (1 + P.norm()));
    CHECK(vg.costIdentityResidual <= 1e-7 * (1 + P.norm()));
  }
}

TEST_CASE("design invariants and table ordering on a small system") {
  std::mt19937_64 g(29);
  Plant p = random_plant(g, 3, 4, 1.05);
  std::vector<LowRankDesign> designs;
  auto table = performance_table(p.sys, p.net, {4, 1, 3, 2}, &designs);
  REQUIRE(table.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(table[i].first == i + 1);
  for (int i = 1; i < 4; ++i) CHECK(table[i].second <= table[i - 1].second + 1e-6);
  CHECK(std::abs(table[3].second - 1.0) <= 1e-6);
  Matrix Cbar = sym_inv_sqrt(p.net.R) * p.net.C;
  for (const LowRankDesign& d : designs) {
    CHECK(d.Jrt >= 1.0 - 1e-9);
    CHECK(numerical_rank(d.Krt, 1e-9) <= d.rTilde);
    CHECK(std::abs(d.X0.trace() - d.rTilde) <= 1e-8);
    // the relaxation objective bounds the rounded one from below
    CHECK(d.relaxedObjective <= d.Ptilde.trace() + 1e-9);
    auto [l1, l2] = lmi_min_eigenvalues(p.sys, Cbar, d.Xstar,
                                        relaxation_objective_grad(p.sys, Cbar, d.Xstar, false).Ptilde);
    CHECK(l1 >= -1e-8);
    CHECK(l2 >= -1e-8);
  }
  CHECK_THROWS_AS(performance_table(p.sys, p.net, {0}), Error);
}

TEST_CASE("rounded rank-1 design is near the random-projection brute force") {
  std::mt19937_64 g(37);
  for (int sys = 0; sys < 3; ++sys) {
    Plant p = random_plant(g, 2, 3, 0.95);
    LowRankDesign d = design_low_rank(p.sys, p.net, 1);
    Matrix Cbar = sym_inv_sqrt(p.net.R) * p.net.C;
    double best = INFINITY;
    std::normal_distribution<double> nd;
    for (int s = 0; s < 3 + 2000; ++s) {
      Vector v = Vector::Zero(3);
      if (s < 3)
        v(s) = 1.0;
      else
        for (int i = 0; i < 3; ++i) v(i) = nd(g);
      v.normalize();
      Matrix c = v.transpose() * Cbar;
      Matrix P = oracle::covariance_recursion(p.sys.A, c, p.sys.Q, Matrix::Identity(1, 1),
                                              Matrix::Identity(2, 2), 400);
      best = std::min(best, P.trace());
    }
    CHECK(d.Ptilde.trace() <= 1.02 * best);
  }
}

TEST_CASE("simulator with a low-rank gain keeps the exact average of the observer") {
  PlantAndNetwork ex = example1_system();
  LowRankDesign d = design_low_rank(ex.sys, ex.net, 1);
  DecompositionOptions opt;
  opt.zeta = 0.5;
  Scenario sc;
  sc.sys = ex.sys;
  sc.net = ex.net;
  sc.dec = build_decomposition(ex.sys, ex.net, d.Krt, opt);
  sc.trigger = StaticTime{5, 5, 0.8};
  sc.horizon = 150;
  CHECK(sc.dec.r == 1);
  for (int run = 0; run < 3; ++run) {
    SimTrace tr = simulate_run(sc, run_seed(4, run));
    for (int k = 0; k < sc.horizon; ++k) CHECK(tr.avgGap[k] <= 1e-6 * (1.0 + tr.xhatNorm[k]));
  }
}

TEST_CASE("refinement never loses to the eigenvector rounding") {
  std::mt19937_64 g(53);
  for (int t = 0; t < 10; ++t) {
    Plant p = random_plant(g, 2 + t % 2, 4, 0.9);
    const int rt = 1 + t % 3;
    LowRankDesign d = design_low_rank(p.sys, p.net, rt);
    CHECK(d.Jrt <= d.eigenRoundedJ * (1 + 1e-9));
    CHECK((d.X0 * d.X0 - d.X0).norm() <= 1e-8);
    CHECK(std::abs(d.X0.trace() - rt) <= 1e-8);
    Matrix Cbar = sym_inv_sqrt(p.net.R) * p.net.C;
    Rounding eig = round_and_recover(d.Xstar, p.net.R, rt);
    double fe = relaxation_objective_grad(p.sys, Cbar, eig.X0, false).f;
    double fr = relaxation_objective_grad(p.sys, Cbar, d.X0, false).f;
    CHECK(fr <= fe + 1e-12);
    CHECK(fr == doctest::Approx(d.Ptilde.trace()).epsilon(1e-9));
  }
}

TEST_CASE("heat rank-1 design sits between the relaxation bound and the brute force") {
  PlantAndNetwork pn = heat_grid_system(HeatGridParams{});
  LowRankDesign d = design_low_rank(pn.sys, pn.net, 1);
  const double trP = solve_steady_gain(pn.sys, pn.net).P.trace();
  Matrix Cbar = sym_inv_sqrt(pn.net.R) * pn.net.C;
  std::mt19937_64 g(61);
  std::normal_distribution<double> nd;
  double best = INFINITY;
  for (int s = 0; s < 15 + 1000; ++s) {
    Vector v = Vector::Zero(15);
    if (s < 15)
      v(s) = 1.0;
    else
      for (int i = 0; i < 15; ++i) v(i) = nd(g);
    v.normalize();
    best = std::min(best, relaxation_objective_grad(pn.sys, Cbar, v * v.transpose(), false).f);
  }
  CHECK(d.Jrt >= d.relaxedObjective / trP - 1e-9);
  CHECK(d.Jrt <= 1.02 * best / trP);
}
