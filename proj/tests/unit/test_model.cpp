#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "etdkf/linalg.hpp"
#include "etdkf/model.hpp"
#include "oracles.hpp"

using namespace etdkf;

TEST_CASE("4-cycle Laplacian spectrum is {0,2,2,4}") {
  LaplacianSpectrum s = build_laplacian(ring_adjacency(4));
  REQUIRE(s.eigenvalues.size() == 4);
  CHECK(s.eigenvalues(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.eigenvalues(1) == doctest::Approx(2.0));
  CHECK(s.eigenvalues(2) == doctest::Approx(2.0));
  CHECK(s.eigenvalues(3) == doctest::Approx(4.0));
  CHECK(s.connected);
  CHECK(s.laplacian.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("single node has spectrum {0}") {
  LaplacianSpectrum s = build_laplacian(Matrix::Zero(1, 1));
  REQUIRE(s.eigenvalues.size() == 1);
  CHECK(std::abs(s.eigenvalues(0)) <= 1e-12);
}

TEST_CASE("3-node path matches a direct eigensolve") {
  Matrix adj(3, 3);
  adj << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  Matrix L(3, 3);
  L << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  Eigen::SelfAdjointEigenSolver<Matrix> es(L);
  LaplacianSpectrum s = build_laplacian(adj);
  CHECK((s.eigenvalues - es.eigenvalues()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(s.eigenvalues(1) == doctest::Approx(1.0));
  CHECK(s.eigenvalues(2) == doctest::Approx(3.0));
}

TEST_CASE("bad adjacency is rejected") {
  Matrix asym(2, 2);
  asym << 0, 1, 0, 0;
  CHECK_THROWS_AS(build_laplacian(asym), Error);
  try {
    build_laplacian(asym);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSymmetric);
  }
  Matrix neg(2, 2);
  neg << 0, -1, -1, 0;
  try {
    build_laplacian(neg);
    FAIL("expected NegativeWeight");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NegativeWeight);
  }
}

TEST_CASE("disconnected graph is flagged, not thrown") {
  Matrix adj = Matrix::Zero(4, 4);
  adj(0, 1) = adj(1, 0) = 1;
  adj(2, 3) = adj(3, 2) = 1;
  LaplacianSpectrum s = build_laplacian(adj);
  CHECK_FALSE(s.connected);
  CHECK(s.components == 2);
}

TEST_CASE("near-zero eigenvalue count equals component count on random graphs") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + trial % 9;
    Matrix adj = Matrix::Zero(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j)
        if (u(g) < 0.25) adj(i, j) = adj(j, i) = 0.5 + u(g);
    LaplacianSpectrum s = build_laplacian(adj);
    int zeros = 0;
    for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) {
      CHECK(s.eigenvalues(i) >= -1e-9);
      if (s.eigenvalues(i) <= 1e-9) ++zeros;
    }
    CHECK(s.eigenvalues(0) <= 1e-9);
    CHECK(zeros == oracle::bfs_components(adj));
    CHECK(s.components == oracle::bfs_components(adj));
  }
}

TEST_CASE("spectral_split leaves block-diagonal input alone") {
  Matrix A = Eigen::Vector2d(1.1, 0.9).asDiagonal();
  SpectralSplit sp = spectral_split(A);
  CHECK(sp.nUnstable == 1);
  CHECK((sp.similarity - Matrix::Identity(2, 2)).norm() == 0.0);
  CHECK((sp.blockA - A).norm() == 0.0);
}

TEST_CASE("spectral_split decouples an upper-triangular example") {
  Matrix A(2, 2);
  A << 1.1, 1.0, 0.0, 0.5;
  SpectralSplit sp = spectral_split(A);
  CHECK(sp.nUnstable == 1);
  Matrix back = sp.similarity * A * sp.similarity.inverse();
  CHECK(std::abs(back(0, 1)) <= 1e-10);
  CHECK(std::abs(back(1, 0)) <= 1e-10);
  CHECK(back(0, 0) == doctest::Approx(1.1));
  CHECK(back(1, 1) == doctest::Approx(0.5));
  CHECK((sp.similarity.inverse() * sp.blockA * sp.similarity - A).norm() <= 1e-8 * A.norm());
}

TEST_CASE("spectral_split round trip on random matrices") {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 6;
    Matrix A = oracle::random_with_radius(g, n, 1.3);
    SpectralSplit sp = spectral_split(A);
    Matrix rebuilt = sp.similarity.inverse() * sp.blockA * sp.similarity;
    CHECK((rebuilt - A).norm() <= 1e-8 * A.norm());
    CHECK(multiset_distance(sorted_eigenvalues(A), sorted_eigenvalues(sp.blockA)) <= 1e-8);
    LtiSystem sys{sp.blockA, Matrix::Identity(n, n), Matrix::Identity(n, n), sp.nUnstable};
    CHECK_NOTHROW(sys.validate());
    CHECK(sp.nUnstable == unstable_eigenvalues(A).size());
  }
}

TEST_CASE("unit-modulus heat mode lands in the unstable block") {
  PlantAndNetwork pn = heat_grid_system(HeatGridParams{});
  SpectralSplit sp = spectral_split(pn.sys.A);
  CHECK(sp.nUnstable == 1);
  CHECK(sp.blockA(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("heat grid of side 1 is the scalar 1") {
  HeatGridParams p;
  p.gridSide = 1;
  p.sensorCells = {0};
  PlantAndNetwork pn = heat_grid_system(p);
  REQUIRE(pn.sys.A.rows() == 1);
  CHECK(pn.sys.A(0, 0) == 1.0);
}

TEST_CASE("5x5 heat grid spectrum") {
  PlantAndNetwork pn = heat_grid_system(HeatGridParams{});
  const Matrix& A = pn.sys.A;
  Vector one = Vector::Ones(25);
  CHECK((A * one - one).cwiseAbs().maxCoeff() <= 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(es.eigenvalues().minCoeff() >= 0.2 - 1e-12);
  CHECK(spectral_radius(A) == doctest::Approx(1.0).epsilon(1e-12));
  // the all-ones direction is the only unit eigenvalue
  CHECK(es.eigenvalues()(23) < 1.0 - 1e-3);
  CHECK(pn.sys.Q == Matrix::Identity(25, 25));
  CHECK(pn.net.R == Matrix::Identity(15, 15));
  CHECK(is_observable(A, pn.net.C));
  CHECK(build_laplacian(pn.net.adjacency).connected);
}

TEST_CASE("heat grid rejects a disconnected sensor graph and bad lambda") {
  HeatGridParams p;
  p.sensorCells = {0, 24};
  p.linkRadius = 1;
  try {
    heat_grid_system(p);
    FAIL("expected DisconnectedSensorGraph");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DisconnectedSensorGraph);
  }
  HeatGridParams q;
  q.lambda = 0.2;
  CHECK_THROWS_AS(heat_grid_system(q), Error);
}

TEST_CASE("system invariants are enforced") {
  LtiSystem sys;
  sys.A = Matrix::Identity(2, 2);
  sys.Q = Matrix::Identity(2, 2);
  sys.Q(0, 1) = 0.3;
  sys.x0Cov = Matrix::Identity(2, 2);
  try {
    sys.validate();
    FAIL("expected NotSymmetric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSymmetric);
  }
  PlantAndNetwork ex = example1_system();
  CHECK_NOTHROW(ex.sys.validate());
  CHECK_NOTHROW(ex.net.validate(2));
  ex.net.R(0, 0) = 0.0;
  CHECK_THROWS_AS(ex.net.validate(2), Error);
}
