#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "lodnn/lod.hpp"

using namespace lodnn;

namespace {

int interior_element(const MeshHierarchy& m, int ell) {
  MultiIndex K{ell + 1, ell + 1, ell + 1};
  return linear_index(K, m.element_extent(Level::coarse), m.dim());
}

double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

/// Full saddle-point system factorized densely.
Eigen::MatrixXd dense_kkt_corrector(const LocalOperators& ops, const SparseMatrix& S) {
  Eigen::MatrixXd Sd = S.to_dense();
  Eigen::MatrixXd I = ops.I_omega.to_dense();
  Eigen::MatrixXd Ir(ops.active_rows.size(), I.cols());
  for (std::size_t r = 0; r < ops.active_rows.size(); ++r) Ir.row(r) = I.row(ops.active_rows[r]);
  int n = static_cast<int>(Sd.rows()), k = static_cast<int>(Ir.rows());
  Eigen::MatrixXd KKT = Eigen::MatrixXd::Zero(n + k, n + k);
  KKT.topLeftCorner(n, n) = Sd;
  KKT.topRightCorner(n, k) = Ir.transpose();
  KKT.bottomLeftCorner(k, n) = Ir;
  Eigen::MatrixXd PK = ops.P_omega_K.to_dense();
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + k, PK.cols());
  rhs.topRows(n) = Sd * PK;
  Eigen::MatrixXd sol = KKT.fullPivLu().solve(rhs);
  return sol.topRows(n);
}

struct Case {
  int d, nH, r_eps, r_h, ell;
};

}  // namespace

TEST_CASE("corrector satisfies both block equations and matches the dense KKT solve") {
  for (Case c : {Case{1, 8, 2, 2, 2}, Case{2, 5, 1, 2, 1}}) {
    MeshHierarchy m(c.d, c.nH, c.r_eps, c.r_h);
    for (int seed = 0; seed < 20; ++seed) {
      CoefficientField A = random_coefficient(m, 1.0, 10.0, 100 + seed);
      for (int K : {interior_element(m, c.ell), 0}) {
        LocalOperators ops = local_operators(make_patch(m, K, c.ell), m);
        SparseMatrix S = assemble_stiffness(ops.patch, m, A.restrict_to(ops.index));
        CorrectorSolution sol = solve_corrector(ops, S);
        double scale = (S.to_eigen() * ops.P_omega_K.to_dense()).cwiseAbs().maxCoeff();
        CHECK(sol.residual_constraint <= 1e-10);
        CHECK(sol.residual_state <= 1e-10 * scale);
        if (seed < 3) CHECK(rel_diff(sol.Xi, dense_kkt_corrector(ops, S)) <= 1e-8);
      }
    }
  }
}

TEST_CASE("closed form, corrector form and bilinear form of the local matrix agree") {
  for (Case c : {Case{1, 8, 2, 2, 2}, Case{2, 5, 1, 2, 1}, Case{2, 4, 2, 2, 1}}) {
    MeshHierarchy m(c.d, c.nH, c.r_eps, c.r_h);
    for (int seed = 0; seed < 5; ++seed) {
      CoefficientField A = random_coefficient(m, 1.0, 10.0, 7 + seed);
      for (int K = 0; K < m.num_elements(Level::coarse); K += 3) {
        LocalOperators ops = local_operators(make_patch(m, K, c.ell), m);
        std::vector<double> a = A.restrict_to(ops.index);
        SparseMatrix S = assemble_stiffness(ops.patch, m, a);
        CorrectorSolution sol = solve_corrector(ops, S);
        Eigen::MatrixXd closed = local_pg_matrix(ops, S);
        Eigen::MatrixXd via = local_pg_matrix_from_corrector(ops, S, sol);
        Eigen::MatrixXd bil = local_pg_matrix_bilinear(ops, m, a, sol);
        CHECK(rel_diff(via, closed) <= 1e-8);
        CHECK(rel_diff(bil, closed) <= 1e-8);
        CHECK(rel_diff(bil, via) <= 1e-8);
      }
    }
  }
}

TEST_CASE("local matrix scales linearly with the coefficient") {
  MeshHierarchy m(2, 5, 1, 2);
  CoefficientField A = random_coefficient(m, 1.0, 10.0, 1);
  LocalOperators ops = local_operators(make_patch(m, interior_element(m, 1), 1), m);
  std::vector<double> a = A.restrict_to(ops.index), a3 = a;
  for (double& x : a3) x *= 3.0;
  Eigen::MatrixXd S1 = local_pg_matrix(ops, assemble_stiffness(ops.patch, m, a));
  Eigen::MatrixXd S3 = local_pg_matrix(ops, assemble_stiffness(ops.patch, m, a3));
  CHECK(rel_diff(S3, 3.0 * S1) <= 1e-12);
}

TEST_CASE("patches covering the domain make PG and C-LOD coincide") {
  for (Case c : {Case{1, 6, 2, 2, 6}, Case{2, 4, 1, 2, 4}}) {
    MeshHierarchy m(c.d, c.nH, c.r_eps, c.r_h);
    CoefficientField A = random_coefficient(m, 1.0, 10.0, 5);
    Eigen::MatrixXd pg = assemble_pg_global(A, c.ell, 1).to_dense();
    Eigen::MatrixXd basis = corrected_basis(A, c.ell, 1);
    SparseMatrix Sh = assemble_global_stiffness(A);
    Eigen::MatrixXd clod = assemble_clod_global(basis, Sh);
    CHECK((pg - clod).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((pg - pg.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
    // PG matrix is a(Lambda_i, phi_j) of the assembled corrected basis
    Eigen::MatrixXd P = global_prolongation(m).to_dense();
    Eigen::MatrixXd direct = P.transpose() * (Sh.to_eigen() * basis);
    CHECK((pg - direct).cwiseAbs().maxCoeff() <= 1e-8);
    // the corrected basis reproduces constants in the energy pairing: rows of
    // nodes away from the boundary vanish against the sum of all basis functions
    Eigen::VectorXd rowsum = pg * Eigen::VectorXd::Ones(pg.cols());
    Eigen::VectorXd oracle = P.transpose() * (Sh.to_eigen() * (basis * Eigen::VectorXd::Ones(basis.cols())));
    CHECK((rowsum - oracle).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("global PG matrix has the patch bandwidth") {
  MeshHierarchy m(1, 12, 1, 2);
  CoefficientField A = random_coefficient(m, 1.0, 10.0, 9);
  for (int ell : {1, 2, 3}) {
    SparseMatrix S = assemble_pg_global(A, ell, 2);
    for (const Triplet& t : S.entries()) CHECK(std::abs(t.row - t.col) <= ell + 1);
  }
}

TEST_CASE("C-LOD matrix is symmetric positive definite with minimal eigenvalue of order H^d") {
  std::vector<double> ratios;
  for (int nH : {4, 8, 16, 32}) {
    MeshHierarchy m(1, nH, 64 / nH, 2);
    CoefficientField A = random_coefficient(m, 1.0, 10.0, 3);
    int ell = default_ell(m.H());
    Eigen::MatrixXd basis = corrected_basis(A, ell, 1);
    Eigen::MatrixXd Sc = assemble_clod_global(basis, assemble_global_stiffness(A));
    CHECK((Sc - Sc.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * Sc.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sc);
    CHECK(es.eigenvalues().minCoeff() > 0);
    ratios.push_back(es.eigenvalues().minCoeff() / m.H());
  }
  double lo = *std::min_element(ratios.begin(), ratios.end());
  double hi = *std::max_element(ratios.begin(), ratios.end());
  CHECK(hi / lo < 4.0);
}

TEST_CASE("default patch size rule") {
  CHECK(default_ell(0.25) == 3);
  CHECK(default_ell(0.125) == 4);
  CHECK(default_ell(1.0 / 16) == 5);
  CHECK(default_ell(1.0 / 32) == 6);
}

TEST_CASE("coarse solves") {
  MeshHierarchy m(1, 8, 2, 2);
  CoefficientField A = random_coefficient(m, 1.0, 10.0, 4);
  Eigen::MatrixXd Sc = assemble_clod_global(corrected_basis(A, 2, 1), assemble_global_stiffness(A));
  std::vector<double> zero(Sc.rows(), 0.0);
  for (double v : solve_coarse(Sc, zero)) CHECK(v == 0.0);
  std::vector<double> f = load_vector([](const Point& x) { return 1.0 + x[0]; }, Level::coarse, m);
  std::vector<double> u = solve_coarse(Sc, f);
  Eigen::VectorXd oracle = Sc.llt().solve(Eigen::Map<Eigen::VectorXd>(f.data(), f.size()));
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(u[i] - oracle(i)) <= 1e-10 * oracle.cwiseAbs().maxCoeff());
  CHECK_THROWS(solve_coarse(Eigen::MatrixXd::Zero(3, 3), std::vector<double>(3, 1.0)));
}

TEST_CASE("C-LOD and PG-LOD solutions approach each other exponentially in ell") {
  MeshHierarchy m(1, 16, 2, 2);
  CoefficientField A = random_coefficient(m, 1.0, 10.0, 8);
  std::vector<double> f = load_vector([](const Point&) { return 1.0; }, Level::coarse, m);
  SparseMatrix Mc = assemble_mass(m, Level::coarse);
  SparseMatrix Sh = assemble_global_stiffness(A);
  std::vector<double> diffs;
  // small ell is pre-asymptotic; the decay sets in once the patch exceeds a few layers
  for (int ell = 3; ell <= 7; ++ell) {
    auto upg = solve_coarse(assemble_pg_global(A, ell, 1), f);
    auto uc = solve_coarse(assemble_clod_global(corrected_basis(A, ell, 1), Sh), f);
    std::vector<double> e(upg.size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = upg[i] - uc[i];
    diffs.push_back(weighted_norm(Mc, e));
  }
  for (std::size_t k = 1; k < diffs.size(); ++k) CHECK(diffs[k] < diffs[k - 1]);
  CHECK(diffs.back() < 1e-3 * diffs.front());
}

TEST_CASE("fine reference solve") {
  MeshHierarchy m(1, 4, 2, 4);
  CoefficientField A = constant_coefficient(m, 1.0);
  SparseMatrix Sh = assemble_global_stiffness(A);
  std::vector<double> f = load_vector([](const Point&) { return 1.0; }, Level::fine, m);
  std::vector<double> u = solve_fine_reference(Sh, f);
  auto x = free_node_coordinates(m, Level::fine);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(std::abs(u[i] - x[i][0] * (1 - x[i][0]) / 2) <= m.h() * m.h());

  MeshHierarchy m2(2, 4, 2, 2);
  CoefficientField B = random_coefficient(m2, 1.0, 10.0, 2);
  SparseMatrix S2 = assemble_global_stiffness(B);
  std::vector<double> f2 = load_vector([](const Point& p) { return std::sin(3 * p[0]) + p[1]; }, Level::fine, m2);
  std::vector<double> u2 = solve_fine_reference(S2, f2);
  std::vector<double> Su = S2.multiply(u2);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  double fn = 0, energy = 0, fu = 0;
  for (std::size_t i = 0; i < f2.size(); ++i) {
    fn = std::max(fn, std::abs(f2[i]));
    energy += u2[i] * Su[i];
    fu += f2[i] * u2[i];
  }
  for (int t = 0; t < 5; ++t) {
    double r = 0;
    for (std::size_t i = 0; i < f2.size(); ++i) r += nd(gen) * (Su[i] - f2[i]);
    CHECK(std::abs(r) <= 1e-10 * fn * f2.size());
  }
  CHECK(energy == doctest::Approx(fu).epsilon(1e-12));
  CHECK_THROWS(solve_fine_reference(S2, f2, 10));
}
