#include "lodnn/lod.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/SparseCholesky>

#include "lodnn/parallel.hpp"

namespace lodnn {

namespace {

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = m.row(rows[r]);
  return out;
}

struct ReducedSolve {
  Eigen::MatrixXd Ir;     // active rows of I_omega
  Eigen::MatrixXd Z;      // S^-1 Ir^T
  Eigen::MatrixXd Phi_r;  // Y^-1 Ir P_K
};

ReducedSolve reduced_solve(const LocalOperators& ops, const SparseMatrix& S) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(S.to_eigen());
  if (chol.info() != Eigen::Success) throw std::runtime_error("patch stiffness factorization failed");
  ReducedSolve r;
  r.Ir = select_rows(ops.I_omega.to_dense(), ops.active_rows);
  r.Z = chol.solve(r.Ir.transpose().eval());
  Eigen::MatrixXd Y = r.Ir * r.Z;
  Y = 0.5 * (Y + Y.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> ychol(Y);
  if (ychol.info() != Eigen::Success) throw std::runtime_error("constraint Schur complement is not positive definite");
  r.Phi_r = ychol.solve(r.Ir * ops.P_omega_K.to_dense());
  return r;
}

}  // namespace

LocalOperators local_operators(const Patch& patch, const MeshHierarchy& mesh) {
  LocalOperators ops;
  ops.patch = patch;
  ops.index = local_indexers(patch, mesh);
  ops.scatter = scatter_map(patch, mesh);
  Prolongations p = prolongations(patch, mesh);
  ops.P_omega = std::move(p.P_omega);
  ops.P_omega_K = std::move(p.P_omega_K);
  ops.I_omega = quasi_interpolation(patch, mesh);
  int d = mesh.dim();
  for (std::size_t i = 0; i < ops.index.coarse_nodes.size(); ++i) {
    MultiIndex z = multi_index(ops.index.coarse_nodes[i], mesh.node_extent(Level::coarse), d);
    if (mesh.free_node_index(Level::coarse, z) >= 0) ops.active_rows.push_back(static_cast<int>(i));
  }
  return ops;
}

CorrectorSolution solve_corrector(const LocalOperators& ops, const SparseMatrix& S) {
  ReducedSolve r = reduced_solve(ops, S);
  Eigen::MatrixXd PK = ops.P_omega_K.to_dense();
  CorrectorSolution c;
  c.Xi = PK - r.Z * r.Phi_r;
  c.Phi = Eigen::MatrixXd::Zero(ops.I_omega.rows(), PK.cols());
  for (std::size_t k = 0; k < ops.active_rows.size(); ++k) c.Phi.row(ops.active_rows[k]) = r.Phi_r.row(k);
  Eigen::SparseMatrix<double> Se = S.to_eigen();
  Eigen::MatrixXd I = ops.I_omega.to_dense();
  c.residual_state = (Se * c.Xi + I.transpose() * c.Phi - Se * PK).cwiseAbs().maxCoeff();
  c.residual_constraint = (I * c.Xi).cwiseAbs().maxCoeff();
  return c;
}

Eigen::MatrixXd local_pg_matrix(const LocalOperators& ops, const SparseMatrix& S) {
  ReducedSolve r = reduced_solve(ops, S);
  return ops.P_omega.to_dense().transpose() * (r.Ir.transpose() * r.Phi_r);
}

Eigen::MatrixXd local_pg_matrix_from_corrector(const LocalOperators& ops, const SparseMatrix& S,
                                               const CorrectorSolution& corrector) {
  Eigen::MatrixXd phi = ops.P_omega_K.to_dense() - corrector.Xi;
  Eigen::MatrixXd Sphi = S.to_eigen() * phi;
  return ops.P_omega.to_dense().transpose() * Sphi;
}

Eigen::MatrixXd local_pg_matrix_bilinear(const LocalOperators& ops, const MeshHierarchy& mesh,
                                         std::span<const double> local_coefficient,
                                         const CorrectorSolution& corrector) {
  int d = mesh.dim();
  const Patch& p = ops.patch;
  Eigen::MatrixXd trial = ops.P_omega_K.to_dense() - corrector.Xi;
  Eigen::MatrixXd test = ops.P_omega.to_dense();
  Eigen::MatrixXd kref = q1_element_matrices(d, mesh.h()).stiffness;
  auto verts = vertex_offsets(d);
  int nv = static_cast<int>(verts.size());
  MultiIndex fext{1, 1, 1}, eps_ext{1, 1, 1};
  for (int a = 0; a < d; ++a) {
    fext[a] = p.fine.extent(a);
    eps_ext[a] = p.eps.extent(a);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(test.cols(), trial.cols());
  Eigen::MatrixXd u(nv, test.cols()), w(nv, trial.cols());
  int ne = product(fext, d);
  for (int e = 0; e < ne; ++e) {
    MultiIndex m = multi_index(e, fext, d);
    MultiIndex c{0, 0, 0};
    for (int a = 0; a < d; ++a) c[a] = m[a] / mesh.r_h();
    double coeff = local_coefficient[linear_index(c, eps_ext, d)];
    for (int v = 0; v < nv; ++v) {
      MultiIndex node{0, 0, 0};
      bool inner = true;
      for (int a = 0; a < d; ++a) {
        node[a] = m[a] + verts[v][a] - 1;
        if (node[a] < 0 || node[a] >= fext[a] - 1) inner = false;
      }
      if (inner) {
        int k = linear_index(node, ops.index.fine_inner_extent, d);
        u.row(v) = test.row(k);
        w.row(v) = trial.row(k);
      } else {
        u.row(v).setZero();
        w.row(v).setZero();
      }
    }
    out += coeff * u.transpose() * kref * w;
  }
  return out;
}

int default_ell(double H) {
  return static_cast<int>(std::ceil(std::abs(std::log2(H)))) + 1;
}

std::vector<Eigen::MatrixXd> local_pg_matrices(const CoefficientField& coefficient, int ell, int workers) {
  const MeshHierarchy& mesh = coefficient.mesh;
  return parallel_map(mesh.num_elements(Level::coarse), workers, [&](int K) {
    LocalOperators ops = local_operators(make_patch(mesh, K, ell), mesh);
    std::vector<double> a = coefficient.restrict_to(ops.index);
    return local_pg_matrix(ops, assemble_stiffness(ops.patch, mesh, a));
  });
}

SparseMatrix assemble_from_local(const MeshHierarchy& mesh, int ell,
                                 const std::vector<Eigen::MatrixXd>& local) {
  double weight = std::ldexp(1.0, -mesh.dim());
  std::vector<Triplet> trip;
  for (int K = 0; K < static_cast<int>(local.size()); ++K) {
    ScatterMap sm = scatter_map(make_patch(mesh, K, ell), mesh);
    const Eigen::MatrixXd& A = local[K];
    for (int j = 0; j < A.cols(); ++j) {
      int col = sm.element_free[j];
      if (col < 0) continue;
      for (int i = 0; i < A.rows(); ++i) {
        int row = sm.coarse_to_free[i];
        if (row >= 0 && A(i, j) != 0.0) trip.push_back({row, col, weight * A(i, j)});
      }
    }
  }
  int N = mesh.num_free_nodes(Level::coarse);
  return SparseMatrix::from_triplets(N, N, std::move(trip));
}

SparseMatrix assemble_pg_global(const CoefficientField& coefficient, int ell, int workers) {
  return assemble_from_local(coefficient.mesh, ell, local_pg_matrices(coefficient, ell, workers));
}

Eigen::MatrixXd corrected_basis(const CoefficientField& coefficient, int ell, int workers) {
  const MeshHierarchy& mesh = coefficient.mesh;
  int d = mesh.dim();
  struct Local {
    std::vector<int> fine;
    std::vector<int> cols;
    Eigen::MatrixXd Xi;
  };
  auto locals = parallel_map(mesh.num_elements(Level::coarse), workers, [&](int K) {
    LocalOperators ops = local_operators(make_patch(mesh, K, ell), mesh);
    std::vector<double> a = coefficient.restrict_to(ops.index);
    CorrectorSolution c = solve_corrector(ops, assemble_stiffness(ops.patch, mesh, a));
    Local l;
    for (int g : ops.index.fine_inner_nodes) {
      MultiIndex m = multi_index(g, mesh.node_extent(Level::fine), d);
      l.fine.push_back(mesh.free_node_index(Level::fine, m));
    }
    l.cols = ops.scatter.element_free;
    l.Xi = std::move(c.Xi);
    return l;
  });
  Eigen::MatrixXd basis = global_prolongation(mesh).to_dense();
  double weight = std::ldexp(1.0, -d);
  for (const Local& l : locals) {
    for (std::size_t j = 0; j < l.cols.size(); ++j) {
      if (l.cols[j] < 0) continue;
      for (std::size_t k = 0; k < l.fine.size(); ++k) basis(l.fine[k], l.cols[j]) -= weight * l.Xi(k, j);
    }
  }
  return basis;
}

Eigen::MatrixXd assemble_clod_global(const Eigen::MatrixXd& basis, const SparseMatrix& fine_stiffness) {
  Eigen::MatrixXd SB = fine_stiffness.to_eigen() * basis;
  Eigen::MatrixXd S = basis.transpose() * SB;
  return 0.5 * (S + S.transpose());
}

std::vector<double> solve_coarse(const Eigen::MatrixXd& S, std::span<const double> f) {
  if (S.rows() != S.cols() || S.rows() != static_cast<long>(f.size()))
    throw std::invalid_argument("coarse system dimension mismatch");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
  if (!lu.isInvertible()) throw std::runtime_error("singular coarse matrix");
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
  Eigen::VectorXd x = lu.solve(b);
  return {x.data(), x.data() + x.size()};
}

std::vector<double> solve_coarse(const SparseMatrix& S, std::span<const double> f) {
  return solve_coarse(S.to_dense(), f);
}

std::vector<double> solve_fine_reference(const SparseMatrix& S_h, std::span<const double> f, int max_unknowns) {
  if (S_h.rows() > max_unknowns)
    throw std::length_error("fine problem with " + std::to_string(S_h.rows()) + " unknowns exceeds the limit of " +
                            std::to_string(max_unknowns));
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(S_h.to_eigen());
  if (chol.info() != Eigen::Success) throw std::runtime_error("fine stiffness factorization failed");
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
  Eigen::VectorXd x = chol.solve(b);
  return {x.data(), x.data() + x.size()};
}

double weighted_norm(const SparseMatrix& M, std::span<const double> e) {
  std::vector<double> Me = M.multiply(e);
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * Me[i];
  return std::sqrt(std::max(0.0, s));
}

double l2_distance_fine_coarse(const MeshHierarchy& mesh, std::span<const double> u_fine,
                               std::span<const double> u_coarse) {
  std::vector<double> e = global_prolongation(mesh).multiply(u_coarse);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = u_fine[i] - e[i];
  return weighted_norm(assemble_mass(mesh, Level::fine), e);
}

}  // namespace lodnn
