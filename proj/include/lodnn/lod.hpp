#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lodnn/fem.hpp"
#include "lodnn/mesh.hpp"
#include "lodnn/sparse.hpp"

namespace lodnn {

/// Coefficient-independent data of one patch.
struct LocalOperators {
  Patch patch;
  PatchIndex index;
  ScatterMap scatter;
  SparseMatrix P_omega;
  SparseMatrix P_omega_K;
  SparseMatrix I_omega;
  /// Patch coarse nodes that are not on the domain boundary; the other rows
  /// of I_omega vanish and carry no constraint.
  std::vector<int> active_rows;
};

LocalOperators local_operators(const Patch& patch, const MeshHierarchy& mesh);

/// Solution of the constrained corrector problem
///   S Xi + I^T Phi = S P_{omega,K},  I Xi = 0
/// for the 2^d vertex hats of K. Phi has zero rows on boundary nodes.
struct CorrectorSolution {
  Eigen::MatrixXd Xi;   // n_ell x 2^d
  Eigen::MatrixXd Phi;  // N_ell x 2^d
  /// Max-norm residuals of both block equations.
  double residual_state = 0.0;
  double residual_constraint = 0.0;
};

CorrectorSolution solve_corrector(const LocalOperators& ops, const SparseMatrix& S);

/// Local Petrov-Galerkin matrix P^T I^T (I S^-1 I^T)^-1 I P_K (N_ell x 2^d).
Eigen::MatrixXd local_pg_matrix(const LocalOperators& ops, const SparseMatrix& S);

/// P^T S (P_K - Xi), the same matrix through the corrector.
Eigen::MatrixXd local_pg_matrix_from_corrector(const LocalOperators& ops, const SparseMatrix& S,
                                               const CorrectorSolution& corrector);

/// Element-by-element quadrature of a(Lambda_i, Lambda_j - Xi_j) on the patch,
/// with Lambda_i represented in the patch fine space.
Eigen::MatrixXd local_pg_matrix_bilinear(const LocalOperators& ops, const MeshHierarchy& mesh,
                                         std::span<const double> local_coefficient,
                                         const CorrectorSolution& corrector);

/// ceil(|log2 H|) + 1.
int default_ell(double H);

/// Local PG matrices of all coarse elements in element order.
std::vector<Eigen::MatrixXd> local_pg_matrices(const CoefficientField& coefficient, int ell, int workers);

/// Sums local matrices into the matrix on the free coarse nodes. Each vertex
/// hat is corrected once per adjacent element, hence the weight 2^-d.
SparseMatrix assemble_from_local(const MeshHierarchy& mesh, int ell,
                                 const std::vector<Eigen::MatrixXd>& local);

SparseMatrix assemble_pg_global(const CoefficientField& coefficient, int ell, int workers);

/// Fine nodal values of the corrected basis functions (fine free x coarse free).
Eigen::MatrixXd corrected_basis(const CoefficientField& coefficient, int ell, int workers);

/// Symmetric corrected-Galerkin matrix Phi^T S_h Phi.
Eigen::MatrixXd assemble_clod_global(const Eigen::MatrixXd& basis, const SparseMatrix& fine_stiffness);

/// Solves a coarse system; throws on a singular matrix.
std::vector<double> solve_coarse(const SparseMatrix& S, std::span<const double> f);
std::vector<double> solve_coarse(const Eigen::MatrixXd& S, std::span<const double> f);

/// Sparse Cholesky solve of the fine problem; refuses systems above `max_unknowns`.
std::vector<double> solve_fine_reference(const SparseMatrix& S_h, std::span<const double> f,
                                         int max_unknowns = 1000000);

/// sqrt(e^T M e).
double weighted_norm(const SparseMatrix& M, std::span<const double> e);

/// L2 distance between a fine function and a coarse function.
double l2_distance_fine_coarse(const MeshHierarchy& mesh, std::span<const double> u_fine,
                               std::span<const double> u_coarse);

}  // namespace lodnn
