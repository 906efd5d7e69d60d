#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lodnn/mesh.hpp"
#include "lodnn/sparse.hpp"

namespace lodnn {

using Point = std::array<double, 3>;
using ScalarFunction = std::function<double(const Point&)>;

/// Piecewise constant coefficient on the eps mesh with values in [alpha, beta].
struct CoefficientField {
  MeshHierarchy mesh;
  std::vector<double> values;
  double alpha = 1.0;
  double beta = 1.0;

  /// Throws if the length or a value range is wrong.
  void validate() const;
  std::vector<double> restrict_to(const PatchIndex& index) const;
  double at_fine_element(const MultiIndex& fine_element) const;
};

CoefficientField constant_coefficient(const MeshHierarchy& mesh, double value);
/// Independent uniform values in [alpha, beta] drawn per eps cell; the
/// value of a cell depends only on the seed and the cell's global index.
CoefficientField random_coefficient(const MeshHierarchy& mesh, double alpha, double beta,
                                    std::uint64_t seed);

/// Text format: header line `d nH r_eps r_h alpha beta`, then one value per
/// eps cell in lexicographic order.
CoefficientField load_coefficient_file(const std::string& path);
void save_coefficient_file(const CoefficientField& field, const std::string& path);

/// Q1 stiffness (unit coefficient) and mass matrix of a cube of side h,
/// vertices in lexicographic order, computed with 2^d-point Gauss quadrature.
struct ElementMatrices {
  Eigen::MatrixXd stiffness;
  Eigen::MatrixXd mass;
};
ElementMatrices q1_element_matrices(int d, double h);

/// Linear map from patch coefficient values to vec(S): column j holds the
/// Dirichlet stiffness contribution of coefficient cell j with unit value.
/// Row index of entry (k, l) is k + l * n_ell (column-major vec).
SparseMatrix coefficient_to_stiffness_map(const Patch& patch, const MeshHierarchy& mesh);

/// Patch stiffness with homogeneous Dirichlet conditions on the patch boundary.
SparseMatrix assemble_stiffness(const Patch& patch, const MeshHierarchy& mesh,
                                std::span<const double> local_coefficient);

/// mat(U a), the reshaped product of the coefficient-to-stiffness map.
SparseMatrix stiffness_from_map(const SparseMatrix& U, std::span<const double> local_coefficient);

/// Fine stiffness on the free nodes of the unit cube.
SparseMatrix assemble_global_stiffness(const CoefficientField& coefficient);

/// Fine stiffness for a general coefficient function evaluated at 3^d Gauss
/// points per element.
SparseMatrix assemble_global_stiffness(const MeshHierarchy& mesh, const ScalarFunction& a);

/// Q1 mass matrix on the free nodes of the given level.
SparseMatrix assemble_mass(const MeshHierarchy& mesh, Level level);

/// P_omega maps patch coarse nodal values to fine inner nodal values;
/// P_omega_K keeps the columns of the 2^d vertices of K.
struct Prolongations {
  SparseMatrix P_omega;
  SparseMatrix P_omega_K;
};
Prolongations prolongations(const Patch& patch, const MeshHierarchy& mesh);

/// Coarse free nodes to fine free nodes on the unit cube.
SparseMatrix global_prolongation(const MeshHierarchy& mesh);

/// Quasi-interpolation I_omega = E_H o Pi_H restricted to the patch: local
/// L2 projection onto Q1 on every coarse element followed by nodal averaging
/// with the global element count. Rows of nodes on the domain boundary are zero.
SparseMatrix quasi_interpolation(const Patch& patch, const MeshHierarchy& mesh);

/// Load vector on the free nodes of a level, 3^d Gauss points per element.
std::vector<double> load_vector(const ScalarFunction& f, Level level, const MeshHierarchy& mesh);

/// Node coordinates of the free nodes of a level.
std::vector<Point> free_node_coordinates(const MeshHierarchy& mesh, Level level);

}  // namespace lodnn
