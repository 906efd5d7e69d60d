#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace lodnn {

struct Triplet {
  int row;
  int col;
  double value;
};

/// Coordinate-format sparse matrix kept in canonical order (row, then
/// column) without duplicate entries.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(int rows, int cols) : rows_(rows), cols_(cols) {}

  /// Duplicates are summed in input order, so the result does not depend
  /// on anything but the order of `entries`.
  static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> entries);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<Triplet>& entries() const { return entries_; }

  Eigen::MatrixXd to_dense() const;
  Eigen::SparseMatrix<double> to_eigen() const;
  std::vector<double> multiply(std::span<const double> x) const;
  SparseMatrix transpose() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Triplet> entries_;
};

}  // namespace lodnn
