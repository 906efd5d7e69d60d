#include "lodnn/sparse.hpp"

#include <algorithm>
#include <stdexcept>

namespace lodnn {

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::vector<Triplet> entries) {
  for (const Triplet& t : entries) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw std::out_of_range("triplet index outside matrix shape");
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m(rows, cols);
  m.entries_.reserve(entries.size());
  for (const Triplet& t : entries) {
    if (!m.entries_.empty() && m.entries_.back().row == t.row && m.entries_.back().col == t.col)
      m.entries_.back().value += t.value;
    else
      m.entries_.push_back(t);
  }
  return m;
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows_, cols_);
  for (const Triplet& t : entries_) d(t.row, t.col) = t.value;
  return d;
}

Eigen::SparseMatrix<double> SparseMatrix::to_eigen() const {
  std::vector<Eigen::Triplet<double>> e;
  e.reserve(entries_.size());
  for (const Triplet& t : entries_) e.emplace_back(t.row, t.col, t.value);
  Eigen::SparseMatrix<double> m(rows_, cols_);
  m.setFromTriplets(e.begin(), e.end());
  return m;
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != cols_) throw std::invalid_argument("dimension mismatch in multiply");
  std::vector<double> y(rows_, 0.0);
  for (const Triplet& t : entries_) y[t.row] += t.value * x[t.col];
  return y;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Triplet> e;
  e.reserve(entries_.size());
  for (const Triplet& t : entries_) e.push_back({t.col, t.row, t.value});
  return from_triplets(cols_, rows_, std::move(e));
}

}  // namespace lodnn
