#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lodnn/sparse.hpp"

namespace lodnn {

/// Affine map x -> W x + b with W stored in compressed rows. Only nonzero
/// weights are stored, so nnz() counts the nonzero weight entries exactly.
class Layer {
 public:
  Layer() = default;
  Layer(int out, int in) : in_(in), out_(out), row_ptr_(1, 0) {}

  static Layer from_triplets(int out, int in, std::vector<Triplet> weights, std::vector<double> bias);
  static Layer from_dense(const Eigen::MatrixXd& W, const Eigen::VectorXd& b);
  /// Validating constructor from raw compressed-row arrays.
  static Layer from_csr(int out, int in, std::vector<std::int64_t> row_ptr, std::vector<int> cols,
                        std::vector<double> values, std::vector<double> bias);

  int in() const { return in_; }
  int out() const { return out_; }
  std::size_t weight_nnz() const { return val_.size(); }
  std::size_t bias_nnz() const;
  std::size_t nnz() const { return weight_nnz() + bias_nnz(); }

  /// Appends the next output row; entries must have increasing columns.
  /// Zero weights are skipped.
  void add_row(std::span<const std::pair<int, double>> entries, double bias);
  /// Row-by-row construction in two steps.
  void push(int col, double value);
  void end_row(double bias);
  void reserve(std::size_t nnz) {
    col_.reserve(nnz);
    val_.reserve(nnz);
  }

  void apply(const double* x, double* y) const;
  Eigen::MatrixXd dense_weight() const;
  Eigen::VectorXd dense_bias() const;
  SparseMatrix weight() const;
  const std::vector<double>& bias() const { return bias_; }

  const std::vector<std::int64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& cols() const { return col_; }
  const std::vector<double>& values() const { return val_; }

  /// Rows stacked as [W; -W] with bias [b; -b].
  Layer stacked_with_negation() const;
  /// Columns duplicated as [W, -W].
  Layer split_columns() const;

  bool operator==(const Layer& other) const = default;

 private:
  int in_ = 0;
  int out_ = 0;
  std::vector<std::int64_t> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> val_;
  std::vector<double> bias_;
};

/// Feed-forward ReLU network; the last layer has no activation.
struct NeuralNetwork {
  std::vector<Layer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out(); }
  /// Number of affine layers L.
  int depth() const { return static_cast<int>(layers.size()); }
  /// Number of nonzero weights and biases M.
  std::size_t num_params() const;
  std::size_t max_width() const;
  /// Throws if consecutive layer dimensions do not chain.
  void validate() const;

  bool operator==(const NeuralNetwork& other) const = default;
};

std::vector<double> realize(const NeuralNetwork& net, std::span<const double> x);
/// Realization of many inputs (columns of X); columns are independent.
Eigen::MatrixXd realize_batch(const NeuralNetwork& net, const Eigen::MatrixXd& X, int workers = 1);

/// One-layer network x -> W x + b.
NeuralNetwork affine_network(const SparseMatrix& W, std::vector<double> b);
NeuralNetwork affine_network(const Eigen::MatrixXd& W, const Eigen::VectorXd& b);

/// Composition outer o inner merging the last layer of `inner` into the first
/// layer of `outer`: depth L1 + L2 - 1.
NeuralNetwork concat(NeuralNetwork outer, NeuralNetwork inner);

/// Exact ReLU identity on R^n of the given depth (>= 2):
/// ([Id; -Id], 0), ..., ([Id, -Id], 0).
NeuralNetwork identity_network(int n, int depth = 2);

/// Composition through a two-layer identity: depth L1 + L2 and
/// M <= M1 + M2 + M_1(outer) + M_L(inner).
NeuralNetwork sparse_concat(NeuralNetwork outer, NeuralNetwork inner);

/// Networks of equal depth side by side. With `shared_input` all networks
/// read the same input vector; otherwise inputs are concatenated.
NeuralNetwork parallelize(std::vector<NeuralNetwork> nets, bool shared_input);

/// Column-major vectorization and its inverse.
std::vector<double> vec(const Eigen::MatrixXd& m);
Eigen::MatrixXd mat(std::span<const double> v, int rows, int cols);
/// Permutation Q with Q vec(M) = vec(M^T) for M of shape rows x cols.
SparseMatrix transpose_permutation(int rows, int cols);

/// Binary container with per-layer sparse weights; round trips are bit-exact.
void save_network(const NeuralNetwork& net, std::ostream& out);
NeuralNetwork load_network(std::istream& in);
void save_network(const NeuralNetwork& net, const std::string& path);
NeuralNetwork load_network(const std::string& path);

}  // namespace lodnn
