#include "lodnn/network.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "lodnn/parallel.hpp"

namespace lodnn {

namespace {

constexpr char kMagic[8] = {'L', 'O', 'D', 'N', 'N', 'v', '1', '\n'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void write_vec(std::ostream& out, const std::vector<T>& v) {
  if (!v.empty()) out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
T read_pod(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("truncated network file");
  return v;
}

template <class T>
std::vector<T> read_vec(std::istream& in, std::uint64_t n) {
  if (n > (std::uint64_t{1} << 40) / sizeof(T)) throw std::runtime_error("implausible array length in network file");
  std::vector<T> v(n);
  if (n && !in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T))))
    throw std::runtime_error("truncated network file");
  return v;
}

/// W_a * W_b as compressed rows (Gustavson), with exact zeros dropped.
Layer multiply_layers(const Layer& a, const Layer& b) {
  if (a.in() != b.out()) throw std::invalid_argument("concat: dimension mismatch");
  Layer c(a.out(), b.in());
  std::vector<double> acc(b.in(), 0.0);
  std::vector<char> used(b.in(), 0);
  std::vector<int> touched;
  const auto& ap = a.row_ptr();
  const auto& bp = b.row_ptr();
  Eigen::VectorXd bias = a.dense_bias();
  const auto& bb = b.bias();
  for (int r = 0; r < a.out(); ++r) {
    touched.clear();
    double beta = bias(r);
    for (std::int64_t p = ap[r]; p < ap[r + 1]; ++p) {
      int k = a.cols()[p];
      double w = a.values()[p];
      beta += w * bb[k];
      for (std::int64_t q = bp[k]; q < bp[k + 1]; ++q) {
        int j = b.cols()[q];
        if (!used[j]) {
          used[j] = 1;
          touched.push_back(j);
        }
        acc[j] += w * b.values()[q];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (int j : touched) {
      c.push(j, acc[j]);
      acc[j] = 0.0;
      used[j] = 0;
    }
    c.end_row(beta);
  }
  return c;
}

}  // namespace

Layer Layer::from_triplets(int out, int in, std::vector<Triplet> weights, std::vector<double> bias) {
  SparseMatrix W = SparseMatrix::from_triplets(out, in, std::move(weights));
  if (static_cast<int>(bias.size()) != out) throw std::invalid_argument("bias length mismatch");
  Layer l(out, in);
  l.reserve(W.nnz());
  std::size_t p = 0;
  const auto& e = W.entries();
  for (int r = 0; r < out; ++r) {
    for (; p < e.size() && e[p].row == r; ++p) l.push(e[p].col, e[p].value);
    l.end_row(bias[r]);
  }
  return l;
}

Layer Layer::from_dense(const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
  if (W.rows() != b.size()) throw std::invalid_argument("bias length mismatch");
  Layer l(static_cast<int>(W.rows()), static_cast<int>(W.cols()));
  for (int r = 0; r < W.rows(); ++r) {
    for (int c = 0; c < W.cols(); ++c) l.push(c, W(r, c));
    l.end_row(b(r));
  }
  return l;
}

Layer Layer::from_csr(int out, int in, std::vector<std::int64_t> row_ptr, std::vector<int> cols,
                      std::vector<double> values, std::vector<double> bias) {
  if (out < 0 || in < 0) throw std::invalid_argument("negative layer dimension");
  if (static_cast<int>(row_ptr.size()) != out + 1 || row_ptr.front() != 0 ||
      row_ptr.back() != static_cast<std::int64_t>(cols.size()) || cols.size() != values.size() ||
      static_cast<int>(bias.size()) != out)
    throw std::invalid_argument("inconsistent compressed-row arrays");
  for (int r = 0; r < out; ++r) {
    if (row_ptr[r] > row_ptr[r + 1]) throw std::invalid_argument("row pointers must be non-decreasing");
    for (std::int64_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
      if (cols[p] < 0 || cols[p] >= in) throw std::invalid_argument("column index out of range");
      if (p > row_ptr[r] && cols[p] <= cols[p - 1]) throw std::invalid_argument("columns must increase within a row");
      if (values[p] == 0.0) throw std::invalid_argument("explicit zero weight");
    }
  }
  Layer l(out, in);
  l.row_ptr_ = std::move(row_ptr);
  l.col_ = std::move(cols);
  l.val_ = std::move(values);
  l.bias_ = std::move(bias);
  return l;
}

std::size_t Layer::bias_nnz() const {
  return static_cast<std::size_t>(std::count_if(bias_.begin(), bias_.end(), [](double b) { return b != 0.0; }));
}

void Layer::add_row(std::span<const std::pair<int, double>> entries, double bias) {
  for (const auto& [c, v] : entries) push(c, v);
  end_row(bias);
}

void Layer::push(int col, double value) {
  if (value == 0.0) return;
  col_.push_back(col);
  val_.push_back(value);
}

void Layer::end_row(double bias) {
  row_ptr_.push_back(static_cast<std::int64_t>(col_.size()));
  bias_.push_back(bias);
}

void Layer::apply(const double* x, double* y) const {
  for (int r = 0; r < out_; ++r) {
    double s = bias_[r];
    for (std::int64_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) s += val_[p] * x[col_[p]];
    y[r] = s;
  }
}

Eigen::MatrixXd Layer::dense_weight() const {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(out_, in_);
  for (int r = 0; r < out_; ++r)
    for (std::int64_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) W(r, col_[p]) = val_[p];
  return W;
}

Eigen::VectorXd Layer::dense_bias() const {
  return Eigen::Map<const Eigen::VectorXd>(bias_.data(), bias_.size());
}

SparseMatrix Layer::weight() const {
  std::vector<Triplet> t;
  t.reserve(val_.size());
  for (int r = 0; r < out_; ++r)
    for (std::int64_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) t.push_back({r, col_[p], val_[p]});
  return SparseMatrix::from_triplets(out_, in_, std::move(t));
}

Layer Layer::stacked_with_negation() const {
  Layer l(2 * out_, in_);
  l.reserve(2 * val_.size());
  for (double sign : {1.0, -1.0}) {
    for (int r = 0; r < out_; ++r) {
      for (std::int64_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) l.push(col_[p], sign * val_[p]);
      l.end_row(sign * bias_[r]);
    }
  }
  return l;
}

Layer Layer::split_columns() const {
  Layer l(out_, 2 * in_);
  l.reserve(2 * val_.size());
  for (int r = 0; r < out_; ++r) {
    for (std::int64_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) l.push(col_[p], val_[p]);
    for (std::int64_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) l.push(col_[p] + in_, -val_[p]);
    l.end_row(bias_[r]);
  }
  return l;
}

std::size_t NeuralNetwork::num_params() const {
  std::size_t m = 0;
  for (const Layer& l : layers) m += l.nnz();
  return m;
}

std::size_t NeuralNetwork::max_width() const {
  std::size_t w = layers.empty() ? 0 : static_cast<std::size_t>(layers.front().in());
  for (const Layer& l : layers) w = std::max(w, static_cast<std::size_t>(l.out()));
  return w;
}

void NeuralNetwork::validate() const {
  if (layers.empty()) throw std::invalid_argument("network has no layers");
  for (std::size_t i = 1; i < layers.size(); ++i)
    if (layers[i].in() != layers[i - 1].out())
      throw std::invalid_argument("layer " + std::to_string(i) + " input dimension does not match previous output");
}

std::vector<double> realize(const NeuralNetwork& net, std::span<const double> x) {
  if (static_cast<int>(x.size()) != net.input_dim())
    throw std::invalid_argument("input has dimension " + std::to_string(x.size()) + ", network expects " +
                                std::to_string(net.input_dim()));
  std::vector<double> cur(x.begin(), x.end()), next;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    next.resize(l.out());
    l.apply(cur.data(), next.data());
    if (i + 1 < net.layers.size())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    std::swap(cur, next);
  }
  return cur;
}

Eigen::MatrixXd realize_batch(const NeuralNetwork& net, const Eigen::MatrixXd& X, int workers) {
  auto cols = parallel_map(static_cast<int>(X.cols()), workers, [&](int c) {
    Eigen::VectorXd x = X.col(c);
    return realize(net, std::span<const double>(x.data(), x.size()));
  });
  Eigen::MatrixXd Y(net.output_dim(), X.cols());
  for (int c = 0; c < X.cols(); ++c) Y.col(c) = Eigen::Map<const Eigen::VectorXd>(cols[c].data(), cols[c].size());
  return Y;
}

NeuralNetwork affine_network(const SparseMatrix& W, std::vector<double> b) {
  NeuralNetwork n;
  n.layers.push_back(Layer::from_triplets(W.rows(), W.cols(), W.entries(), std::move(b)));
  return n;
}

NeuralNetwork affine_network(const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
  NeuralNetwork n;
  n.layers.push_back(Layer::from_dense(W, b));
  return n;
}

NeuralNetwork concat(NeuralNetwork outer, NeuralNetwork inner) {
  outer.validate();
  inner.validate();
  if (outer.input_dim() != inner.output_dim()) throw std::invalid_argument("concat: dimension mismatch");
  NeuralNetwork n;
  n.layers.reserve(outer.layers.size() + inner.layers.size() - 1);
  for (std::size_t i = 0; i + 1 < inner.layers.size(); ++i) n.layers.push_back(std::move(inner.layers[i]));
  n.layers.push_back(multiply_layers(outer.layers.front(), inner.layers.back()));
  for (std::size_t i = 1; i < outer.layers.size(); ++i) n.layers.push_back(std::move(outer.layers[i]));
  return n;
}

NeuralNetwork identity_network(int n, int depth) {
  if (depth < 2) throw std::invalid_argument("identity network needs depth >= 2");
  NeuralNetwork net;
  Layer first(2 * n, n);
  for (double s : {1.0, -1.0})
    for (int i = 0; i < n; ++i) {
      first.push(i, s);
      first.end_row(0.0);
    }
  net.layers.push_back(std::move(first));
  for (int k = 0; k < depth - 2; ++k) {
    Layer mid(2 * n, 2 * n);
    for (int i = 0; i < 2 * n; ++i) {
      mid.push(i, 1.0);
      mid.end_row(0.0);
    }
    net.layers.push_back(std::move(mid));
  }
  Layer last(n, 2 * n);
  for (int i = 0; i < n; ++i) {
    last.push(i, 1.0);
    last.push(n + i, -1.0);
    last.end_row(0.0);
  }
  net.layers.push_back(std::move(last));
  return net;
}

NeuralNetwork sparse_concat(NeuralNetwork outer, NeuralNetwork inner) {
  outer.validate();
  inner.validate();
  if (outer.input_dim() != inner.output_dim()) throw std::invalid_argument("sparse_concat: dimension mismatch");
  NeuralNetwork n;
  n.layers.reserve(outer.layers.size() + inner.layers.size());
  for (std::size_t i = 0; i + 1 < inner.layers.size(); ++i) n.layers.push_back(std::move(inner.layers[i]));
  n.layers.push_back(inner.layers.back().stacked_with_negation());
  n.layers.push_back(outer.layers.front().split_columns());
  for (std::size_t i = 1; i < outer.layers.size(); ++i) n.layers.push_back(std::move(outer.layers[i]));
  return n;
}

NeuralNetwork parallelize(std::vector<NeuralNetwork> nets, bool shared_input) {
  if (nets.empty()) throw std::invalid_argument("parallelize: no networks");
  int L = nets.front().depth();
  for (const auto& n : nets) {
    n.validate();
    if (n.depth() != L) throw std::invalid_argument("parallelize: networks must have equal depth");
    if (shared_input && n.input_dim() != nets.front().input_dim())
      throw std::invalid_argument("parallelize: shared input needs equal input dimensions");
  }
  NeuralNetwork out;
  for (int l = 0; l < L; ++l) {
    int rows = 0, cols = 0;
    std::size_t nnz = 0;
    for (const auto& n : nets) {
      rows += n.layers[l].out();
      cols += n.layers[l].in();
      nnz += n.layers[l].weight_nnz();
    }
    if (l == 0 && shared_input) cols = nets.front().input_dim();
    Layer layer(rows, cols);
    layer.reserve(nnz);
    int col_offset = 0;
    for (auto& n : nets) {
      const Layer& src = n.layers[l];
      for (int r = 0; r < src.out(); ++r) {
        for (std::int64_t p = src.row_ptr()[r]; p < src.row_ptr()[r + 1]; ++p)
          layer.push(src.cols()[p] + col_offset, src.values()[p]);
        layer.end_row(src.bias()[r]);
      }
      if (!(l == 0 && shared_input)) col_offset += src.in();
      n.layers[l] = Layer();
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

std::vector<double> vec(const Eigen::MatrixXd& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

Eigen::MatrixXd mat(std::span<const double> v, int rows, int cols) {
  if (static_cast<long>(v.size()) != static_cast<long>(rows) * cols) throw std::invalid_argument("mat: length mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

SparseMatrix transpose_permutation(int rows, int cols) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(rows) * cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) t.push_back({j + i * cols, i + j * rows, 1.0});
  return SparseMatrix::from_triplets(rows * cols, rows * cols, std::move(t));
}

void save_network(const NeuralNetwork& net, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(out, net.layers.size());
  for (const Layer& l : net.layers) {
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(l.out()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(l.in()));
    write_pod<std::uint64_t>(out, l.weight_nnz());
    write_vec(out, l.row_ptr());
    write_vec(out, l.cols());
    write_vec(out, l.values());
    write_vec(out, l.bias());
  }
  if (!out) throw std::runtime_error("failed to write network");
}

NeuralNetwork load_network(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a network file (bad magic)");
  auto count = read_pod<std::uint64_t>(in);
  if (count == 0 || count > 100000) throw std::runtime_error("implausible layer count in network file");
  NeuralNetwork net;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto out = read_pod<std::uint64_t>(in);
    auto inn = read_pod<std::uint64_t>(in);
    auto nnz = read_pod<std::uint64_t>(in);
    if (out > (1u << 30) || inn > (1u << 30)) throw std::runtime_error("implausible layer size in network file");
    auto rp = read_vec<std::int64_t>(in, out + 1);
    auto cols = read_vec<int>(in, nnz);
    auto vals = read_vec<double>(in, nnz);
    auto bias = read_vec<double>(in, out);
    try {
      net.layers.push_back(Layer::from_csr(static_cast<int>(out), static_cast<int>(inn), std::move(rp), std::move(cols),
                                           std::move(vals), std::move(bias)));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("malformed layer in network file: ") + e.what());
    }
  }
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("malformed network file: ") + e.what());
  }
  return net;
}

void save_network(const NeuralNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_network(net, out);
}

NeuralNetwork load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_network(in);
}

}  // namespace lodnn
