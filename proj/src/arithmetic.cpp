#include "lodnn/arithmetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace lodnn {

namespace {

using Form = std::vector<std::pair<int, double>>;

/// Sorts by column and merges duplicates; zero coefficients vanish.
Form canonical(Form f) {
  std::sort(f.begin(), f.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Form out;
  for (const auto& [c, v] : f) {
    if (!out.empty() && out.back().first == c)
      out.back().second += v;
    else
      out.emplace_back(c, v);
  }
  std::erase_if(out, [](const auto& e) { return e.second == 0.0; });
  return out;
}

/// Matrix operand read from the network input: entry (i, j) is
/// x[offset + i + j * rows] / scale, plus delta_ij / scale if `identity`.
struct Operand {
  int offset;
  int rows;
  int cols;
  double scale;
  bool identity;

  Form entry(int i, int j, double factor, double& constant) const {
    if (identity && i == j) constant += factor / scale;
    return {{offset + i + j * rows, factor / scale}};
  }
};

class ProductBuilder {
 public:
  explicit ProductBuilder(ProductSpec& spec) : spec_(spec) {}

  /// Appends outputs approximating vec(X Y) scaled back to original units.
  void add_product(const Operand& X, const Operand& Y, bool symmetric) {
    if (X.cols != Y.rows) throw std::invalid_argument("matrix product: inner dimensions differ");
    int n = X.rows, k = X.cols, m = Y.cols;
    if (symmetric && n != m) throw std::invalid_argument("symmetric product needs a square result");
    std::size_t first = spec_.outputs.size();
    spec_.outputs.resize(first + static_cast<std::size_t>(n) * m);
    double coeff = X.scale * Y.scale;
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < n; ++i) {
        if (symmetric && i > j) continue;
        auto& out = spec_.outputs[first + i + static_cast<std::size_t>(j) * n];
        for (int l = 0; l < k; ++l) {
          int v = entry_chain(X, i, l);
          int w = entry_chain(Y, l, j);
          double c = 0.0;
          Form f = X.entry(i, l, 0.5, c);
          Form g = Y.entry(l, j, 0.5, c);
          f.insert(f.end(), g.begin(), g.end());
          int u = static_cast<int>(spec_.chains.size());
          spec_.chains.push_back({canonical(std::move(f)), c});
          int t = static_cast<int>(spec_.terms.size());
          spec_.terms.push_back({u, v, w});
          out.emplace_back(t, coeff);
        }
      }
    }
    if (symmetric)
      for (int j = 0; j < m; ++j)
        for (int i = j + 1; i < n; ++i)
          spec_.outputs[first + i + static_cast<std::size_t>(j) * n] = spec_.outputs[first + j + static_cast<std::size_t>(i) * n];
  }

 private:
  int entry_chain(const Operand& X, int i, int j) {
    auto key = std::make_tuple(X.offset + i + j * X.rows, X.scale, X.identity && i == j);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    double c = 0.0;
    Form f = X.entry(i, j, 0.5, c);
    int id = static_cast<int>(spec_.chains.size());
    spec_.chains.push_back({canonical(std::move(f)), c});
    cache_.emplace(key, id);
    return id;
  }

  ProductSpec& spec_;
  std::map<std::tuple<int, double, bool>, int> cache_;
};

double pow_q(double q, int t) {
  return std::pow(q, std::ldexp(1.0, t));  // q^(2^t)
}

struct InversionPlan {
  double mu = 0.0;
  double bound = 0.0;
  double tail = 0.0;
  double f_final = 0.0;
  std::vector<double> e, f, b, s_hat;  // per stage t = 0..J-1 (inputs of stage t)
};

/// Error recursion of the product-form Neumann series in Frobenius norm.
InversionPlan plan_inversion(int J, double delta, double mu, bool symmetric) {
  double q = 1.0 - delta;
  double sigma = symmetric ? std::sqrt(2.0) : 1.0;
  InversionPlan p;
  p.mu = mu;
  p.e.assign(J + 1, 0.0);
  p.f.assign(J + 1, 0.0);
  p.b.assign(J + 1, 0.0);
  p.s_hat.assign(J + 1, 0.0);
  p.b[0] = q;
  p.s_hat[0] = 1.0;
  if (J >= 2) p.e[1] = mu;
  for (int t = 1; t < J; ++t) {
    double qt = pow_q(q, t);
    p.b[t] = qt + p.e[t];
    p.s_hat[t] = (1.0 - qt) / delta + p.f[t];
    p.f[t + 1] = sigma * (p.s_hat[t] * p.e[t] + (1.0 + qt) * p.f[t]) + mu;
    if (t + 1 < J) p.e[t + 1] = (p.b[t] + qt) * p.e[t] + mu;
  }
  p.tail = pow_q(q, J) / delta;
  p.f_final = p.f[J];
  p.bound = p.f_final + p.tail;
  return p;
}

}  // namespace

NeuralNetwork product_network(const ProductSpec& spec) {
  int C = static_cast<int>(spec.chains.size());
  int T = static_cast<int>(spec.terms.size());
  int m = spec.levels;
  if (m < 1) throw std::invalid_argument("product network needs at least one level");
  NeuralNetwork net;

  Layer first(2 * C, spec.input_dim);
  for (const SquareChain& ch : spec.chains) {
    for (double s : {1.0, -1.0}) {
      for (const auto& [col, w] : ch.form) first.push(col, s * w);
      first.end_row(s * ch.offset);
    }
  }
  net.layers.push_back(std::move(first));

  Layer second(2 * C, 2 * C);
  for (int c = 0; c < C; ++c) {
    for (double shift : {0.0, -0.5}) {
      second.push(2 * c, 1.0);
      second.push(2 * c + 1, 1.0);
      second.end_row(shift);
    }
  }
  net.layers.push_back(std::move(second));

  // Linear forms of the running square approximation and of the current
  // sawtooth tooth in terms of the units of the last layer (per chain).
  int width = 2;
  Form acc = {{0, 0.5}, {1, 1.0}};
  Form g = {{0, 2.0}, {1, -4.0}};
  for (int s = 2; s <= m; ++s) {
    Layer layer(3 * C, width * C);
    layer.reserve(static_cast<std::size_t>(C) * (acc.size() + 2 * g.size()));
    for (int c = 0; c < C; ++c) {
      int base = width * c;
      for (const auto& [u, w] : acc) layer.push(base + u, w);
      layer.end_row(0.0);
      for (double shift : {0.0, -0.5}) {
        for (const auto& [u, w] : g) layer.push(base + u, w);
        layer.end_row(shift);
      }
    }
    net.layers.push_back(std::move(layer));
    width = 3;
    double scale = std::ldexp(1.0, -2 * s);
    acc = {{0, 1.0}, {1, -2.0 * scale}, {2, 4.0 * scale}};
    g = {{1, 2.0}, {2, -4.0}};
  }

  Layer combine(2 * T, width * C);
  for (const ProductTerm& t : spec.terms) {
    for (const auto& [u, w] : acc) combine.push(width * t.u + u, w);
    combine.end_row(0.0);
    Form vw;
    for (const auto& [u, w] : acc) vw.emplace_back(width * t.v + u, w);
    for (const auto& [u, w] : acc) vw.emplace_back(width * t.w + u, w);
    for (const auto& [u, w] : canonical(std::move(vw))) combine.push(u, w);
    combine.end_row(0.0);
  }
  net.layers.push_back(std::move(combine));

  Layer last(static_cast<int>(spec.outputs.size()), 2 * T);
  for (const auto& out : spec.outputs) {
    Form f;
    f.reserve(2 * out.size());
    for (const auto& [t, c] : out) {
      f.emplace_back(2 * t, 2.0 * c);
      f.emplace_back(2 * t + 1, -2.0 * c);
    }
    for (const auto& [u, w] : canonical(std::move(f))) last.push(u, w);
    last.end_row(0.0);
  }
  net.layers.push_back(std::move(last));
  return net;
}

int sawtooth_levels(double scale, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (scale <= tol) return 1;
  int m = static_cast<int>(std::ceil(std::log(scale / tol) / std::log(4.0)));
  while (scale * std::ldexp(1.0, -2 * m) > tol) ++m;
  return std::max(1, m);
}

NeuralNetwork scalar_mult_network(double eps, double Z) {
  if (!(eps > 0.0) || !(Z > 0.0)) throw std::invalid_argument("scalar multiplication needs eps > 0 and Z > 0");
  ProductSpec spec;
  spec.input_dim = 2;
  spec.levels = sawtooth_levels(Z * Z, eps);
  ProductBuilder b(spec);
  b.add_product({0, 1, 1, Z, false}, {1, 1, 1, Z, false}, false);
  return product_network(spec);
}

NeuralNetwork matrix_mult_network(int n, int k, int m, double eps, double Z, bool symmetric) {
  if (n < 1 || k < 1 || m < 1) throw std::invalid_argument("matrix dimensions must be positive");
  if (!(eps > 0.0) || !(Z > 0.0)) throw std::invalid_argument("matrix multiplication needs eps > 0 and Z > 0");
  ProductSpec spec;
  spec.input_dim = n * k + k * m;
  spec.levels = sawtooth_levels(k * Z * Z * std::sqrt(static_cast<double>(n) * m), eps);
  ProductBuilder b(spec);
  b.add_product({0, n, k, Z, false}, {n * k, k, m, Z, false}, symmetric);
  return product_network(spec);
}

int neumann_order(double theta, double delta) {
  if (!(theta > 0.0) || !(delta > 0.0) || !(delta < 1.0))
    throw std::invalid_argument("neumann_order needs theta > 0 and delta in (0, 1)");
  double target = 0.5 * theta * delta;
  if (target >= 1.0) return 1;
  int m = static_cast<int>(std::ceil(std::log(target) / std::log(1.0 - delta)));
  while (std::pow(1.0 - delta, m) > target) ++m;
  while (m > 1 && std::pow(1.0 - delta, m - 1) <= target) --m;
  return std::max(1, m);
}

InversionNetwork inversion_network(int n, double delta, double theta, bool symmetric) {
  if (n < 1) throw std::invalid_argument("matrix size must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(theta > 0.0 && theta < 0.25)) throw std::invalid_argument("theta must lie in (0, 1/4)");
  int order = neumann_order(theta, delta);
  int J = std::max(1, static_cast<int>(std::ceil(std::log2(order + 1.0) - 1e-12)));
  while ((1 << J) < order + 1) ++J;
  int nn = n * n;
  double q = 1.0 - delta;

  InversionNetwork result;
  NetworkCertificate& cert = result.certificate;
  cert.target = "(Id - A)^-1";
  cert.domain = symmetric ? "symmetric n x n matrices with ||A||_2 <= 1 - delta" : "n x n matrices with ||A||_2 <= 1 - delta";
  cert.domain_bound = q;
  cert.tolerance = theta;
  cert.budget = {{"n", n}, {"delta", delta}, {"neumann_order", order}, {"stages", J}};

  Eigen::VectorXd id_vec = Eigen::VectorXd::Zero(nn);
  for (int i = 0; i < n; ++i) id_vec(i + i * n) = 1.0;

  if (J == 1) {
    InversionPlan p = plan_inversion(1, delta, 0.0, symmetric);
    Eigen::MatrixXd W = Eigen::MatrixXd::Identity(nn, nn);
    result.net = affine_network(W, id_vec);
    cert.error_bound = p.bound;
    cert.budget.emplace_back("tail", p.tail);
  } else {
    // Largest per-product budget mu whose propagated error fits into theta.
    double lo = std::log(1e-300), hi = std::log(theta);
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (plan_inversion(J, delta, std::exp(mid), symmetric).bound <= theta)
        lo = mid;
      else
        hi = mid;
    }
    InversionPlan p = plan_inversion(J, delta, std::exp(lo), symmetric);
    if (!(p.bound <= theta)) throw std::runtime_error("inversion network: no admissible product budget");
    double mu = p.mu;
    cert.error_bound = p.bound;
    cert.budget.emplace_back("product_budget", mu);
    cert.budget.emplace_back("tail", p.tail);
    cert.budget.emplace_back("product_error", p.f_final);

    std::vector<NeuralNetwork> stages;
    // Stage 0: A -> (A^2, Id + A).
    {
      ProductSpec spec;
      spec.input_dim = nn;
      spec.levels = sawtooth_levels(static_cast<double>(nn) * q * q, mu);
      ProductBuilder b(spec);
      Operand A{0, n, n, q, false};
      b.add_product(A, A, symmetric);
      NeuralNetwork prod = product_network(spec);
      NeuralNetwork carry = concat(identity_network(nn, prod.depth()),
                                   affine_network(Eigen::MatrixXd::Identity(nn, nn), id_vec));
      std::vector<NeuralNetwork> parts;
      parts.push_back(std::move(prod));
      parts.push_back(std::move(carry));
      stages.push_back(parallelize(std::move(parts), true));
      cert.budget.emplace_back("levels_stage_0", spec.levels);
    }
    // Stage t: (B, S) -> (B^2, S (Id + B)); the last stage returns S only.
    for (int t = 1; t < J; ++t) {
      bool last = t + 1 == J;
      double zb = p.b[t], zs = p.s_hat[t], zc = 1.0 + p.b[t];
      ProductSpec spec;
      spec.input_dim = 2 * nn;
      double scale = static_cast<double>(nn) * zs * zc;
      if (!last) scale = std::max(scale, static_cast<double>(nn) * zb * zb);
      spec.levels = sawtooth_levels(scale, mu);
      ProductBuilder b(spec);
      if (!last) b.add_product({0, n, n, zb, false}, {0, n, n, zb, false}, symmetric);
      b.add_product({nn, n, n, zs, false}, {0, n, n, zc, true}, symmetric);
      stages.push_back(product_network(spec));
      cert.budget.emplace_back("levels_stage_" + std::to_string(t), spec.levels);
    }
    int depth = 0;
    std::size_t params = 0;
    NeuralNetwork net = std::move(stages.front());
    depth = net.depth();
    params = net.num_params();
    for (std::size_t s = 1; s < stages.size(); ++s) {
      NeuralNetwork& outer = stages[s];
      depth += outer.depth();
      params += outer.num_params() + outer.layers.front().weight_nnz() + net.layers.back().nnz();
      net = sparse_concat(std::move(outer), std::move(net));
    }
    result.net = std::move(net);
    cert.accounted_depth = depth;
    cert.accounted_params = params;
  }
  if (cert.accounted_depth == 0) {
    cert.accounted_depth = result.net.depth();
    cert.accounted_params = result.net.num_params();
  }
  cert.depth = result.net.depth();
  cert.params = result.net.num_params();
  return result;
}

}  // namespace lodnn
