#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lodnn/network.hpp"

namespace lodnn {

/// A sawtooth squaring chain approximating (|c + sum_i w_i x_i|)^2; the
/// linear form must stay in [-1, 1] on the input domain.
struct SquareChain {
  std::vector<std::pair<int, double>> form;  // increasing input indices
  double offset = 0.0;
};

/// x_hat * y_hat = 2 (u^2 - v^2 - w^2) with u = |x_hat + y_hat| / 2,
/// v = |x_hat| / 2, w = |y_hat| / 2; u, v, w index chains.
struct ProductTerm {
  int u;
  int v;
  int w;
};

/// Network evaluating linear combinations of approximate products. Chains
/// may be shared between terms and terms between outputs.
struct ProductSpec {
  int input_dim = 0;
  int levels = 1;
  std::vector<SquareChain> chains;
  std::vector<ProductTerm> terms;
  /// outputs[o] = list of (term, coefficient).
  std::vector<std::vector<std::pair<int, double>>> outputs;
};

/// Depth levels + 3. Each term is exact up to 4^-levels (times its coefficient).
NeuralNetwork product_network(const ProductSpec& spec);

/// Smallest number of sawtooth levels with scale * 4^-levels <= tol.
int sawtooth_levels(double scale, double tol);

/// Approximate multiplication (x, y) -> xy on [-Z, Z]^2 with error <= eps.
/// Returns exactly 0 when x or y is 0.
NeuralNetwork scalar_mult_network(double eps, double Z);

/// Input vec(A) (n x k) followed by vec(B) (k x m); output approximates
/// vec(AB) with ||mat(out) - AB||_2 <= eps when all entries are in [-Z, Z].
/// The symmetric variant (n == m) computes every pair {i, j} once and writes
/// it to both (i, j) and (j, i): outputs are exactly symmetric, and equal to
/// AB for symmetric commuting inputs.
NeuralNetwork matrix_mult_network(int n, int k, int m, double eps, double Z, bool symmetric = false);

/// Smallest m with (1 - delta)^m <= theta * delta / 2.
int neumann_order(double theta, double delta);

/// What a network approximates, on which inputs, and to what accuracy,
/// together with its size accounting.
struct NetworkCertificate {
  std::string target;
  std::string domain;
  double domain_bound = 0.0;
  double tolerance = 0.0;
  /// Rigorous a-priori error bound of the construction; <= tolerance.
  double error_bound = 0.0;
  int depth = 0;
  std::size_t params = 0;
  /// Depth and parameter count predicted from the building blocks.
  int accounted_depth = 0;
  std::size_t accounted_params = 0;
  std::vector<std::pair<std::string, double>> budget;
};

struct InversionNetwork {
  NeuralNetwork net;
  NetworkCertificate certificate;
};

/// Network mapping vec(A) to an approximation of vec((Id - A)^-1) with
/// spectral error <= theta for all n x n matrices with ||A||_2 <= 1 - delta
/// (symmetric matrices if `symmetric`). Truncated Neumann series evaluated
/// in product form S_{t+1} = S_t (Id + B_t), B_{t+1} = B_t^2.
InversionNetwork inversion_network(int n, double delta, double theta, bool symmetric = true);

}  // namespace lodnn
