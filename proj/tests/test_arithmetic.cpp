#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "lodnn/arithmetic.hpp"

using namespace lodnn;

namespace {

Eigen::MatrixXd random_symmetric_in_ball(std::mt19937_64& gen, int n, double radius) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = nd(gen);
  Eigen::MatrixXd S = 0.5 * (G + G.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  double norm = es.eigenvalues().cwiseAbs().maxCoeff();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd A = S * (radius * u(gen) / norm);
  return 0.5 * (A + A.transpose());
}

double spectral_norm(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

double mult(const NeuralNetwork& net, double x, double y) {
  return realize(net, std::vector<double>{x, y})[0];
}

}  // namespace

TEST_CASE("scalar multiplication network") {
  NeuralNetwork net = scalar_mult_network(1e-3, 4.0);
  CHECK(std::abs(mult(net, 1.5, -2.0) + 3.0) <= 1e-3);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  double sup = 0.0;
  for (int t = 0; t < 10000; ++t) {
    double x = u(gen), y = u(gen);
    sup = std::max(sup, std::abs(mult(net, x, y) - x * y));
  }
  CHECK(sup <= 1e-3);
  for (int t = 0; t < 100; ++t) {
    double y = u(gen);
    CHECK(mult(net, 0.0, y) == 0.0);
    CHECK(mult(net, y, 0.0) == 0.0);
  }
  // grid scan including the corners of the domain
  for (int i = -20; i <= 20; ++i)
    for (int j = -20; j <= 20; ++j) CHECK(std::abs(mult(net, 0.2 * i, 0.2 * j) - 0.04 * i * j) <= 1e-3);
  // depth grows logarithmically in Z^2 / eps
  CHECK(net.depth() == sawtooth_levels(16.0, 1e-3) + 3);
  CHECK(scalar_mult_network(1e-6, 4.0).depth() == net.depth() + 5);
}

TEST_CASE("matrix multiplication network") {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    Eigen::MatrixXd A(3, 4), B(4, 2);
    for (int i = 0; i < A.size(); ++i) A.data()[i] = u(gen);
    for (int i = 0; i < B.size(); ++i) B.data()[i] = u(gen);
    NeuralNetwork net = matrix_mult_network(3, 4, 2, 1e-2, 1.0);
    std::vector<double> x = vec(A), xb = vec(B);
    x.insert(x.end(), xb.begin(), xb.end());
    Eigen::MatrixXd C = mat(realize(net, x), 3, 2);
    CHECK(spectral_norm(C - A * B) <= 1e-2);
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Random(3, 3);
  NeuralNetwork net = matrix_mult_network(3, 3, 3, 1e-4, 1.0);
  std::vector<double> x = vec(Eigen::MatrixXd::Identity(3, 3)), xb = vec(B);
  x.insert(x.end(), xb.begin(), xb.end());
  CHECK(spectral_norm(mat(realize(net, x), 3, 3) - B) <= 1e-4);
}

TEST_CASE("symmetric matrix multiplication is exactly symmetric") {
  std::mt19937_64 gen(3);
  for (int n : {2, 4, 5}) {
    NeuralNetwork net = matrix_mult_network(n, n, n, 1e-6, 1.0, true);
    NeuralNetwork general = matrix_mult_network(n, n, n, 1e-6, 1.0, false);
    CHECK(net.num_params() < general.num_params());
    for (int t = 0; t < 5; ++t) {
      Eigen::MatrixXd A = random_symmetric_in_ball(gen, n, 1.0);
      std::vector<double> x = vec(A);
      x.insert(x.end(), x.begin(), x.end());
      Eigen::MatrixXd C = mat(realize(net, x), n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) CHECK(C(i, j) == C(j, i));
      CHECK(spectral_norm(C - A * A) <= 1e-6);
    }
  }
}

TEST_CASE("Neumann order") {
  CHECK(neumann_order(0.1, 0.5) == 6);
  CHECK(neumann_order(0.01, 0.5) == 9);
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> th(1e-6, 0.25), de(1e-3, 0.999);
  for (int t = 0; t < 100; ++t) {
    double theta = th(gen), delta = de(gen);
    int m = neumann_order(theta, delta);
    CHECK(std::pow(1 - delta, m + 1) / delta <= theta / 2);
    CHECK(m == static_cast<int>(std::ceil(std::log(0.5 * theta * delta) / std::log(1 - delta))));
  }
  CHECK_THROWS(neumann_order(0.1, 1.5));
  CHECK_THROWS(neumann_order(-1, 0.5));
}

TEST_CASE("inversion network satisfies its contract") {
  std::mt19937_64 gen(5);
  for (int n = 1; n <= 6; ++n)
    for (double delta : {0.25, 0.5})
      for (double theta : {0.1, 0.01}) {
        InversionNetwork inv = inversion_network(n, delta, theta);
        const NetworkCertificate& c = inv.certificate;
        CHECK(c.error_bound <= theta);
        CHECK(c.depth == inv.net.depth());
        CHECK(c.params == inv.net.num_params());
        CHECK(c.accounted_depth == inv.net.depth());
        CHECK(c.accounted_params == inv.net.num_params());
        Eigen::MatrixXd Id = Eigen::MatrixXd::Identity(n, n);
        auto zero = realize(inv.net, vec(Eigen::MatrixXd::Zero(n, n)));
        CHECK(spectral_norm(mat(zero, n, n) - Id) <= theta);
        auto half = realize(inv.net, vec(Eigen::MatrixXd((1 - delta) * Id)));
        CHECK(spectral_norm(mat(half, n, n) - Id / delta) <= theta);
        for (int t = 0; t < 100; ++t) {
          Eigen::MatrixXd A = random_symmetric_in_ball(gen, n, 1 - delta);
          Eigen::MatrixXd out = mat(realize(inv.net, vec(A)), n, n);
          Eigen::MatrixXd exact = (Id - A).inverse();
          CHECK(spectral_norm(out - exact) <= theta);
          CHECK(spectral_norm(out) <= theta + 1 / delta);
          CHECK((out - out.transpose()).cwiseAbs().maxCoeff() == 0.0);
        }
      }
}

TEST_CASE("general inversion network handles non-symmetric inputs") {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nd;
  int n = 3;
  double delta = 0.3, theta = 0.01;
  InversionNetwork inv = inversion_network(n, delta, theta, false);
  for (int t = 0; t < 50; ++t) {
    Eigen::MatrixXd G(n, n);
    for (int i = 0; i < G.size(); ++i) G.data()[i] = nd(gen);
    Eigen::MatrixXd A = G * ((1 - delta) / spectral_norm(G));
    Eigen::MatrixXd out = mat(realize(inv.net, vec(A)), n, n);
    CHECK(spectral_norm(out - (Eigen::MatrixXd::Identity(n, n) - A).inverse()) <= theta);
  }
}

TEST_CASE("inversion network size grows as tolerances tighten") {
  std::size_t prev = 0;
  for (double theta : {0.2, 0.1, 0.01, 1e-3, 1e-4}) {
    std::size_t m = inversion_network(3, 0.3, theta).net.num_params();
    CHECK(m >= prev);
    prev = m;
  }
  prev = 0;
  for (double delta : {0.9, 0.5, 0.25, 0.1, 0.05}) {
    std::size_t m = inversion_network(3, delta, 0.01).net.num_params();
    CHECK(m >= prev);
    prev = m;
  }
  CHECK_THROWS(inversion_network(3, 0.5, 0.3));
  CHECK_THROWS(inversion_network(3, 0.0, 0.1));
}
