#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "lodnn/surrogate.hpp"

using namespace lodnn;

namespace {

const SurrogateGeometry kTiny{1, 5, 2, 2, 1};
constexpr double kAlpha = 1.0;
constexpr double kBeta = 10.0;

const LocalSurrogate& tiny_surrogate() {
  static const LocalSurrogate s = build_pg_network(kTiny, kAlpha, kBeta, 0.25);
  return s;
}

std::vector<double> random_coefficients(std::mt19937_64& gen, int m) {
  std::uniform_real_distribution<double> u(kAlpha, kBeta);
  std::vector<double> a(m);
  for (double& v : a) v = u(gen);
  return a;
}

Eigen::MatrixXd dense_S(const ReferencePatch& ref, std::span<const double> a) {
  return stiffness_from_map(ref.U, a).to_dense();
}

Eigen::MatrixXd exact_pg(const ReferencePatch& ref, const SurrogateGeometry& g, std::span<const double> a) {
  return local_pg_matrix(ref.ops, assemble_stiffness(ref.ops.patch, g.mesh(), a));
}

double lambda(const Eigen::MatrixXd& M, bool largest) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  return largest ? es.eigenvalues().maxCoeff() : es.eigenvalues().minCoeff();
}

Eigen::MatrixXd realize_matrix(const NeuralNetwork& net, const std::vector<double>& x, int rows, int cols) {
  return mat(realize(net, x), rows, cols);
}

Eigen::MatrixXd random_symmetric(std::mt19937_64& gen, int n) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < G.size(); ++i) G.data()[i] = nd(gen);
  return 0.5 * (G + G.transpose());
}

}  // namespace

TEST_CASE("power iteration finds extreme eigenvalues") {
  std::mt19937_64 gen(1);
  for (int n : {1, 4, 12}) {
    Eigen::MatrixXd G = random_symmetric(gen, n);
    Eigen::MatrixXd M = G * G.transpose() + Eigen::MatrixXd::Identity(n, n);
    CHECK(extreme_eigenvalue(M, true) == doctest::Approx(lambda(M, true)).epsilon(1e-7));
    CHECK(extreme_eigenvalue(M, false) == doctest::Approx(lambda(M, false)).epsilon(1e-7));
  }
  Eigen::MatrixXd D = Eigen::Vector3d(2.0, 2.0, 1.0).asDiagonal();
  CHECK(extreme_eigenvalue(D, true) == doctest::Approx(2.0));
  CHECK_THROWS(extreme_eigenvalue(Eigen::MatrixXd(-D), false));
}

TEST_CASE("spectral bounds enclose the class") {
  ReferencePatch ref = reference_patch(kTiny);
  SpectralBounds b = estimate_spectral_bounds(ref, kAlpha, kBeta);
  Eigen::MatrixXd I = ref.ops.I_omega.to_dense();
  Eigen::MatrixXd S_lo = dense_S(ref, std::vector<double>(ref.m, kAlpha));
  Eigen::MatrixXd S_hi = dense_S(ref, std::vector<double>(ref.m, kBeta));
  CHECK(b.V_sup / lambda(S_hi, true) >= 1.0);
  CHECK(b.V_sup / lambda(S_hi, true) <= 1.0101);
  CHECK(b.V_inf / lambda(S_lo, false) <= 1.0);
  CHECK(b.V_inf / lambda(S_lo, false) >= 0.9899);
  CHECK(b.norm_I == doctest::Approx(spectral_norm(I)).epsilon(1e-5));
  CHECK(b.norm_I >= spectral_norm(I));
  CHECK(b.norm_P >= spectral_norm(ref.ops.P_omega.to_dense()));
  CHECK(b.norm_PK >= spectral_norm(ref.ops.P_omega_K.to_dense()));

  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  double lo = lambda(S_lo, false);
  for (int t = 0; t < 50; ++t) {
    auto a = random_coefficients(gen, ref.m);
    Eigen::MatrixXd S = dense_S(ref, a);
    Eigen::VectorXd v(ref.n);
    for (int i = 0; i < ref.n; ++i) v(i) = nd(gen);
    CHECK(lo <= v.dot(S * v) / v.dot(v));
    CHECK(lambda(S, false) >= b.V_inf);
    CHECK(lambda(S, true) <= b.V_sup);
    Eigen::MatrixXd Y = I * S.llt().solve(I.transpose());
    CHECK(lambda(Y, false) >= b.Vhat_inf);
    CHECK(lambda(Y, true) <= b.Vhat_sup);
  }
}

TEST_CASE("interpolation norm scales like (h/H)^d") {
  std::vector<double> scaled;
  for (int r_h : {2, 4, 8}) {
    ReferencePatch ref = reference_patch(SurrogateGeometry{1, 5, 2, r_h, 1});
    double hH = 1.0 / (2 * r_h);
    double nI = spectral_norm(ref.ops.I_omega.to_dense());
    scaled.push_back(nI * nI / hH);
  }
  for (double s : scaled) {
    CHECK(s > 0.5 * scaled.front());
    CHECK(s < 2.0 * scaled.front());
  }
}

TEST_CASE("tolerance split satisfies both conditions") {
  ReferencePatch ref = reference_patch(kTiny);
  SpectralBounds b = estimate_spectral_bounds(ref, kAlpha, kBeta);
  Eigen::MatrixXd I = ref.ops.I_omega.to_dense();
  Eigen::MatrixXd S_lo = dense_S(ref, std::vector<double>(ref.m, kAlpha));
  double lmin_Y = lambda(Eigen::MatrixXd(I * S_lo.llt().solve(I.transpose())), false);
  for (double eta : {0.25, 0.1, 0.01, 1e-4}) {
    TolerancePlan p = split_tolerances(eta, b);
    double I2 = b.norm_I * b.norm_I;
    double chain = b.norm_PK * b.norm_P * I2;
    double lhs = p.v_resc * chain * I2 / (p.Yhat_inf * p.Yhat_inf) * p.theta + std::max(1.0, p.vhat_resc) * chain * p.gamma;
    CHECK(lhs <= eta * (1 + 1e-12));
    CHECK(p.error_bound() <= eta);
    CHECK(p.theta < std::min(b.Vhat_inf, b.Vhat_inf / (2 * p.v_resc * I2)));
    CHECK(p.theta < lmin_Y);
    CHECK(p.theta > 0);
    CHECK(p.theta < eta);
    CHECK(p.gamma > 0);
    CHECK(p.gamma < eta);
    CHECK(p.delta == doctest::Approx(p.v_resc * b.V_inf));
    CHECK(p.delta_hat == doctest::Approx(p.vhat_resc * p.Yhat_inf));
    CHECK(p.Yhat_inf > 0.5 * b.Vhat_inf);
  }
  TolerancePlan small = split_tolerances(0.01, b), twice = split_tolerances(0.02, b);
  CHECK(twice.gamma == doctest::Approx(2 * small.gamma).epsilon(1e-9));
  CHECK_THROWS(split_tolerances(0.3, b));
  SpectralBounds bad = b;
  bad.Vhat_inf = 0.0;
  CHECK_THROWS(split_tolerances(0.1, bad));
}

TEST_CASE("affine steps reproduce their matrix formulas") {
  ReferencePatch ref = reference_patch(kTiny);
  TolerancePlan plan = split_tolerances(0.25, estimate_spectral_bounds(ref, kAlpha, kBeta));
  SurrogateSteps s = surrogate_steps(ref, plan);
  const int n = ref.n, N = ref.N, c = 2;
  Eigen::MatrixXd I = ref.ops.I_omega.to_dense(), P = ref.ops.P_omega.to_dense(), PK = ref.ops.P_omega_K.to_dense();
  for (int k : {0, 2, 3, 5, 6}) CHECK(s.steps[k].depth() == 1);
  std::mt19937_64 gen(3);
  for (int t = 0; t < 5; ++t) {
    auto a = random_coefficients(gen, ref.m);
    Eigen::MatrixXd S = dense_S(ref, a);
    Eigen::MatrixXd S1 = realize_matrix(s.steps[0], a, n, n);
    CHECK((S1 - S).cwiseAbs().maxCoeff() <= 1e-12 * S.cwiseAbs().maxCoeff());
    CHECK((S1 - S1.transpose()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd M = random_symmetric(gen, n);
    Eigen::MatrixXd X = realize_matrix(s.steps[2], vec(M), n, N);
    CHECK((X - M * I.transpose()).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::MatrixXd Xr = Eigen::MatrixXd::Random(n, N);
    Eigen::MatrixXd Y = realize_matrix(s.steps[3], vec(Xr), N, N);
    Eigen::MatrixXd IX = I * Xr;
    CHECK((Y - 0.5 * (IX + IX.transpose())).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((Y - Y.transpose()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd W = random_symmetric(gen, N);
    Eigen::MatrixXd Z = realize_matrix(s.steps[5], vec(W), N, c);
    CHECK((Z - W * I * PK).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::MatrixXd Zr = Eigen::MatrixXd::Random(N, c);
    Eigen::MatrixXd out = realize_matrix(s.steps[6], vec(Zr), N, c);
    CHECK((out - P.transpose() * I.transpose() * Zr).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("inversion steps stay within their budgets") {
  ReferencePatch ref = reference_patch(kTiny);
  SpectralBounds b = estimate_spectral_bounds(ref, kAlpha, kBeta);
  TolerancePlan plan = split_tolerances(0.25, b);
  SurrogateSteps s = surrogate_steps(ref, plan);
  const int n = ref.n, N = ref.N;
  Eigen::MatrixXd I = ref.ops.I_omega.to_dense();
  CHECK(s.inner_inversion.certificate.error_bound <= plan.theta);
  CHECK(s.outer_inversion.certificate.error_bound <= plan.gamma);
  std::mt19937_64 gen(4);
  for (int t = 0; t < 10; ++t) {
    auto a = random_coefficients(gen, ref.m);
    Eigen::MatrixXd S = dense_S(ref, a);
    Eigen::MatrixXd Sinv = S.inverse();
    Eigen::MatrixXd approx = realize_matrix(s.steps[1], vec(S), n, n);
    CHECK(spectral_norm(approx - Sinv) <= plan.v_resc * plan.theta);
    CHECK((approx - approx.transpose()).cwiseAbs().maxCoeff() == 0.0);

    Eigen::MatrixXd Y = I * Sinv * I.transpose();
    Y = 0.5 * (Y + Y.transpose());
    Eigen::MatrixXd Yinv = Y.inverse();
    Eigen::MatrixXd Yhat = realize_matrix(s.steps[3], realize(s.steps[2], vec(approx)), N, N);
    Eigen::MatrixXd out = realize_matrix(s.steps[4], vec(Yhat), N, N);
    double budget = plan.v_resc * b.norm_I * b.norm_I / (plan.Yhat_inf * plan.Yhat_inf) * plan.theta +
                    plan.vhat_resc * plan.gamma;
    CHECK(spectral_norm(out - Yinv) <= budget);
    CHECK(spectral_norm(Yhat - Y) <= plan.v_resc * b.norm_I * b.norm_I * plan.theta);
  }
}

TEST_CASE("local surrogate meets its contract") {
  const LocalSurrogate& s = tiny_surrogate();
  ReferencePatch ref = reference_patch(kTiny);
  CHECK(s.net.input_dim() == s.m);
  CHECK(s.net.output_dim() == s.N * 2);
  PatchCounts pc = interior_patch_counts(kTiny.mesh(), kTiny.ell);
  CHECK(s.m == pc.coefficient_cells);
  CHECK(s.n == pc.fine_inner_nodes);
  CHECK(s.N == pc.coarse_nodes);
  CHECK(s.certificate.depth == s.net.depth());
  CHECK(s.certificate.params == s.net.num_params());
  CHECK(s.certificate.accounted_depth == s.net.depth());
  CHECK(s.certificate.accounted_params == s.net.num_params());
  CHECK(s.certificate.error_bound <= s.eta);
  double step_params = 0;
  int step_depth = 0;
  for (const auto& [name, value] : s.certificate.budget) {
    if (name.rfind("params_step_", 0) == 0) step_params += value;
    if (name.rfind("depth_step_", 0) == 0) step_depth += static_cast<int>(value);
  }
  CHECK(step_depth == s.net.depth());
  CHECK(static_cast<double>(s.net.num_params()) <= 4 * step_params);

  std::mt19937_64 gen(5);
  for (int t = 0; t < 20; ++t) {
    auto a = random_coefficients(gen, s.m);
    Eigen::MatrixXd theta = surrogate_local_matrix(s, a);
    CHECK(spectral_norm(theta - exact_pg(ref, kTiny, a)) <= s.eta);
    CHECK(surrogate_local_matrix(s, a) == theta);
  }
  std::vector<double> lo(s.m, kAlpha), hi(s.m, kBeta);
  CHECK(spectral_norm(surrogate_local_matrix(s, lo) - exact_pg(ref, kTiny, lo)) <= s.eta);
  CHECK(spectral_norm(surrogate_local_matrix(s, hi) - exact_pg(ref, kTiny, hi)) <= s.eta);
  std::vector<double> out = lo;
  out[0] = 0.5;
  CHECK_THROWS(surrogate_local_matrix(s, out));
  CHECK_THROWS(surrogate_local_matrix(s, std::vector<double>(s.m + 1, 1.0)));
}

TEST_CASE("surrogate construction refuses oversized or boundary-only geometries") {
  CHECK_THROWS(build_pg_network(SurrogateGeometry{1, 4, 2, 2, 1}, kAlpha, kBeta, 0.1));
  CHECK_THROWS(build_pg_network(kTiny, kAlpha, kBeta, 0.1, 100));
  CHECK_THROWS(build_pg_network(kTiny, kAlpha, kBeta, 0.3));
}

TEST_CASE("global surrogate assembly") {
  const LocalSurrogate& s = tiny_surrogate();
  MeshHierarchy mesh = kTiny.mesh();
  CoefficientField A = random_coefficient(mesh, kAlpha, kBeta, 11);
  SparseMatrix S_pg = assemble_pg_global(A, kTiny.ell, 1);

  SurrogateStiffness oracle = assemble_nn_global(nullptr, A, kTiny.ell, 1);
  CHECK(oracle.S_nn.to_dense() == S_pg.to_dense());

  SurrogateStiffness nn = assemble_nn_global(&s, A, kTiny.ell, 2, true);
  int interior = 0;
  for (int K = 0; K < mesh.num_elements(Level::coarse); ++K) {
    bool in = make_patch(mesh, K, kTiny.ell).interior;
    CHECK(nn.from_network[K] == in);
    interior += in;
  }
  CHECK(interior == 1);
  REQUIRE(nn.per_patch_errors);
  double sum = 0;
  for (double e : *nn.per_patch_errors) {
    CHECK(e <= s.eta);
    sum += e;
  }
  double gap = spectral_norm(nn.S_nn.to_dense() - S_pg.to_dense());
  CHECK(gap <= 0.5 * sum + 1e-14);
  CHECK(gap <= interior * s.eta);
  Eigen::MatrixXd pattern_nn = nn.S_nn.to_dense().cwiseAbs(), pattern_pg = S_pg.to_dense().cwiseAbs();
  CHECK(((pattern_nn.array() > 0) == (pattern_pg.array() > 0)).all());

  SurrogateStiffness serial = assemble_nn_global(&s, A, kTiny.ell, 1);
  CHECK(serial.S_nn.to_dense() == nn.S_nn.to_dense());

  CoefficientField wrong = random_coefficient(MeshHierarchy(1, 6, 2, 2), kAlpha, kBeta, 1);
  CHECK_THROWS(assemble_nn_global(&s, wrong, kTiny.ell, 1));
  CHECK_THROWS(assemble_nn_global(&s, A, 2, 1));
}

TEST_CASE("one network serves every interior patch") {
  LocalSurrogate s = build_pg_network(SurrogateGeometry{1, 7, 2, 2, 1}, kAlpha, kBeta, 0.25);
  MeshHierarchy mesh(1, 7, 2, 2);
  CoefficientField A = constant_coefficient(mesh, 3.0);
  A.alpha = kAlpha;
  A.beta = kBeta;
  std::vector<Eigen::MatrixXd> thetas;
  for (int K = 0; K < 7; ++K) {
    Patch p = make_patch(mesh, K, 1);
    if (!p.interior) continue;
    LocalOperators ops = local_operators(p, mesh);
    auto a = A.restrict_to(ops.index);
    thetas.push_back(surrogate_local_matrix(s, a));
    CHECK(spectral_norm(thetas.back() - local_pg_matrix(ops, assemble_stiffness(p, mesh, a))) <= s.eta);
  }
  REQUIRE(thetas.size() == 3);
  CHECK(thetas[0] == thetas[1]);
  CHECK(thetas[1] == thetas[2]);
}

TEST_CASE("surrogate serialization round-trips") {
  const LocalSurrogate& s = tiny_surrogate();
  std::stringstream ss;
  save_surrogate(s, ss);
  LocalSurrogate back = load_surrogate(ss);
  CHECK(back.net == s.net);
  CHECK(back.geometry == s.geometry);
  CHECK(back.plan.theta == s.plan.theta);
  CHECK(back.plan.gamma == s.plan.gamma);
  CHECK(back.plan.vhat_resc == s.plan.vhat_resc);
  CHECK(back.bounds.Vhat_inf == s.bounds.Vhat_inf);
  CHECK(back.certificate.accounted_params == s.certificate.accounted_params);
  CHECK(back.certificate.budget.size() == s.certificate.budget.size());
  CHECK(back.certificate.target == s.certificate.target);
  std::vector<double> a(s.m, 2.0);
  CHECK(surrogate_local_matrix(back, a) == surrogate_local_matrix(s, a));

  std::string text = ss.str();
  auto pos = text.find("geometry 1 5 2 2 1");
  REQUIRE(pos != std::string::npos);
  std::string tampered = text;
  tampered.replace(pos, 18, "geometry 1 5 2 4 1");
  std::stringstream bad(tampered);
  CHECK_THROWS(load_surrogate(bad));
  std::stringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS(load_surrogate(truncated));
}

TEST_CASE("coarse solution comparison") {
  MeshHierarchy mesh = kTiny.mesh();
  CoefficientField A = random_coefficient(mesh, kAlpha, kBeta, 12);
  auto f = [](const Point& x) { return 1.0 + x[0]; };
  CompareReport oracle = compare_solutions(A, f, kTiny.ell, nullptr, 1, true);
  CHECK(oracle.network_patches == 0);
  CHECK(oracle.l2 <= 1e-10);
  CHECK(oracle.coef_l2 <= 1e-10);
  CHECK(oracle.stiffness_gap <= 1e-10);
  REQUIRE(oracle.clod_gap);
  CHECK(*oracle.clod_gap > 0);

  CompareReport r = compare_solutions(A, f, kTiny.ell, &tiny_surrogate(), 1);
  CHECK(r.network_patches == 1);
  CHECK(r.stiffness_gap <= 0.5 * r.patch_error_sum + 1e-14);
  CHECK(r.coef_scaled == doctest::Approx(std::sqrt(mesh.H()) * r.coef_l2));

  // L2 norm through the mass matrix against Gauss quadrature of the coarse function
  std::vector<double> u = solve_coarse(assemble_pg_global(A, kTiny.ell, 1), load_vector(f, Level::coarse, mesh));
  const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)}, gw[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
  double H = mesh.H(), sq = 0;
  for (int k = 0; k < mesh.nH(); ++k) {
    double left = k == 0 ? 0.0 : u[k - 1], right = k == mesh.nH() - 1 ? 0.0 : u[k];
    for (int q = 0; q < 3; ++q) {
      double t = 0.5 * (gx[q] + 1);
      double val = (1 - t) * left + t * right;
      sq += 0.5 * H * gw[q] * val * val;
    }
  }
  CHECK(r.pg_l2 == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
}
