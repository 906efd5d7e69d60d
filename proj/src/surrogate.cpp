#include "lodnn/surrogate.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "lodnn/parallel.hpp"
#include "lodnn/rng.hpp"

namespace lodnn {

namespace {

constexpr double kEigenPad = 0.01;
constexpr double kNormPad = 1e-6;
constexpr double kRescale = 0.99;

SparseMatrix scaled_identity(int n, double s) {
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) t.push_back({i, i, s});
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

std::vector<double> vec_identity(int n) {
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[i + static_cast<std::size_t>(i) * n] = 1.0;
  return v;
}

/// vec(M) -> vec((M + M^T) / 2) for n x n matrices. Rows (i, j) and (j, i)
/// read the same two entries in the same order, so the result is exactly
/// symmetric in floating point.
SparseMatrix mirror(int n) {
  std::vector<Triplet> t;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      int r = i + j * n;
      if (i == j) {
        t.push_back({r, r, 1.0});
      } else {
        t.push_back({r, r, 0.5});
        t.push_back({r, j + i * n, 0.5});
      }
    }
  return SparseMatrix::from_triplets(n * n, n * n, std::move(t));
}

SparseMatrix sparse_from_dense(const Eigen::MatrixXd& M) {
  double cut = 1e-13 * M.cwiseAbs().maxCoeff();
  std::vector<Triplet> t;
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j)
      if (std::abs(M(i, j)) > cut) t.push_back({i, j, M(i, j)});
  return SparseMatrix::from_triplets(static_cast<int>(M.rows()), static_cast<int>(M.cols()), std::move(t));
}

NeuralNetwork copies(const SparseMatrix& W, int count) {
  std::vector<NeuralNetwork> nets(count, affine_network(W, std::vector<double>(W.rows(), 0.0)));
  return parallelize(std::move(nets), false);
}

NeuralNetwork rescaled_inversion(NeuralNetwork inv, int n, double resc) {
  NeuralNetwork scale_out = affine_network(scaled_identity(n * n, resc), std::vector<double>(n * n, 0.0));
  NeuralNetwork shift_in = affine_network(scaled_identity(n * n, -resc), vec_identity(n));
  return sparse_concat(concat(std::move(scale_out), std::move(inv)), std::move(shift_in));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("surrogate: bad number " + s);
  return v;
}

}  // namespace

double spectral_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  return svd.singularValues()(0);
}

ReferencePatch reference_patch(const SurrogateGeometry& g) {
  MeshHierarchy mesh = g.mesh();
  MultiIndex K{0, 0, 0};
  for (int a = 0; a < g.d; ++a) K[a] = g.ell + 1;
  int element = linear_index(K, mesh.element_extent(Level::coarse), g.d);
  if (g.nH < 2 * g.ell + 3) throw std::invalid_argument("surrogate: mesh has no interior patch for this ell");
  Patch patch = make_patch(mesh, element, g.ell);
  if (!patch.interior) throw std::logic_error("surrogate: reference patch is not interior");
  ReferencePatch ref{local_operators(patch, mesh), coefficient_to_stiffness_map(patch, mesh), 0, 0, 0};
  ref.m = static_cast<int>(ref.ops.index.eps_elements.size());
  ref.n = static_cast<int>(ref.ops.index.fine_inner_nodes.size());
  ref.N = static_cast<int>(ref.ops.index.coarse_nodes.size());
  if (static_cast<int>(ref.ops.active_rows.size()) != ref.N)
    throw std::logic_error("surrogate: interior patch with inactive constraint rows");
  return ref;
}

double extreme_eigenvalue(const Eigen::MatrixXd& M, bool largest, double tol, int max_iter) {
  const int n = static_cast<int>(M.rows());
  if (n == 0 || M.cols() != n) throw std::invalid_argument("extreme_eigenvalue: square matrix required");
  Philox rng(0x5eed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform(streams::power_iteration, i, -1.0, 1.0);
  v.normalize();
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!largest) {
    llt.compute(M);
    if (llt.info() != Eigen::Success) throw std::runtime_error("extreme_eigenvalue: matrix is not positive definite");
  }
  double previous = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = largest ? Eigen::VectorXd(M * v) : Eigen::VectorXd(llt.solve(v));
    double rho = v.dot(w);
    if (!(rho > 0)) throw std::runtime_error("extreme_eigenvalue: matrix is not positive definite");
    double residual = (w - rho * v).norm();
    // A nearly repeated extreme eigenvalue stalls the vector but not the
    // Rayleigh quotient, which increases monotonically.
    if (residual <= tol * rho || std::abs(rho - previous) <= 1e-15 * rho) return largest ? rho : 1.0 / rho;
    previous = rho;
    v = w / w.norm();
  }
  throw std::runtime_error("extreme_eigenvalue: power iteration did not converge");
}

SpectralBounds estimate_spectral_bounds(const ReferencePatch& ref, double alpha, double beta) {
  if (!(alpha > 0 && beta >= alpha)) throw std::invalid_argument("spectral bounds: need 0 < alpha <= beta");
  auto stiffness = [&](double value) {
    std::vector<double> a(ref.m, value);
    return stiffness_from_map(ref.U, a).to_dense();
  };
  Eigen::MatrixXd S_lo = stiffness(alpha), S_hi = stiffness(beta);
  Eigen::MatrixXd I = ref.ops.I_omega.to_dense();
  auto schur = [&](const Eigen::MatrixXd& S) {
    Eigen::MatrixXd Y = I * S.llt().solve(I.transpose());
    return Eigen::MatrixXd(0.5 * (Y + Y.transpose()));
  };
  SpectralBounds b;
  b.V_inf = (1 - kEigenPad) * extreme_eigenvalue(S_lo, false);
  b.V_sup = (1 + kEigenPad) * extreme_eigenvalue(S_hi, true);
  // S^-1 decreases in the Loewner order as the coefficient grows.
  b.Vhat_inf = (1 - kEigenPad) * extreme_eigenvalue(schur(S_hi), false);
  b.Vhat_sup = (1 + kEigenPad) * extreme_eigenvalue(schur(S_lo), true);
  auto norm = [](const Eigen::MatrixXd& A) {
    Eigen::MatrixXd G = A.rows() <= A.cols() ? Eigen::MatrixXd(A * A.transpose()) : Eigen::MatrixXd(A.transpose() * A);
    return (1 + kNormPad) * std::sqrt(extreme_eigenvalue(G, true));
  };
  b.norm_I = norm(I);
  b.norm_P = norm(ref.ops.P_omega.to_dense());
  b.norm_PK = norm(ref.ops.P_omega_K.to_dense());
  return b;
}

TolerancePlan split_tolerances(double eta, const SpectralBounds& b) {
  if (!(eta > 0 && eta <= 0.25)) throw std::invalid_argument("split_tolerances: eta must lie in (0, 1/4]");
  if (!(b.V_inf > 0 && b.V_sup >= b.V_inf && b.Vhat_inf > 0 && b.Vhat_sup >= b.Vhat_inf && b.norm_I > 0 &&
        b.norm_P > 0 && b.norm_PK > 0))
    throw std::invalid_argument("split_tolerances: degenerate spectral bounds");
  TolerancePlan p;
  p.v_resc = kRescale / b.V_sup;
  p.delta = p.v_resc * b.V_inf;
  double I2 = b.norm_I * b.norm_I;
  double perturb = p.v_resc * I2;  // ||Y - Yhat||_2 per unit of theta
  double chain = b.norm_PK * b.norm_P * I2;
  double cap = std::min({0.99 * std::min(b.Vhat_inf, b.Vhat_inf / (2 * perturb)), 0.99 * eta, 0.24});
  auto coef_theta = [&](double theta) {
    double lo = b.Vhat_inf - perturb * theta;
    return p.v_resc * chain * I2 / (lo * lo);
  };
  double lo = 0.0, hi = cap;
  if (hi * coef_theta(hi) <= 0.5 * eta) {
    lo = hi;
  } else {
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (mid * coef_theta(mid) <= 0.5 * eta ? lo : hi) = mid;
    }
  }
  if (!(lo > 0)) throw std::runtime_error("split_tolerances: no admissible theta");
  p.theta = lo;
  p.coef_theta = coef_theta(p.theta);
  p.Yhat_inf = b.Vhat_inf - perturb * p.theta;
  p.Yhat_sup = b.Vhat_sup + perturb * p.theta;
  p.vhat_resc = kRescale / p.Yhat_sup;
  p.delta_hat = p.vhat_resc * p.Yhat_inf;
  p.coef_gamma = std::max(1.0, p.vhat_resc) * chain;
  p.gamma = std::min({0.5 * eta / p.coef_gamma, 0.99 * eta, 0.24});
  if (!(p.error_bound() <= eta)) throw std::logic_error("split_tolerances: budget exceeded");
  return p;
}

SurrogateSteps surrogate_steps(const ReferencePatch& ref, const TolerancePlan& plan) {
  const int n = ref.n, N = ref.N;
  const int corners = static_cast<int>(ref.ops.P_omega_K.cols());
  Eigen::MatrixXd I = ref.ops.I_omega.to_dense();
  Eigen::MatrixXd P = ref.ops.P_omega.to_dense();
  Eigen::MatrixXd PK = ref.ops.P_omega_K.to_dense();
  SurrogateSteps s;

  s.steps[0] = concat(affine_network(mirror(n), std::vector<double>(n * n, 0.0)),
                      affine_network(ref.U, std::vector<double>(n * n, 0.0)));

  s.inner_inversion = inversion_network(n, plan.delta, plan.theta, true);
  s.steps[1] = rescaled_inversion(std::move(s.inner_inversion.net), n, plan.v_resc);

  s.steps[2] = concat(affine_network(transpose_permutation(N, n), std::vector<double>(n * N, 0.0)),
                      copies(ref.ops.I_omega, n));

  s.steps[3] = concat(affine_network(mirror(N), std::vector<double>(N * N, 0.0)), copies(ref.ops.I_omega, N));

  s.outer_inversion = inversion_network(N, plan.delta_hat, plan.gamma, true);
  s.steps[4] = rescaled_inversion(std::move(s.outer_inversion.net), N, plan.vhat_resc);

  SparseMatrix IPKt = sparse_from_dense((I * PK).transpose());
  s.steps[5] = concat(affine_network(transpose_permutation(corners, N), std::vector<double>(N * corners, 0.0)),
                      copies(IPKt, N));

  s.steps[6] = copies(sparse_from_dense(P.transpose() * I.transpose()), corners);
  return s;
}

ComposedNetwork compose_steps(std::array<NeuralNetwork, 7> steps) {
  ComposedNetwork c;
  c.accounted_depth = steps[0].depth();
  c.accounted_params = steps[0].num_params();
  // nonzero weights and biases of the current last layer
  std::size_t last_w = steps[0].layers.back().weight_nnz();
  std::size_t last_b = steps[0].layers.back().bias_nnz();
  for (std::size_t k = 1; k < steps.size(); ++k) {
    const NeuralNetwork& outer = steps[k];
    const Layer& first = outer.layers.front();
    c.accounted_depth += outer.depth();
    c.accounted_params += outer.num_params() + first.weight_nnz() + last_w + last_b;
    if (outer.depth() == 1) {
      last_w = 2 * first.weight_nnz();
      last_b = first.bias_nnz();
    } else {
      last_w = outer.layers.back().weight_nnz();
      last_b = outer.layers.back().bias_nnz();
    }
  }
  c.net = std::move(steps[0]);
  for (std::size_t k = 1; k < steps.size(); ++k) c.net = sparse_concat(std::move(steps[k]), std::move(c.net));
  return c;
}

LocalSurrogate build_pg_network(const SurrogateGeometry& geometry, double alpha, double beta, double eta,
                                long long max_inner_entries) {
  if (!(eta > 0 && eta <= 0.25)) throw std::invalid_argument("build_pg_network: eta must lie in (0, 1/4]");
  ReferencePatch ref = reference_patch(geometry);
  long long inner = static_cast<long long>(ref.n) * ref.n;
  if (inner > max_inner_entries)
    throw std::invalid_argument("build_pg_network: n_ell^2 = " + std::to_string(inner) + " exceeds the size cap " +
                                std::to_string(max_inner_entries));
  LocalSurrogate s;
  s.geometry = geometry;
  s.alpha = alpha;
  s.beta = beta;
  s.eta = eta;
  s.m = ref.m;
  s.n = ref.n;
  s.N = ref.N;
  s.bounds = estimate_spectral_bounds(ref, alpha, beta);
  s.plan = split_tolerances(eta, s.bounds);
  SurrogateSteps steps = surrogate_steps(ref, s.plan);

  NetworkCertificate& cert = s.certificate;
  cert.target = "local Petrov-Galerkin matrix";
  cert.domain = "coefficients with values in [alpha, beta]";
  cert.domain_bound = beta;
  cert.tolerance = eta;
  cert.error_bound = s.plan.error_bound();
  cert.budget = {{"theta", s.plan.theta},
                 {"gamma", s.plan.gamma},
                 {"inner_inversion_bound", steps.inner_inversion.certificate.error_bound},
                 {"outer_inversion_bound", steps.outer_inversion.certificate.error_bound}};
  for (int k = 0; k < 7; ++k) {
    cert.budget.emplace_back("depth_step_" + std::to_string(k + 1), steps.steps[k].depth());
    cert.budget.emplace_back("params_step_" + std::to_string(k + 1), static_cast<double>(steps.steps[k].num_params()));
  }
  ComposedNetwork c = compose_steps(std::move(steps.steps));
  s.net = std::move(c.net);
  cert.depth = s.net.depth();
  cert.params = s.net.num_params();
  cert.accounted_depth = c.accounted_depth;
  cert.accounted_params = c.accounted_params;
  return s;
}

Eigen::MatrixXd surrogate_local_matrix(const LocalSurrogate& s, std::span<const double> a) {
  if (static_cast<int>(a.size()) != s.m) throw std::invalid_argument("surrogate: coefficient vector has wrong length");
  for (double v : a)
    if (!(v >= s.alpha && v <= s.beta)) throw std::invalid_argument("surrogate: coefficient outside [alpha, beta]");
  return mat(realize(s.net, a), s.N, 1 << s.geometry.d);
}

void check_compatible(const LocalSurrogate& s, const CoefficientField& A, int ell) {
  const MeshHierarchy& m = A.mesh;
  const SurrogateGeometry& g = s.geometry;
  if (m.dim() != g.d || m.nH() != g.nH || m.r_eps() != g.r_eps || m.r_h() != g.r_h || ell != g.ell)
    throw std::invalid_argument("surrogate: geometry mismatch");
  if (A.alpha < s.alpha || A.beta > s.beta) throw std::invalid_argument("surrogate: coefficient range not covered");
}

SurrogateStiffness assemble_nn_global(const LocalSurrogate* s, const CoefficientField& A, int ell, int workers,
                                      bool audit) {
  if (s) check_compatible(*s, A, ell);
  const MeshHierarchy& mesh = A.mesh;
  struct Local {
    Eigen::MatrixXd theta;
    bool network = false;
    double error = 0.0;
  };
  auto locals = parallel_map(mesh.num_elements(Level::coarse), workers, [&](int K) {
    Patch patch = make_patch(mesh, K, ell);
    Local l;
    if (s && patch.interior) {
      std::vector<double> a = A.restrict_to(local_indexers(patch, mesh));
      l.theta = surrogate_local_matrix(*s, a);
      l.network = true;
      if (audit) {
        LocalOperators ops = local_operators(patch, mesh);
        l.error = spectral_norm(local_pg_matrix(ops, assemble_stiffness(patch, mesh, a)) - l.theta);
      }
    } else {
      LocalOperators ops = local_operators(patch, mesh);
      std::vector<double> a = A.restrict_to(ops.index);
      l.theta = local_pg_matrix(ops, assemble_stiffness(patch, mesh, a));
    }
    return l;
  });
  SurrogateStiffness out;
  std::vector<Eigen::MatrixXd> mats;
  mats.reserve(locals.size());
  std::vector<double> errors;
  for (auto& l : locals) {
    out.from_network.push_back(l.network);
    errors.push_back(l.error);
    mats.push_back(std::move(l.theta));
  }
  out.S_nn = assemble_from_local(mesh, ell, mats);
  if (audit) out.per_patch_errors = std::move(errors);
  return out;
}

CompareReport compare_solutions(const CoefficientField& A, const ScalarFunction& f, int ell, const LocalSurrogate* s,
                                int workers, bool with_clod) {
  const MeshHierarchy& mesh = A.mesh;
  CompareReport r;
  r.H = mesh.H();
  r.ell = ell;
  SparseMatrix S_pg = assemble_pg_global(A, ell, workers);
  SurrogateStiffness nn = assemble_nn_global(s, A, ell, workers, true);
  for (bool b : nn.from_network) r.network_patches += b;
  for (double e : *nn.per_patch_errors) {
    r.patch_error_sum += e;
    r.patch_error_max = std::max(r.patch_error_max, e);
  }
  r.stiffness_gap = spectral_norm(nn.S_nn.to_dense() - S_pg.to_dense());
  std::vector<double> rhs = load_vector(f, Level::coarse, mesh);
  std::vector<double> u_pg = solve_coarse(S_pg, rhs);
  std::vector<double> u_nn = solve_coarse(nn.S_nn, rhs);
  std::vector<double> e(u_pg.size());
  double sq = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = u_pg[i] - u_nn[i];
    sq += e[i] * e[i];
  }
  SparseMatrix M = assemble_mass(mesh, Level::coarse);
  r.coef_l2 = std::sqrt(sq);
  r.coef_scaled = std::pow(r.H, 0.5 * mesh.dim()) * r.coef_l2;
  r.l2 = weighted_norm(M, e);
  r.pg_l2 = weighted_norm(M, u_pg);
  if (with_clod) {
    Eigen::MatrixXd Sc = assemble_clod_global(corrected_basis(A, ell, workers), assemble_global_stiffness(A));
    std::vector<double> u_c = solve_coarse(Sc, rhs);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = u_c[i] - u_pg[i];
    r.clod_gap = weighted_norm(M, e);
  }
  return r;
}

void save_surrogate(const LocalSurrogate& s, std::ostream& out) {
  auto kv = [&](const std::string& k, double v) { out << k << ' ' << format_double(v) << '\n'; };
  const NetworkCertificate& c = s.certificate;
  out << "lodnn-surrogate 1\n";
  out << "geometry " << s.geometry.d << ' ' << s.geometry.nH << ' ' << s.geometry.r_eps << ' ' << s.geometry.r_h
      << ' ' << s.geometry.ell << '\n';
  out << "dims " << s.m << ' ' << s.n << ' ' << s.N << '\n';
  kv("alpha", s.alpha);
  kv("beta", s.beta);
  kv("eta", s.eta);
  kv("theta", s.plan.theta);
  kv("gamma", s.plan.gamma);
  kv("v_resc", s.plan.v_resc);
  kv("vhat_resc", s.plan.vhat_resc);
  kv("delta", s.plan.delta);
  kv("delta_hat", s.plan.delta_hat);
  kv("Yhat_inf", s.plan.Yhat_inf);
  kv("Yhat_sup", s.plan.Yhat_sup);
  kv("coef_theta", s.plan.coef_theta);
  kv("coef_gamma", s.plan.coef_gamma);
  kv("V_inf", s.bounds.V_inf);
  kv("V_sup", s.bounds.V_sup);
  kv("Vhat_inf", s.bounds.Vhat_inf);
  kv("Vhat_sup", s.bounds.Vhat_sup);
  kv("norm_I", s.bounds.norm_I);
  kv("norm_P", s.bounds.norm_P);
  kv("norm_PK", s.bounds.norm_PK);
  kv("error_bound", c.error_bound);
  kv("domain_bound", c.domain_bound);
  kv("tolerance", c.tolerance);
  out << "depth " << c.depth << '\n';
  out << "params " << c.params << '\n';
  out << "accounted_depth " << c.accounted_depth << '\n';
  out << "accounted_params " << c.accounted_params << '\n';
  out << "target " << c.target << '\n';
  out << "domain " << c.domain << '\n';
  for (const auto& [name, value] : c.budget) kv("budget." + name, value);
  out << "[network]\n";
  save_network(s.net, out);
}

LocalSurrogate load_surrogate(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "lodnn-surrogate 1") throw std::runtime_error("surrogate: bad header");
  std::map<std::string, std::string> kv;
  LocalSurrogate s;
  NetworkCertificate& c = s.certificate;
  while (true) {
    if (!std::getline(in, line)) throw std::runtime_error("surrogate: missing network section");
    if (line == "[network]") break;
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw std::runtime_error("surrogate: malformed line " + line);
    std::string key = line.substr(0, sp), value = line.substr(sp + 1);
    if (key.rfind("budget.", 0) == 0)
      c.budget.emplace_back(key.substr(7), parse_double(value));
    else
      kv[key] = value;
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error("surrogate: missing key " + k);
    return it->second;
  };
  auto num = [&](const std::string& k) { return parse_double(get(k)); };
  auto integer = [&](const std::string& k) { return static_cast<long long>(std::stoll(get(k))); };
  {
    std::istringstream g(get("geometry"));
    SurrogateGeometry& geo = s.geometry;
    if (!(g >> geo.d >> geo.nH >> geo.r_eps >> geo.r_h >> geo.ell)) throw std::runtime_error("surrogate: bad geometry");
    std::istringstream dims(get("dims"));
    if (!(dims >> s.m >> s.n >> s.N)) throw std::runtime_error("surrogate: bad dims");
  }
  s.alpha = num("alpha");
  s.beta = num("beta");
  s.eta = num("eta");
  s.plan.theta = num("theta");
  s.plan.gamma = num("gamma");
  s.plan.v_resc = num("v_resc");
  s.plan.vhat_resc = num("vhat_resc");
  s.plan.delta = num("delta");
  s.plan.delta_hat = num("delta_hat");
  s.plan.Yhat_inf = num("Yhat_inf");
  s.plan.Yhat_sup = num("Yhat_sup");
  s.plan.coef_theta = num("coef_theta");
  s.plan.coef_gamma = num("coef_gamma");
  s.bounds.V_inf = num("V_inf");
  s.bounds.V_sup = num("V_sup");
  s.bounds.Vhat_inf = num("Vhat_inf");
  s.bounds.Vhat_sup = num("Vhat_sup");
  s.bounds.norm_I = num("norm_I");
  s.bounds.norm_P = num("norm_P");
  s.bounds.norm_PK = num("norm_PK");
  c.error_bound = num("error_bound");
  c.domain_bound = num("domain_bound");
  c.tolerance = num("tolerance");
  c.depth = static_cast<int>(integer("depth"));
  c.params = static_cast<std::size_t>(integer("params"));
  c.accounted_depth = static_cast<int>(integer("accounted_depth"));
  c.accounted_params = static_cast<std::size_t>(integer("accounted_params"));
  c.target = get("target");
  c.domain = get("domain");
  s.net = load_network(in);
  if (s.net.input_dim() != s.m || s.net.output_dim() != s.N * (1 << s.geometry.d))
    throw std::runtime_error("surrogate: network dimensions do not match the geometry");
  if (s.net.depth() != c.depth || s.net.num_params() != c.params)
    throw std::runtime_error("surrogate: network does not match its certificate");
  ReferencePatch ref = reference_patch(s.geometry);
  if (ref.m != s.m || ref.n != s.n || ref.N != s.N) throw std::runtime_error("surrogate: geometry is inconsistent");
  return s;
}

void save_surrogate(const LocalSurrogate& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  save_surrogate(s, out);
  if (!out) throw std::runtime_error("failed writing " + path);
}

LocalSurrogate load_surrogate(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_surrogate(in);
}

}  // namespace lodnn
