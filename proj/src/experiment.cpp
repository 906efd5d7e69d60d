#include "lodnn/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "lodnn/arithmetic.hpp"
#include "lodnn/lod.hpp"
#include "lodnn/network.hpp"
#include "lodnn/parallel.hpp"
#include "lodnn/rng.hpp"
#include "lodnn/surrogate.hpp"

namespace lodnn {

namespace {

using json = nlohmann::json;
using Row = std::vector<std::pair<std::string, Cell>>;

template <class T>
T field(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + key + ": wrong type");
  }
}

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path + ": " + message);
}

/// Counter-based random source: draw k of stream s is a pure function of (seed, s, k).
class Draws {
 public:
  Draws(std::uint64_t seed, std::uint64_t stream, std::uint64_t start = 0) : rng_(seed), stream_(stream), next_(start) {}
  double uniform(double lo, double hi) { return rng_.uniform(stream_, next_++, lo, hi); }
  int integer(int lo, int hi) {
    return std::min(hi, lo + static_cast<int>(uniform(0.0, 1.0) * (hi - lo + 1)));
  }
  bool coin(double p) { return uniform(0.0, 1.0) < p; }

 private:
  Philox rng_;
  std::uint64_t stream_;
  std::uint64_t next_;
};

NeuralNetwork random_network(Draws& r, const std::vector<int>& widths) {
  NeuralNetwork net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer(widths[l + 1], widths[l]);
    for (int row = 0; row < widths[l + 1]; ++row) {
      for (int col = 0; col < widths[l]; ++col)
        if (r.coin(0.6)) layer.push(col, r.uniform(-1.0, 1.0));
      layer.end_row(r.coin(0.6) ? r.uniform(-1.0, 1.0) : 0.0);
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::vector<int> random_widths(Draws& r, int depth, int first, int last) {
  std::vector<int> w{first};
  for (int i = 1; i < depth; ++i) w.push_back(r.integer(1, 6));
  w.push_back(last);
  return w;
}

std::vector<double> random_input(Draws& r, int n) {
  std::vector<double> x(n);
  for (double& v : x) v = r.uniform(-2.0, 2.0);
  return x;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const std::vector<double>& a) {
  double m = 0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double dense_lambda(const Eigen::MatrixXd& M, bool largest) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return largest ? es.eigenvalues().maxCoeff() : es.eigenvalues().minCoeff();
}

std::vector<double> difference(std::span<const double> a, std::span<const double> b) {
  std::vector<double> e(a.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = a[i] - b[i];
  return e;
}

const std::vector<int>& coarse_list(const ExperimentConfig& c) {
  if (c.problem.nH.empty()) throw ConfigError("problem.nH: required for study " + c.study);
  return c.problem.nH;
}

double smooth_coefficient(const Point& x, int d) {
  double p = 1.0;
  for (int a = 0; a < d; ++a) p *= std::sin(2 * std::numbers::pi * x[a]);
  return 2.0 + p;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  c.raw = j;
  c.study = field<std::string>(j, "study", "", c.study);
  c.samples = field<int>(j, "samples", "", c.samples);
  c.inversion_suite = field<bool>(j, "inversion_suite", "", c.inversion_suite);
  c.with_clod = field<bool>(j, "with_clod", "", c.with_clod);
  c.max_inner_entries = field<long long>(j, "max_inner_entries", "", c.max_inner_entries);
  c.network_path = field<std::string>(j, "network", "", c.network_path);
  c.output = field<std::string>(j, "output", "", c.output);
  c.seed = field<std::uint64_t>(j, "seed", "", c.seed);
  c.threads = field<int>(j, "threads", "", c.threads);
  c.h_levels = field<std::vector<int>>(j, "h_levels", "", c.h_levels);
  require(c.samples >= 1, "samples", "must be positive");
  require(c.threads >= 1, "threads", "must be positive");
  require(c.max_inner_entries >= 1, "max_inner_entries", "must be positive");
  require(!c.h_levels.empty(), "h_levels", "must not be empty");
  for (int r : c.h_levels) require(r >= 2 && c.h_levels.back() % r == 0, "h_levels", "need values >= 2 dividing the last");

  if (j.contains("problem")) {
    const json& p = j.at("problem");
    require(p.is_object(), "problem", "expected an object");
    ProblemConfig& q = c.problem;
    q.d = field<int>(p, "d", "problem.", q.d);
    q.nH = field<std::vector<int>>(p, "nH", "problem.", q.nH);
    q.r_eps = field<int>(p, "r_eps", "problem.", q.r_eps);
    q.r_h = field<int>(p, "r_h", "problem.", q.r_h);
    if (p.contains("n_eps")) q.n_eps = field<int>(p, "n_eps", "problem.", 0);
    if (p.contains("n_h")) q.n_h = field<int>(p, "n_h", "problem.", 0);
    q.alpha = field<double>(p, "alpha", "problem.", q.alpha);
    q.beta = field<double>(p, "beta", "problem.", q.beta);
    q.f = field<std::string>(p, "f", "problem.", q.f);
    q.coefficient = field<std::string>(p, "coefficient", "problem.", q.coefficient);
    q.coefficient_path = field<std::string>(p, "coefficient_path", "problem.", q.coefficient_path);
    require(q.d >= 1 && q.d <= 3, "problem.d", "must be 1, 2 or 3");
    for (int n : q.nH) require(n >= 1, "problem.nH", "entries must be positive");
    require(q.r_eps >= 1, "problem.r_eps", "must be positive");
    require(q.r_h >= 2, "problem.r_h", "must be at least 2");
    require(q.n_eps.has_value() == q.n_h.has_value(), "problem.n_eps", "n_eps and n_h must be given together");
    if (q.n_eps) {
      require(*q.n_h % *q.n_eps == 0 && *q.n_h / *q.n_eps >= 2, "problem.n_h", "must be a multiple >= 2 of n_eps");
      for (int n : q.nH) require(*q.n_eps % n == 0, "problem.n_eps", "must be a multiple of every nH");
    }
    require(q.alpha > 0 && q.beta >= q.alpha, "problem.alpha", "need 0 < alpha <= beta");
    require(q.f == "one" || q.f == "linear" || q.f == "sine", "problem.f", "must be one, linear or sine");
    require(q.coefficient == "random" || q.coefficient == "smooth" || q.coefficient == "file", "problem.coefficient",
            "must be random, smooth or file");
    require(q.coefficient != "file" || !q.coefficient_path.empty(), "problem.coefficient_path",
            "required for file coefficients");
    if (q.coefficient == "smooth") require(q.alpha <= 1.0 && q.beta >= 3.0, "problem.alpha", "smooth coefficient needs [alpha, beta] to contain [1, 3]");
  }
  if (j.contains("lod")) {
    const json& l = j.at("lod");
    require(l.is_object(), "lod", "expected an object");
    c.ell.rule = field<std::string>(l, "ell_rule", "lod.", c.ell.rule);
    c.ell.value = field<int>(l, "ell", "lod.", c.ell.value);
    c.ell.list = field<std::vector<int>>(l, "ell_list", "lod.", c.ell.list);
    require(c.ell.rule == "log" || c.ell.rule == "ln" || c.ell.rule == "fixed", "lod.ell_rule",
            "must be log, ln or fixed");
    require(c.ell.value >= 1, "lod.ell", "must be positive");
    for (int v : c.ell.list) require(v >= 1, "lod.ell_list", "entries must be positive");
  }
  if (j.contains("surrogate")) {
    const json& s = j.at("surrogate");
    require(s.is_object(), "surrogate", "expected an object");
    c.eta.rule = field<std::string>(s, "eta_rule", "surrogate.", c.eta.rule);
    c.eta.value = field<double>(s, "eta", "surrogate.", c.eta.value);
    c.eta.k = field<double>(s, "k", "surrogate.", c.eta.k);
    c.eta.list = field<std::vector<double>>(s, "eta_list", "surrogate.", c.eta.list);
    require(c.eta.rule == "power" || c.eta.rule == "fixed" || c.eta.rule == "oracle", "surrogate.eta_rule",
            "must be power, fixed or oracle");
    require(c.eta.value > 0 && c.eta.value <= 0.25, "surrogate.eta", "must lie in (0, 1/4]");
    require(c.eta.k > 0, "surrogate.k", "must be positive");
    for (double e : c.eta.list) require(e > 0 && e <= 0.25, "surrogate.eta_list", "entries must lie in (0, 1/4]");
  }
  static const std::vector<std::string> studies{"ell-sweep",         "H-sweep",        "h-sweep", "eig-study",
                                                "nn-calculus-suite", "local-contract", "compare", "solve-lod"};
  require(std::find(studies.begin(), studies.end(), c.study) != studies.end(), "study",
          "unknown study kind " + c.study);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

void Table::add(const std::vector<std::pair<std::string, Cell>>& row) {
  if (rows.empty() && columns.empty()) {
    for (const auto& [name, value] : row) columns.push_back(name);
  }
  if (row.size() != columns.size()) throw std::logic_error("table: row does not match the schema");
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i].first != columns[i]) throw std::logic_error("table: column " + row[i].first + " out of order");
    if (const double* v = std::get_if<double>(&row[i].second); v && !std::isfinite(*v))
      throw std::logic_error("table: non-finite metric " + row[i].first);
    cells.push_back(row[i].second);
  }
  rows.push_back(std::move(cells));
}

std::optional<double> Table::number(std::size_t row, const std::string& column) const {
  auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw std::out_of_range("table: no column " + column);
  const Cell& c = rows.at(row)[it - columns.begin()];
  if (const double* d = std::get_if<double>(&c)) return *d;
  if (const long long* i = std::get_if<long long>(&c)) return static_cast<double>(*i);
  return std::nullopt;
}

std::string Table::text(std::size_t row, const std::string& column) const {
  auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw std::out_of_range("table: no column " + column);
  return format_cell(rows.at(row)[it - columns.begin()]);
}

std::string format_cell(const Cell& c) {
  if (const std::string* s = std::get_if<std::string>(&c)) return *s;
  char buf[64];
  std::to_chars_result r;
  if (const long long* i = std::get_if<long long>(&c))
    r = std::to_chars(buf, buf + sizeof buf, *i);
  else
    r = std::to_chars(buf, buf + sizeof buf, std::get<double>(c));
  return std::string(buf, r.ptr);
}

std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::string cell = format_cell(row[i]);
      if (cell.find_first_of(",\"\n") != std::string::npos) {
        std::string q = "\"";
        for (char ch : cell) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        cell = q + "\"";
      }
      out += (i ? "," : "") + cell;
    }
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MeshHierarchy problem_mesh(const ProblemConfig& p, int nH) {
  if (p.coefficient == "file") {
    MeshHierarchy m = load_coefficient_file(p.coefficient_path).mesh;
    if (m.nH() != nH) throw ConfigError("problem.nH: coefficient file has nH = " + std::to_string(m.nH()));
    return m;
  }
  if (p.n_eps) return MeshHierarchy(p.d, nH, *p.n_eps / nH, *p.n_h / *p.n_eps);
  return MeshHierarchy(p.d, nH, p.r_eps, p.r_h);
}

CoefficientField problem_coefficient(const ProblemConfig& p, const MeshHierarchy& mesh, std::uint64_t seed) {
  if (p.coefficient == "file") {
    CoefficientField f = load_coefficient_file(p.coefficient_path);
    if (!(f.mesh == mesh)) throw ConfigError("problem.coefficient_path: mesh does not match");
    return f;
  }
  if (p.coefficient == "random") return random_coefficient(mesh, p.alpha, p.beta, seed);
  CoefficientField f{mesh, {}, p.alpha, p.beta};
  int d = mesh.dim();
  double eps = mesh.eps();
  MultiIndex ext = mesh.element_extent(Level::eps);
  for (int i = 0; i < mesh.num_elements(Level::eps); ++i) {
    MultiIndex m = multi_index(i, ext, d);
    Point x{0, 0, 0};
    for (int a = 0; a < d; ++a) x[a] = (m[a] + 0.5) * eps;
    f.values.push_back(smooth_coefficient(x, d));
  }
  f.validate();
  return f;
}

ScalarFunction problem_rhs(const ProblemConfig& p) {
  if (p.f == "linear") return [](const Point& x) { return 1.0 + x[0]; };
  if (p.f == "sine") return [](const Point& x) { return std::sin(std::numbers::pi * x[0]) + x[1]; };
  return [](const Point&) { return 1.0; };
}

int resolve_ell(const EllRule& rule, double H) {
  if (rule.rule == "fixed") return rule.value;
  if (rule.rule == "ln") return static_cast<int>(std::ceil(std::abs(std::log(H)))) + 1;
  return default_ell(H);
}

double resolve_eta(const EtaRule& rule, double H) {
  if (rule.rule == "fixed") return rule.value;
  if (rule.rule == "oracle") return 0.0;
  return std::pow(H, rule.k);
}

std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  if (lx.size() < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= lx.size();
  my /= ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0) return std::nullopt;
  return sxy / sxx;
}

Table run_ell_sweep(const ExperimentConfig& c) {
  int nH = coarse_list(c).front();
  MeshHierarchy mesh = problem_mesh(c.problem, nH);
  CoefficientField A = problem_coefficient(c.problem, mesh, c.seed);
  ScalarFunction f = problem_rhs(c.problem);
  std::vector<int> ells = c.ell.list;
  if (ells.empty()) ells = {1, 2, 3, 4, 5};
  SparseMatrix Sh = assemble_global_stiffness(A);
  SparseMatrix Mc = assemble_mass(mesh, Level::coarse);
  std::vector<double> rhs = load_vector(f, Level::coarse, mesh);
  std::vector<double> uh = solve_fine_reference(Sh, load_vector(f, Level::fine, mesh));
  Table t;
  for (int ell : ells) {
    std::vector<double> upg = solve_coarse(assemble_pg_global(A, ell, c.threads), rhs);
    std::vector<double> uc = solve_coarse(assemble_clod_global(corrected_basis(A, ell, c.threads), Sh), rhs);
    t.add({{"study", c.study},
           {"status", std::string("ok")},
           {"H", mesh.H()},
           {"h", mesh.h()},
           {"eps", mesh.eps()},
           {"ell", static_cast<long long>(ell)},
           {"seed", static_cast<long long>(c.seed)},
           {"clod_pg_l2", weighted_norm(Mc, difference(uc, upg))},
           {"pg_error_l2", l2_distance_fine_coarse(mesh, uh, upg)},
           {"clod_error_l2", l2_distance_fine_coarse(mesh, uh, uc)}});
  }
  return t;
}

Table run_H_sweep(const ExperimentConfig& c) {
  ScalarFunction f = problem_rhs(c.problem);
  Table t;
  for (int nH : coarse_list(c)) {
    MeshHierarchy mesh = problem_mesh(c.problem, nH);
    CoefficientField A = problem_coefficient(c.problem, mesh, c.seed);
    int ell = resolve_ell(c.ell, mesh.H());
    SparseMatrix Sh = assemble_global_stiffness(A);
    std::vector<double> uh = solve_fine_reference(Sh, load_vector(f, Level::fine, mesh));
    std::vector<double> rhs = load_vector(f, Level::coarse, mesh);
    std::vector<double> upg = solve_coarse(assemble_pg_global(A, ell, c.threads), rhs);
    double clod = 0.0;
    if (c.with_clod) {
      std::vector<double> uc = solve_coarse(assemble_clod_global(corrected_basis(A, ell, c.threads), Sh), rhs);
      clod = l2_distance_fine_coarse(mesh, uh, uc);
    }
    t.add({{"study", c.study},
           {"status", std::string("ok")},
           {"H", mesh.H()},
           {"h", mesh.h()},
           {"eps", mesh.eps()},
           {"ell", static_cast<long long>(ell)},
           {"seed", static_cast<long long>(c.seed)},
           {"pg_error_l2", l2_distance_fine_coarse(mesh, uh, upg)},
           {"clod_error_l2", clod},
           {"fine_l2", weighted_norm(assemble_mass(mesh, Level::fine), uh)}});
  }
  return t;
}

Table run_h_sweep(const ExperimentConfig& c) {
  int nH = coarse_list(c).front();
  const ProblemConfig& p = c.problem;
  ScalarFunction f = problem_rhs(p);
  int finest = c.h_levels.back();
  int r_eps = p.n_eps ? *p.n_eps / nH : p.r_eps;
  MeshHierarchy ref_mesh(p.d, nH, r_eps, finest);
  auto solve = [&](const MeshHierarchy& mesh) {
    SparseMatrix S = p.coefficient == "smooth"
                         ? assemble_global_stiffness(mesh, [d = p.d](const Point& x) { return smooth_coefficient(x, d); })
                         : assemble_global_stiffness(problem_coefficient(p, mesh, c.seed));
    return solve_fine_reference(S, load_vector(f, Level::fine, mesh));
  };
  std::vector<double> u_ref = solve(ref_mesh);
  SparseMatrix K1 = assemble_global_stiffness(constant_coefficient(ref_mesh, 1.0));
  SparseMatrix M1 = assemble_mass(ref_mesh, Level::fine);
  Table t;
  for (int r : c.h_levels) {
    if (r == finest) continue;
    MeshHierarchy mesh(p.d, nH, r_eps, r);
    std::vector<double> u = solve(mesh);
    MeshHierarchy bridge(p.d, nH * r_eps * r, 1, finest / r);
    std::vector<double> e = difference(u_ref, global_prolongation(bridge).multiply(u));
    t.add({{"study", c.study},
           {"status", std::string("ok")},
           {"H", mesh.H()},
           {"h", mesh.h()},
           {"eps", mesh.eps()},
           {"h_ref", ref_mesh.h()},
           {"seed", static_cast<long long>(c.seed)},
           {"h1_error", weighted_norm(K1, e)},
           {"l2_error", weighted_norm(M1, e)}});
  }
  return t;
}

Table run_eig_study(const ExperimentConfig& c) {
  Table t;
  for (int nH : coarse_list(c)) {
    MeshHierarchy mesh = problem_mesh(c.problem, nH);
    CoefficientField A = problem_coefficient(c.problem, mesh, c.seed);
    int ell = resolve_ell(c.ell, mesh.H());
    int d = mesh.dim();
    double Hd = std::pow(mesh.H(), d), h = mesh.h();
    SparseMatrix Sh = assemble_global_stiffness(A);
    Eigen::MatrixXd Sc = assemble_clod_global(corrected_basis(A, ell, c.threads), Sh);
    Eigen::MatrixXd Shd = Sh.to_dense();
    Eigen::MatrixXd Mc = assemble_mass(mesh, Level::coarse).to_dense();
    Draws r(c.seed, streams::test_vectors, static_cast<std::uint64_t>(nH) << 32);
    double lo = INFINITY, hi = 0.0;
    for (int k = 0; k < c.samples; ++k) {
      Eigen::VectorXd v(Mc.rows());
      for (int i = 0; i < v.size(); ++i) v(i) = r.uniform(-1.0, 1.0);
      double q = v.dot(Mc * v) / (Hd * v.squaredNorm());
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    t.add({{"study", c.study},
           {"status", std::string("ok")},
           {"H", mesh.H()},
           {"h", h},
           {"eps", mesh.eps()},
           {"ell", static_cast<long long>(ell)},
           {"seed", static_cast<long long>(c.seed)},
           {"clod_lambda_min_over_Hd", dense_lambda(Sc, false) / Hd},
           {"clod_lambda_max", dense_lambda(Sc, true)},
           {"fine_lambda_min_scaled", dense_lambda(Shd, false) * std::pow(h, -d)},
           {"fine_lambda_max_scaled", dense_lambda(Shd, true) * std::pow(h, 2 - d)},
           {"mass_ratio_min", lo},
           {"mass_ratio_max", hi}});
  }
  return t;
}

Table run_nn_suite(const ExperimentConfig& c) {
  Table t;
  auto row = [&](const std::string& check, long long n, double delta, double theta, long long cases, long long failures,
                 double max_error) {
    t.add({{"study", c.study},
           {"status", std::string("ok")},
           {"check", check},
           {"n", n},
           {"delta", delta},
           {"theta", theta},
           {"seed", static_cast<long long>(c.seed)},
           {"cases", cases},
           {"failures", failures},
           {"max_error", max_error}});
  };
  const int cases = c.samples;
  {
    Draws r(c.seed, streams::test_matrices, 0);
    long long fail = 0;
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
      int n = r.integer(1, 8), depth = r.integer(2, 4);
      NeuralNetwork id = identity_network(n, depth);
      std::vector<double> x = random_input(r, n);
      double err = max_abs_diff(realize(id, x), x);
      worst = std::max(worst, err);
      fail += err != 0.0 || id.depth() != depth || id.num_params() != static_cast<std::size_t>(2 * n * depth);
    }
    row("identity", 0, 0, 0, cases, fail, worst);
  }
  {
    Draws r(c.seed, streams::test_matrices, 1ULL << 40);
    long long fail = 0;
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
      int mid = r.integer(1, 6), in = r.integer(1, 6), out = r.integer(1, 6);
      NeuralNetwork outer = random_network(r, random_widths(r, r.integer(1, 3), mid, out));
      NeuralNetwork inner = random_network(r, random_widths(r, r.integer(1, 3), in, mid));
      std::vector<double> x = random_input(r, in);
      std::vector<double> expect = realize(outer, realize(inner, x));
      std::size_t M1 = outer.num_params(), M2 = inner.num_params();
      int L1 = outer.depth(), L2 = inner.depth();
      NeuralNetwork s = sparse_concat(outer, inner);
      double err = max_abs_diff(realize(s, x), expect) / std::max(1.0, max_abs(expect));
      worst = std::max(worst, err);
      fail += s.depth() != L1 + L2 || s.num_params() > 2 * M1 + 2 * M2 || err > 1e-12;
    }
    row("sparse_concat", 0, 0, 0, cases, fail, worst);
  }
  {
    Draws r(c.seed, streams::test_matrices, 2ULL << 40);
    long long fail = 0;
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
      int count = r.integer(2, 4), depth = r.integer(1, 3);
      bool shared = r.coin(0.5);
      int shared_in = r.integer(1, 5);
      std::vector<NeuralNetwork> nets;
      std::size_t M = 0;
      std::vector<double> x, expect;
      std::vector<double> xs = random_input(r, shared_in);
      for (int i = 0; i < count; ++i) {
        int in = shared ? shared_in : r.integer(1, 5);
        nets.push_back(random_network(r, random_widths(r, depth, in, r.integer(1, 5))));
        M += nets.back().num_params();
        std::vector<double> xi = shared ? xs : random_input(r, in);
        if (!shared) x.insert(x.end(), xi.begin(), xi.end());
        std::vector<double> yi = realize(nets.back(), xi);
        expect.insert(expect.end(), yi.begin(), yi.end());
      }
      if (shared) x = xs;
      NeuralNetwork p = parallelize(nets, shared);
      double err = max_abs_diff(realize(p, x), expect);
      worst = std::max(worst, err);
      fail += p.num_params() != M || p.depth() != depth || err > 1e-12;
    }
    row("parallelize", 0, 0, 0, cases, fail, worst);
  }
  {
    Draws r(c.seed, streams::test_matrices, 3ULL << 40);
    long long fail = 0;
    double worst = 0;
    for (int k = 0; k < cases; ++k) {
      int in = r.integer(1, 6), out = r.integer(1, 6);
      NeuralNetwork net = random_network(r, random_widths(r, r.integer(1, 3), in, out));
      std::vector<int> perm(out);
      for (int i = 0; i < out; ++i) perm[i] = i;
      for (int i = out - 1; i > 0; --i) std::swap(perm[i], perm[r.integer(0, i)]);
      std::vector<Triplet> trip;
      for (int i = 0; i < out; ++i) trip.push_back({i, perm[i], 1.0});
      NeuralNetwork Q = affine_network(SparseMatrix::from_triplets(out, out, trip), std::vector<double>(out, 0.0));
      std::vector<double> x = random_input(r, in);
      std::vector<double> y = realize(net, x), expect(out);
      for (int i = 0; i < out; ++i) expect[i] = y[perm[i]];
      NeuralNetwork pq = concat(Q, net);
      double err = max_abs_diff(realize(pq, x), expect);
      worst = std::max(worst, err);
      fail += pq.depth() != net.depth() || pq.num_params() != net.num_params() || err > 1e-12;
    }
    row("permutation", 0, 0, 0, cases, fail, worst);
  }
  if (c.inversion_suite) {
    std::uint64_t block = 4;
    for (int n = 2; n <= 6; ++n)
      for (double delta : {0.25, 0.5})
        for (double theta : {0.1, 0.01}) {
          InversionNetwork inv = inversion_network(n, delta, theta, true);
          Draws r(c.seed, streams::test_matrices, (block++) << 40);
          long long fail = 0;
          double worst = 0;
          for (int k = 0; k < cases; ++k) {
            Eigen::MatrixXd G(n, n);
            for (int i = 0; i < G.size(); ++i) G.data()[i] = r.uniform(-1.0, 1.0);
            Eigen::MatrixXd A = 0.5 * (G + G.transpose());
            double norm = spectral_norm(A);
            // every fourth sample sits on the boundary of the admissible ball
            double radius = (1 - delta) * (k % 4 == 0 ? 1.0 : r.uniform(0.0, 1.0));
            A *= radius / norm;
            A = 0.5 * (A + A.transpose());
            Eigen::MatrixXd out = mat(realize(inv.net, vec(A)), n, n);
            Eigen::MatrixXd exact = (Eigen::MatrixXd::Identity(n, n) - A).inverse();
            double err = spectral_norm(out - exact);
            worst = std::max(worst, err / theta);
            bool symmetric = (out - out.transpose()).cwiseAbs().maxCoeff() == 0.0;
            fail += err > theta || spectral_norm(out) > theta + 1 / delta || !symmetric;
          }
          row("inversion", n, delta, theta, cases, fail, worst);
        }
  }
  return t;
}

Table run_local_contract(const ExperimentConfig& c) {
  const ProblemConfig& p = c.problem;
  std::vector<int> ells = c.ell.list.empty() ? std::vector<int>{c.ell.value} : c.ell.list;
  std::vector<double> etas = c.eta.list.empty() ? std::vector<double>{c.eta.value} : c.eta.list;
  Table t;
  for (int ell : ells)
    for (double eta : etas) {
      int nH = p.nH.empty() ? 2 * ell + 3 : p.nH.front();
      SurrogateGeometry g{p.d, nH, p.r_eps, p.r_h, ell};
      Row row{{"study", c.study}, {"status", std::string("ok")}, {"H", 1.0 / nH},
              {"h", 1.0 / (nH * p.r_eps * p.r_h)}, {"eps", 1.0 / (nH * p.r_eps)}, {"ell", static_cast<long long>(ell)},
              {"eta", eta}, {"seed", static_cast<long long>(c.seed)}};
      Row metrics{{"m", 0LL},           {"n", 0LL},          {"N", 0LL},     {"theta", 0.0},
                  {"gamma", 0.0},       {"error_bound", 0.0}, {"depth", 0LL}, {"params", 0LL},
                  {"accounted_depth", 0LL}, {"accounted_params", 0LL}, {"samples", 0LL}, {"failures", 0LL},
                  {"max_error", 0.0}};
      try {
        LocalSurrogate s = build_pg_network(g, p.alpha, p.beta, eta, c.max_inner_entries);
        ReferencePatch ref = reference_patch(g);
        MeshHierarchy mesh = g.mesh();
        Philox rng(c.seed);
        auto errors = parallel_map(c.samples, c.threads, [&](int k) {
          std::vector<double> a(s.m);
          for (int i = 0; i < s.m; ++i)
            a[i] = rng.uniform(streams::coefficient, static_cast<std::uint64_t>(k) * s.m + i, p.alpha, p.beta);
          Eigen::MatrixXd exact = local_pg_matrix(ref.ops, assemble_stiffness(ref.ops.patch, mesh, a));
          return spectral_norm(surrogate_local_matrix(s, a) - exact);
        });
        long long fail = 0;
        double worst = 0;
        for (double e : errors) {
          worst = std::max(worst, e);
          fail += e > eta;
        }
        metrics = {{"m", static_cast<long long>(s.m)},
                   {"n", static_cast<long long>(s.n)},
                   {"N", static_cast<long long>(s.N)},
                   {"theta", s.plan.theta},
                   {"gamma", s.plan.gamma},
                   {"error_bound", s.certificate.error_bound},
                   {"depth", static_cast<long long>(s.net.depth())},
                   {"params", static_cast<long long>(s.net.num_params())},
                   {"accounted_depth", static_cast<long long>(s.certificate.accounted_depth)},
                   {"accounted_params", static_cast<long long>(s.certificate.accounted_params)},
                   {"samples", static_cast<long long>(c.samples)},
                   {"failures", fail},
                   {"max_error", worst}};
      } catch (const std::exception& e) {
        row[1].second = std::string("infeasible: ") + e.what();
      }
      row.insert(row.end(), metrics.begin(), metrics.end());
      t.add(row);
    }
  return t;
}

Table run_compare(const ExperimentConfig& c) {
  ScalarFunction f = problem_rhs(c.problem);
  Table t;
  for (int nH : coarse_list(c)) {
    MeshHierarchy mesh = problem_mesh(c.problem, nH);
    CoefficientField A = problem_coefficient(c.problem, mesh, c.seed);
    int ell = resolve_ell(c.ell, mesh.H());
    double eta = resolve_eta(c.eta, mesh.H());
    Row row{{"study", c.study},   {"status", std::string("ok")}, {"H", mesh.H()},
            {"h", mesh.h()},      {"eps", mesh.eps()},           {"ell", static_cast<long long>(ell)},
            {"eta", eta},         {"seed", static_cast<long long>(c.seed)}};
    std::string mode = c.eta.rule == "oracle" ? "oracle" : "network";
    std::optional<LocalSurrogate> s;
    try {
      if (mode == "network") {
        if (nH < 2 * ell + 3) {
          mode = "fallback";
        } else if (!c.network_path.empty()) {
          s = load_surrogate(c.network_path);
          check_compatible(*s, A, ell);
        } else {
          if (!(eta <= 0.25)) throw std::invalid_argument("eta = " + format_cell(eta) + " exceeds 1/4");
          SurrogateGeometry g{mesh.dim(), nH, mesh.r_eps(), mesh.r_h(), ell};
          s = build_pg_network(g, c.problem.alpha, c.problem.beta, eta, c.max_inner_entries);
        }
      }
      CompareReport r = compare_solutions(A, f, ell, s ? &*s : nullptr, c.threads, c.with_clod);
      row.insert(row.end(), {{"mode", mode},
                             {"network_patches", static_cast<long long>(r.network_patches)},
                             {"params", static_cast<long long>(s ? s->net.num_params() : 0)},
                             {"l2_gap", r.l2},
                             {"coef_l2_gap", r.coef_l2},
                             {"coef_scaled_gap", r.coef_scaled},
                             {"stiffness_gap", r.stiffness_gap},
                             {"patch_error_sum", r.patch_error_sum},
                             {"patch_error_max", r.patch_error_max},
                             {"pg_l2", r.pg_l2},
                             {"clod_pg_l2", r.clod_gap.value_or(0.0)}});
    } catch (const std::exception& e) {
      row[1].second = std::string("infeasible: ") + e.what();
      row.insert(row.end(), {{"mode", mode},
                             {"network_patches", 0LL},
                             {"params", 0LL},
                             {"l2_gap", 0.0},
                             {"coef_l2_gap", 0.0},
                             {"coef_scaled_gap", 0.0},
                             {"stiffness_gap", 0.0},
                             {"patch_error_sum", 0.0},
                             {"patch_error_max", 0.0},
                             {"pg_l2", 0.0},
                             {"clod_pg_l2", 0.0}});
    }
    t.add(row);
  }
  return t;
}

Table run_solve_lod(const ExperimentConfig& c) {
  ScalarFunction f = problem_rhs(c.problem);
  Table t;
  for (int nH : coarse_list(c)) {
    MeshHierarchy mesh = problem_mesh(c.problem, nH);
    CoefficientField A = problem_coefficient(c.problem, mesh, c.seed);
    int ell = resolve_ell(c.ell, mesh.H());
    SparseMatrix Sh = assemble_global_stiffness(A);
    std::vector<double> uh = solve_fine_reference(Sh, load_vector(f, Level::fine, mesh));
    std::vector<double> rhs = load_vector(f, Level::coarse, mesh);
    Eigen::MatrixXd Spg = assemble_pg_global(A, ell, c.threads).to_dense();
    Eigen::MatrixXd Sc = assemble_clod_global(corrected_basis(A, ell, c.threads), Sh);
    std::vector<double> upg = solve_coarse(Spg, rhs), uc = solve_coarse(Sc, rhs);
    t.add({{"study", c.study},
           {"status", std::string("ok")},
           {"H", mesh.H()},
           {"h", mesh.h()},
           {"eps", mesh.eps()},
           {"ell", static_cast<long long>(ell)},
           {"seed", static_cast<long long>(c.seed)},
           {"pg_error_l2", l2_distance_fine_coarse(mesh, uh, upg)},
           {"clod_error_l2", l2_distance_fine_coarse(mesh, uh, uc)},
           {"pg_clod_matrix_gap_max", (Spg - Sc).cwiseAbs().maxCoeff()},
           {"pg_clod_l2", weighted_norm(assemble_mass(mesh, Level::coarse), difference(uc, upg))}});
  }
  return t;
}

Table run_study(const ExperimentConfig& c) {
  if (c.study == "ell-sweep") return run_ell_sweep(c);
  if (c.study == "H-sweep") return run_H_sweep(c);
  if (c.study == "h-sweep") return run_h_sweep(c);
  if (c.study == "eig-study") return run_eig_study(c);
  if (c.study == "nn-calculus-suite") return run_nn_suite(c);
  if (c.study == "local-contract") return run_local_contract(c);
  if (c.study == "compare") return run_compare(c);
  if (c.study == "solve-lod") return run_solve_lod(c);
  throw ConfigError("study: unknown study kind " + c.study);
}

}  // namespace lodnn
