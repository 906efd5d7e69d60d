#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lodnn/fem.hpp"

namespace lodnn {

/// Field-level configuration error; what() starts with the JSON path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProblemConfig {
  int d = 1;
  std::vector<int> nH;
  int r_eps = 2;
  int r_h = 2;
  /// Global eps cells and fine elements per axis; when set they override
  /// r_eps and r_h so that eps and h stay fixed across an H-sweep.
  std::optional<int> n_eps;
  std::optional<int> n_h;
  double alpha = 1.0;
  double beta = 10.0;
  std::string f = "one";              // one | linear | sine
  std::string coefficient = "random";  // random | smooth | file
  std::string coefficient_path;
};

struct EllRule {
  std::string rule = "log";  // log (base 2) | ln | fixed
  int value = 1;
  std::vector<int> list;  // ell-sweep values
};

struct EtaRule {
  std::string rule = "power";  // power (eta = H^k) | fixed | oracle
  double value = 0.1;
  double k = 3.0;
  std::vector<double> list;  // local-contract values
};

struct ExperimentConfig {
  std::string study = "ell-sweep";
  ProblemConfig problem;
  EllRule ell;
  EtaRule eta;
  /// Fine refinement factors of the h-sweep; the last one is the reference.
  std::vector<int> h_levels{2, 4, 8, 16, 32};
  int samples = 20;
  bool inversion_suite = false;
  bool with_clod = false;
  long long max_inner_entries = 10000;
  std::string network_path;
  std::string output = "out";
  std::uint64_t seed = 1;
  int threads = 1;
  nlohmann::json raw;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

using Cell = std::variant<std::string, long long, double>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  /// Appends a row given as (name, value) pairs; the first row fixes the
  /// columns and later rows must repeat them in order.
  void add(const std::vector<std::pair<std::string, Cell>>& row);
  std::optional<double> number(std::size_t row, const std::string& column) const;
  std::string text(std::size_t row, const std::string& column) const;
};

/// Shortest round-trip decimal form.
std::string format_cell(const Cell& c);
std::string to_csv(const Table& t);
std::uint64_t fnv1a64(const std::string& bytes);

/// Meshes and coefficients of a problem for one coarse resolution.
MeshHierarchy problem_mesh(const ProblemConfig& p, int nH);
CoefficientField problem_coefficient(const ProblemConfig& p, const MeshHierarchy& mesh, std::uint64_t seed);
ScalarFunction problem_rhs(const ProblemConfig& p);
int resolve_ell(const EllRule& rule, double H);
double resolve_eta(const EtaRule& rule, double H);

Table run_ell_sweep(const ExperimentConfig& c);
Table run_H_sweep(const ExperimentConfig& c);
Table run_h_sweep(const ExperimentConfig& c);
Table run_eig_study(const ExperimentConfig& c);
Table run_nn_suite(const ExperimentConfig& c);
Table run_local_contract(const ExperimentConfig& c);
Table run_compare(const ExperimentConfig& c);
Table run_solve_lod(const ExperimentConfig& c);

/// Dispatches on c.study.
Table run_study(const ExperimentConfig& c);

/// Least-squares slope of log(y) against log(x); nullopt with fewer than two
/// positive points.
std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lodnn
