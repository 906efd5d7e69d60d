#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "lodnn/experiment.hpp"
#include "lodnn/surrogate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lodnn;

namespace {

constexpr int kSchemaVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

json environment() {
  return {{"compiler", __VERSION__},
          {"cxx_standard", static_cast<long>(__cplusplus)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
#ifdef NDEBUG
          {"build", "release"},
#else
          {"build", "debug"},
#endif
          {"hardware_threads", std::thread::hardware_concurrency()}};
}

/// Builds the surrogate described by the config for its first coarse resolution.
Table build_network(const ExperimentConfig& c, const fs::path& out) {
  if (c.problem.nH.empty()) throw ConfigError("problem.nH: required for build-network");
  int nH = c.problem.nH.front();
  MeshHierarchy mesh = problem_mesh(c.problem, nH);
  int ell = resolve_ell(c.ell, mesh.H());
  double eta = resolve_eta(c.eta, mesh.H());
  if (c.eta.rule == "oracle") throw ConfigError("surrogate.eta_rule: oracle has no network to build");
  SurrogateGeometry g{mesh.dim(), nH, mesh.r_eps(), mesh.r_h(), ell};
  LocalSurrogate s = build_pg_network(g, c.problem.alpha, c.problem.beta, eta, c.max_inner_entries);
  fs::path file = out / "network.lodnn";
  save_surrogate(s, file.string());
  Table t;
  t.add({{"study", std::string("build-network")},
         {"status", std::string("ok")},
         {"H", mesh.H()},
         {"h", mesh.h()},
         {"eps", mesh.eps()},
         {"ell", static_cast<long long>(ell)},
         {"eta", eta},
         {"seed", static_cast<long long>(c.seed)},
         {"m", static_cast<long long>(s.m)},
         {"n", static_cast<long long>(s.n)},
         {"N", static_cast<long long>(s.N)},
         {"theta", s.plan.theta},
         {"gamma", s.plan.gamma},
         {"error_bound", s.certificate.error_bound},
         {"depth", static_cast<long long>(s.net.depth())},
         {"params", static_cast<long long>(s.net.num_params())}});
  return t;
}

int run(const std::string& command, const std::string& config_path, const std::optional<std::string>& out_flag,
        const std::optional<std::uint64_t>& seed, const std::optional<int>& threads,
        const std::optional<std::string>& network) {
  auto start = std::chrono::steady_clock::now();
  json raw;
  {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot open " + config_path);
    try {
      in >> raw;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  if (!raw.is_object()) throw ConfigError("config: expected a JSON object");
  if (seed) raw["seed"] = *seed;
  if (threads) raw["threads"] = *threads;
  if (out_flag) raw["output"] = *out_flag;
  if (network) raw["network"] = *network;
  if (command == "solve-lod" || command == "local-contract" || command == "compare") raw["study"] = command;
  ExperimentConfig c = parse_config(raw);
  if (!c.network_path.empty() && !fs::exists(c.network_path))
    throw ConfigError("network: missing file " + c.network_path);
  if (c.problem.coefficient == "file" && !fs::exists(c.problem.coefficient_path))
    throw ConfigError("problem.coefficient_path: missing file " + c.problem.coefficient_path);

  fs::path out = c.output;
  fs::create_directories(out);
  Table table = command == "build-network" ? build_network(c, out) : run_study(c);
  std::string csv = to_csv(table);
  write_bytes(out / "results.csv", csv);

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json files = {{"results.csv", hex64(fnv1a64(csv))}};
  if (command == "build-network") files["network.lodnn"] = hex64(fnv1a64(read_bytes(out / "network.lodnn")));
  json manifest = {{"schema_version", kSchemaVersion},
                   {"subcommand", command},
                   {"study", command == "build-network" ? std::string("build-network") : c.study},
                   {"columns", table.columns},
                   {"rows", table.rows.size()},
                   {"config", c.raw},
                   {"seed", c.seed},
                   {"threads", c.threads},
                   {"checksums_fnv1a64", files},
                   {"wall_time_s", wall},
                   {"environment", environment()}};
  write_bytes(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized orthogonal decomposition and explicit ReLU surrogates"};
  app.require_subcommand(1);
  std::string config;
  std::optional<std::string> out, network;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  for (const char* name : {"solve-lod", "build-network", "local-contract", "compare", "study"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--threads", threads, "worker count")->check(CLI::PositiveNumber);
    if (std::string(name) == "compare") sub->add_option("--network", network, "serialized surrogate");
  }
  CLI11_PARSE(app, argc, argv);
  try {
    return run(app.get_subcommands().front()->get_name(), config, out, seed, threads, network);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
