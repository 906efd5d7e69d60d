#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lodnn/arithmetic.hpp"
#include "lodnn/fem.hpp"
#include "lodnn/lod.hpp"

namespace lodnn {

/// Mesh parameters and patch size a surrogate is built for. All interior
/// patches of such a mesh share the same local matrices.
struct SurrogateGeometry {
  int d = 1;
  int nH = 5;
  int r_eps = 2;
  int r_h = 2;
  int ell = 1;

  MeshHierarchy mesh() const { return MeshHierarchy(d, nH, r_eps, r_h); }
  bool operator==(const SurrogateGeometry& other) const = default;
};

/// Operators of the reference interior patch (the first one in element order).
struct ReferencePatch {
  LocalOperators ops;
  SparseMatrix U;
  int m = 0;  // coefficient cells
  int n = 0;  // fine inner nodes
  int N = 0;  // coarse nodes
};

/// Throws if the mesh has no interior patch for this ell.
ReferencePatch reference_patch(const SurrogateGeometry& geometry);

/// Largest or smallest eigenvalue of a symmetric positive definite matrix by
/// (inverse) power iteration, stopped once ||M v - rho v|| <= tol * rho.
/// Throws after max_iter iterations.
double extreme_eigenvalue(const Eigen::MatrixXd& M, bool largest, double tol = 1e-8, int max_iter = 200000);

/// Class-wide spectral bounds for coefficients with values in [alpha, beta].
/// V bounds enclose spec(S), Vhat bounds enclose spec(I S^-1 I^T).
struct SpectralBounds {
  double V_inf = 0.0;
  double V_sup = 0.0;
  double Vhat_inf = 0.0;
  double Vhat_sup = 0.0;
  double norm_I = 0.0;
  double norm_P = 0.0;
  double norm_PK = 0.0;
};

/// Extremal values come from the constant coefficients alpha and beta and are
/// padded outward by 1%; norms are padded by 1e-6 relative.
SpectralBounds estimate_spectral_bounds(const ReferencePatch& ref, double alpha, double beta);

/// Inner tolerances and rescalings of both inversion steps.
struct TolerancePlan {
  double theta = 0.0;
  double gamma = 0.0;
  double v_resc = 0.0;
  double vhat_resc = 0.0;
  double delta = 0.0;
  double delta_hat = 0.0;
  /// Bounds on spec of the approximate Y fed into the second inversion.
  double Yhat_inf = 0.0;
  double Yhat_sup = 0.0;
  /// Coefficients of theta and gamma in the end-to-end error bound.
  double coef_theta = 0.0;
  double coef_gamma = 0.0;
  double error_bound() const { return coef_theta * theta + coef_gamma * gamma; }
};

/// Half of eta goes to each of the two error terms. theta is additionally
/// capped so that the approximate Y stays positive definite.
TolerancePlan split_tolerances(double eta, const SpectralBounds& bounds);

/// The seven building blocks, in order of application.
struct SurrogateSteps {
  std::array<NeuralNetwork, 7> steps;
  InversionNetwork inner_inversion;  // certificate only; net is moved into step 2
  InversionNetwork outer_inversion;  // likewise for step 5
};

SurrogateSteps surrogate_steps(const ReferencePatch& ref, const TolerancePlan& plan);

/// Sparse concatenation of all steps. Accounting of depth and size follows
/// the concatenation rules applied to the blocks.
struct ComposedNetwork {
  NeuralNetwork net;
  int accounted_depth = 0;
  std::size_t accounted_params = 0;
};
ComposedNetwork compose_steps(std::array<NeuralNetwork, 7> steps);

struct LocalSurrogate {
  NeuralNetwork net;
  SurrogateGeometry geometry;
  double alpha = 1.0;
  double beta = 1.0;
  double eta = 0.0;
  SpectralBounds bounds;
  TolerancePlan plan;
  NetworkCertificate certificate;
  int m = 0;
  int n = 0;
  int N = 0;
};

/// Refuses construction when n_ell^2 exceeds max_inner_entries.
LocalSurrogate build_pg_network(const SurrogateGeometry& geometry, double alpha, double beta, double eta,
                                long long max_inner_entries = 10000);

/// Forward pass: mat(realize(net, a), N, 2^d). Rejects coefficients outside
/// [alpha, beta].
Eigen::MatrixXd surrogate_local_matrix(const LocalSurrogate& s, std::span<const double> a);

/// Throws unless the surrogate was built for this mesh, ell and coefficient range.
void check_compatible(const LocalSurrogate& s, const CoefficientField& A, int ell);

void save_surrogate(const LocalSurrogate& s, std::ostream& out);
LocalSurrogate load_surrogate(std::istream& in);
void save_surrogate(const LocalSurrogate& s, const std::string& path);
LocalSurrogate load_surrogate(const std::string& path);

struct SurrogateStiffness {
  SparseMatrix S_nn;
  /// Per coarse element: true if Theta_K came from a forward pass.
  std::vector<bool> from_network;
  /// ||S^pg_omega - Theta_K||_2 per element when audited (0 for fallback patches).
  std::optional<std::vector<double>> per_patch_errors;
};

/// Interior patches use the network, the others the deterministic local
/// matrix. Without a surrogate every patch uses the deterministic path.
SurrogateStiffness assemble_nn_global(const LocalSurrogate* s, const CoefficientField& A, int ell, int workers,
                                      bool audit = false);

struct CompareReport {
  double H = 0.0;
  int ell = 0;
  int network_patches = 0;
  /// ||u^pg - u^nn||_2 of the coefficient vectors and its H^{d/2} scaling.
  double coef_l2 = 0.0;
  double coef_scaled = 0.0;
  /// L2 norm of u^pg - u^nn through the coarse mass matrix.
  double l2 = 0.0;
  double pg_l2 = 0.0;
  /// ||S^nn - S^pg||_2 and the per-patch sum that bounds it.
  double stiffness_gap = 0.0;
  double patch_error_sum = 0.0;
  double patch_error_max = 0.0;
  /// ||u^c - u^pg||_L2, when requested.
  std::optional<double> clod_gap;
};

CompareReport compare_solutions(const CoefficientField& A, const ScalarFunction& f, int ell, const LocalSurrogate* s,
                                int workers, bool with_clod = false);

/// Spectral norm of a dense matrix.
double spectral_norm(const Eigen::MatrixXd& M);

}  // namespace lodnn
