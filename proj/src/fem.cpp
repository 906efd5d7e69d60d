#include "lodnn/fem.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lodnn/rng.hpp"

namespace lodnn {

namespace {

struct Quadrature1d {
  std::vector<double> points;   // on [0, 1]
  std::vector<double> weights;  // sum to 1
};

Quadrature1d gauss(int n) {
  if (n == 2) {
    double s = 0.5 / std::sqrt(3.0);
    return {{0.5 - s, 0.5 + s}, {0.5, 0.5}};
  }
  double s = 0.5 * std::sqrt(0.6);
  return {{0.5 - s, 0.5, 0.5 + s}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
}

/// Tensor quadrature on the unit cube: points and weights.
void tensor_rule(int d, const Quadrature1d& q, std::vector<Point>& pts, std::vector<double>& w) {
  int n = static_cast<int>(q.points.size());
  MultiIndex ext{n, n, n};
  int total = product(ext, d);
  pts.assign(total, Point{0, 0, 0});
  w.assign(total, 1.0);
  for (int i = 0; i < total; ++i) {
    MultiIndex m = multi_index(i, ext, d);
    for (int a = 0; a < d; ++a) {
      pts[i][a] = q.points[m[a]];
      w[i] *= q.weights[m[a]];
    }
  }
}

double shape(const MultiIndex& vertex, const Point& xi, int d) {
  double v = 1.0;
  for (int a = 0; a < d; ++a) v *= vertex[a] ? xi[a] : 1.0 - xi[a];
  return v;
}

double shape_derivative(const MultiIndex& vertex, const Point& xi, int d, int axis) {
  double v = 1.0;
  for (int a = 0; a < d; ++a) {
    if (a == axis)
      v *= vertex[a] ? 1.0 : -1.0;
    else
      v *= vertex[a] ? xi[a] : 1.0 - xi[a];
  }
  return v;
}

/// Local inner-node numbering of the fine nodes of a box of fine elements;
/// nodes on the box boundary map to -1.
struct BoxNodes {
  int d;
  Box box;
  MultiIndex inner{1, 1, 1};

  BoxNodes(int dim, const Box& b) : d(dim), box(b) {
    for (int a = 0; a < d; ++a) inner[a] = b.extent(a) - 1;
  }
  int count() const { return product(inner, d); }
  int local(const MultiIndex& node) const {
    MultiIndex m{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      m[a] = node[a] - box.lo[a] - 1;
      if (m[a] < 0 || m[a] >= inner[a]) return -1;
    }
    return linear_index(m, inner, d);
  }
};

/// Loops over the fine elements of a box, giving the element multi-index and
/// the local inner-node numbers of its vertices.
template <class F>
void for_each_box_element(int d, const Box& box, F&& f) {
  BoxNodes nodes(d, box);
  auto offsets = vertex_offsets(d);
  MultiIndex ext{1, 1, 1};
  for (int a = 0; a < d; ++a) ext[a] = box.extent(a);
  int total = product(ext, d);
  std::vector<int> dofs(offsets.size());
  for (int e = 0; e < total; ++e) {
    MultiIndex m = multi_index(e, ext, d);
    for (int a = 0; a < d; ++a) m[a] += box.lo[a];
    for (std::size_t v = 0; v < offsets.size(); ++v) {
      MultiIndex node = m;
      for (int a = 0; a < d; ++a) node[a] += offsets[v][a];
      dofs[v] = nodes.local(node);
    }
    f(m, dofs);
  }
}

Box full_box(const MeshHierarchy& mesh, Level level) {
  Box b;
  for (int a = 0; a < 3; ++a) b.hi[a] = a < mesh.dim() ? mesh.elements_per_axis(level) : 1;
  return b;
}

SparseMatrix assemble_box_stiffness(int d, const Box& box, const Eigen::MatrixXd& kref,
                                    const std::function<double(const MultiIndex&)>& coeff) {
  BoxNodes nodes(d, box);
  std::vector<Triplet> trip;
  int nv = static_cast<int>(kref.rows());
  for_each_box_element(d, box, [&](const MultiIndex& e, const std::vector<int>& dofs) {
    double c = coeff(e);
    for (int a = 0; a < nv; ++a) {
      if (dofs[a] < 0) continue;
      for (int b = 0; b < nv; ++b) {
        if (dofs[b] < 0) continue;
        trip.push_back({dofs[a], dofs[b], c * kref(a, b)});
      }
    }
  });
  int n = nodes.count();
  return SparseMatrix::from_triplets(n, n, std::move(trip));
}

/// Hat-function weights of a fine node index with respect to the two
/// neighbouring coarse nodes along one axis.
void hat_weights_1d(int fine_node, int ratio, int& first, double& w0, double& w1) {
  first = fine_node / ratio;
  int rem = fine_node % ratio;
  w1 = static_cast<double>(rem) / ratio;
  w0 = 1.0 - w1;
}

/// Nonzero coarse hats at a fine node: global coarse node multi-index and value.
std::vector<std::pair<MultiIndex, double>> coarse_hats_at(const MultiIndex& fine_node, int ratio, int d) {
  std::vector<std::pair<MultiIndex, double>> out;
  for (const MultiIndex& o : vertex_offsets(d)) {
    MultiIndex z{0, 0, 0};
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      int first;
      double w0, w1;
      hat_weights_1d(fine_node[a], ratio, first, w0, w1);
      z[a] = first + o[a];
      w *= o[a] ? w1 : w0;
    }
    if (w != 0.0) out.emplace_back(z, w);
  }
  return out;
}

}  // namespace

void CoefficientField::validate() const {
  if (!(alpha > 0.0) || !(beta >= alpha))
    throw std::invalid_argument("coefficient bounds must satisfy 0 < alpha <= beta");
  if (static_cast<int>(values.size()) != mesh.num_elements(Level::eps))
    throw std::invalid_argument("coefficient has " + std::to_string(values.size()) +
                                " values, mesh needs " + std::to_string(mesh.num_elements(Level::eps)));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= alpha && values[i] <= beta))
      throw std::invalid_argument("coefficient value " + std::to_string(values[i]) + " at cell " +
                                  std::to_string(i) + " outside [alpha, beta]");
  }
}

std::vector<double> CoefficientField::restrict_to(const PatchIndex& index) const {
  std::vector<double> a(index.eps_elements.size());
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = values[index.eps_elements[j]];
  return a;
}

double CoefficientField::at_fine_element(const MultiIndex& e) const {
  int d = mesh.dim();
  MultiIndex c{0, 0, 0};
  for (int a = 0; a < d; ++a) c[a] = e[a] / mesh.r_h();
  return values[linear_index(c, mesh.element_extent(Level::eps), d)];
}

CoefficientField constant_coefficient(const MeshHierarchy& mesh, double value) {
  CoefficientField f{mesh, std::vector<double>(mesh.num_elements(Level::eps), value), value, value};
  return f;
}

CoefficientField random_coefficient(const MeshHierarchy& mesh, double alpha, double beta,
                                    std::uint64_t seed) {
  CoefficientField f{mesh, {}, alpha, beta};
  Philox rng(seed);
  int n = mesh.num_elements(Level::eps);
  f.values.resize(n);
  for (int j = 0; j < n; ++j) f.values[j] = rng.uniform(streams::coefficient, j, alpha, beta);
  f.validate();
  return f;
}

CoefficientField load_coefficient_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open coefficient file " + path);
  int d, nH, r_eps, r_h;
  double alpha, beta;
  if (!(in >> d >> nH >> r_eps >> r_h >> alpha >> beta))
    throw std::runtime_error("malformed coefficient header in " + path);
  CoefficientField f{MeshHierarchy(d, nH, r_eps, r_h), {}, alpha, beta};
  double v;
  while (in >> v) f.values.push_back(v);
  if (!in.eof()) throw std::runtime_error("malformed coefficient value in " + path);
  f.validate();
  return f;
}

void save_coefficient_file(const CoefficientField& field, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write coefficient file " + path);
  out.precision(std::numeric_limits<double>::max_digits10);
  const MeshHierarchy& m = field.mesh;
  out << m.dim() << ' ' << m.nH() << ' ' << m.r_eps() << ' ' << m.r_h() << ' ' << field.alpha << ' '
      << field.beta << '\n';
  for (double v : field.values) out << v << '\n';
}

ElementMatrices q1_element_matrices(int d, double h) {
  std::vector<Point> pts;
  std::vector<double> w;
  tensor_rule(d, gauss(2), pts, w);
  auto verts = vertex_offsets(d);
  int nv = static_cast<int>(verts.size());
  ElementMatrices em{Eigen::MatrixXd::Zero(nv, nv), Eigen::MatrixXd::Zero(nv, nv)};
  double vol = std::pow(h, d);
  for (std::size_t q = 0; q < pts.size(); ++q) {
    for (int a = 0; a < nv; ++a) {
      for (int b = 0; b < nv; ++b) {
        double grad = 0.0;
        for (int c = 0; c < d; ++c)
          grad += shape_derivative(verts[a], pts[q], d, c) * shape_derivative(verts[b], pts[q], d, c);
        em.stiffness(a, b) += w[q] * vol * grad / (h * h);
        em.mass(a, b) += w[q] * vol * shape(verts[a], pts[q], d) * shape(verts[b], pts[q], d);
      }
    }
  }
  return em;
}

SparseMatrix coefficient_to_stiffness_map(const Patch& patch, const MeshHierarchy& mesh) {
  int d = mesh.dim();
  Eigen::MatrixXd kref = q1_element_matrices(d, mesh.h()).stiffness;
  BoxNodes nodes(d, patch.fine);
  long long n = nodes.count();
  MultiIndex eps_ext{1, 1, 1};
  for (int a = 0; a < d; ++a) eps_ext[a] = patch.eps.extent(a);
  int m = product(eps_ext, d);
  if (n * n > std::numeric_limits<int>::max()) throw std::length_error("patch too large for U");
  std::vector<Triplet> trip;
  int nv = static_cast<int>(kref.rows());
  for_each_box_element(d, patch.fine, [&](const MultiIndex& e, const std::vector<int>& dofs) {
    MultiIndex c{0, 0, 0};
    for (int a = 0; a < d; ++a) c[a] = e[a] / mesh.r_h() - patch.eps.lo[a];
    int j = linear_index(c, eps_ext, d);
    for (int a = 0; a < nv; ++a) {
      if (dofs[a] < 0) continue;
      for (int b = 0; b < nv; ++b) {
        if (dofs[b] < 0) continue;
        trip.push_back({static_cast<int>(dofs[a] + dofs[b] * n), j, kref(a, b)});
      }
    }
  });
  return SparseMatrix::from_triplets(static_cast<int>(n * n), m, std::move(trip));
}

SparseMatrix assemble_stiffness(const Patch& patch, const MeshHierarchy& mesh,
                                std::span<const double> local_coefficient) {
  int d = mesh.dim();
  MultiIndex eps_ext{1, 1, 1};
  for (int a = 0; a < d; ++a) eps_ext[a] = patch.eps.extent(a);
  if (static_cast<int>(local_coefficient.size()) != product(eps_ext, d))
    throw std::invalid_argument("local coefficient length does not match patch");
  Eigen::MatrixXd kref = q1_element_matrices(d, mesh.h()).stiffness;
  return assemble_box_stiffness(d, patch.fine, kref, [&](const MultiIndex& e) {
    MultiIndex c{0, 0, 0};
    for (int a = 0; a < d; ++a) c[a] = e[a] / mesh.r_h() - patch.eps.lo[a];
    return local_coefficient[linear_index(c, eps_ext, d)];
  });
}

SparseMatrix stiffness_from_map(const SparseMatrix& U, std::span<const double> local_coefficient) {
  std::vector<double> s = U.multiply(local_coefficient);
  int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(U.rows()))));
  std::vector<Triplet> trip;
  for (int r = 0; r < U.rows(); ++r) {
    if (s[r] != 0.0) trip.push_back({r % n, r / n, s[r]});
  }
  return SparseMatrix::from_triplets(n, n, std::move(trip));
}

SparseMatrix assemble_global_stiffness(const CoefficientField& coefficient) {
  const MeshHierarchy& mesh = coefficient.mesh;
  Eigen::MatrixXd kref = q1_element_matrices(mesh.dim(), mesh.h()).stiffness;
  return assemble_box_stiffness(mesh.dim(), full_box(mesh, Level::fine), kref,
                                [&](const MultiIndex& e) { return coefficient.at_fine_element(e); });
}

SparseMatrix assemble_global_stiffness(const MeshHierarchy& mesh, const ScalarFunction& a) {
  int d = mesh.dim();
  double h = mesh.h();
  std::vector<Point> pts;
  std::vector<double> w;
  tensor_rule(d, gauss(3), pts, w);
  auto verts = vertex_offsets(d);
  int nv = static_cast<int>(verts.size());
  Box box = full_box(mesh, Level::fine);
  BoxNodes nodes(d, box);
  std::vector<Triplet> trip;
  double vol = std::pow(h, d);
  for_each_box_element(d, box, [&](const MultiIndex& e, const std::vector<int>& dofs) {
    Eigen::MatrixXd ke = Eigen::MatrixXd::Zero(nv, nv);
    for (std::size_t q = 0; q < pts.size(); ++q) {
      Point x{0, 0, 0};
      for (int c = 0; c < d; ++c) x[c] = (e[c] + pts[q][c]) * h;
      double coeff = a(x);
      for (int i = 0; i < nv; ++i)
        for (int j = 0; j < nv; ++j) {
          double g = 0.0;
          for (int c = 0; c < d; ++c)
            g += shape_derivative(verts[i], pts[q], d, c) * shape_derivative(verts[j], pts[q], d, c);
          ke(i, j) += w[q] * vol * coeff * g / (h * h);
        }
    }
    for (int i = 0; i < nv; ++i) {
      if (dofs[i] < 0) continue;
      for (int j = 0; j < nv; ++j)
        if (dofs[j] >= 0) trip.push_back({dofs[i], dofs[j], ke(i, j)});
    }
  });
  int n = nodes.count();
  return SparseMatrix::from_triplets(n, n, std::move(trip));
}

SparseMatrix assemble_mass(const MeshHierarchy& mesh, Level level) {
  int d = mesh.dim();
  Eigen::MatrixXd mref = q1_element_matrices(d, mesh.mesh_size(level)).mass;
  return assemble_box_stiffness(d, full_box(mesh, level), mref, [](const MultiIndex&) { return 1.0; });
}

Prolongations prolongations(const Patch& patch, const MeshHierarchy& mesh) {
  int d = mesh.dim();
  int ratio = mesh.r_eps() * mesh.r_h();
  PatchIndex idx = local_indexers(patch, mesh);
  ScatterMap sm = scatter_map(patch, mesh);
  int n = static_cast<int>(idx.fine_inner_nodes.size());
  int N = static_cast<int>(idx.coarse_nodes.size());
  std::vector<int> column_in_K(N, -1);
  for (std::size_t v = 0; v < sm.element_local_nodes.size(); ++v)
    column_in_K[sm.element_local_nodes[v]] = static_cast<int>(v);
  std::vector<Triplet> full, restricted;
  for (int k = 0; k < n; ++k) {
    MultiIndex loc = multi_index(k, idx.fine_inner_extent, d);
    MultiIndex node{0, 0, 0};
    for (int a = 0; a < d; ++a) node[a] = loc[a] + patch.fine.lo[a] + 1;
    for (const auto& [z, w] : coarse_hats_at(node, ratio, d)) {
      MultiIndex zl{0, 0, 0};
      for (int a = 0; a < d; ++a) zl[a] = z[a] - patch.coarse.lo[a];
      int i = linear_index(zl, idx.coarse_node_extent, d);
      full.push_back({k, i, w});
      if (column_in_K[i] >= 0) restricted.push_back({k, column_in_K[i], w});
    }
  }
  int nk = static_cast<int>(sm.element_local_nodes.size());
  return {SparseMatrix::from_triplets(n, N, std::move(full)),
          SparseMatrix::from_triplets(n, nk, std::move(restricted))};
}

SparseMatrix global_prolongation(const MeshHierarchy& mesh) {
  int d = mesh.dim();
  int ratio = mesh.r_eps() * mesh.r_h();
  int nf = mesh.elements_per_axis(Level::fine);
  MultiIndex inner{nf - 1, nf - 1, nf - 1};
  int n = mesh.num_free_nodes(Level::fine);
  std::vector<Triplet> trip;
  for (int k = 0; k < n; ++k) {
    MultiIndex node = multi_index(k, inner, d);
    for (int a = 0; a < d; ++a) node[a] += 1;
    for (const auto& [z, w] : coarse_hats_at(node, ratio, d)) {
      int i = mesh.free_node_index(Level::coarse, z);
      if (i >= 0) trip.push_back({k, i, w});
    }
  }
  return SparseMatrix::from_triplets(n, mesh.num_free_nodes(Level::coarse), std::move(trip));
}

SparseMatrix quasi_interpolation(const Patch& patch, const MeshHierarchy& mesh) {
  int d = mesh.dim();
  int ratio = mesh.r_eps() * mesh.r_h();
  double H = mesh.H();
  double h = mesh.h();
  auto verts = vertex_offsets(d);
  int nv = static_cast<int>(verts.size());

  // G(a, k) = integral over a coarse element of Lambda_a * lambda_k for the
  // (ratio+1)^d fine nodes k of the element, using exact 2-point Gauss rules.
  MultiIndex fext{ratio + 1, ratio + 1, ratio + 1};
  int nk = product(fext, d);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nv, nk);
  std::vector<Point> pts;
  std::vector<double> w;
  tensor_rule(d, gauss(2), pts, w);
  MultiIndex sub_ext{ratio, ratio, ratio};
  int nsub = product(sub_ext, d);
  double vol = std::pow(h, d);
  for (int t = 0; t < nsub; ++t) {
    MultiIndex tm = multi_index(t, sub_ext, d);
    for (std::size_t q = 0; q < pts.size(); ++q) {
      Point X{0, 0, 0};
      for (int a = 0; a < d; ++a) X[a] = (tm[a] + pts[q][a]) / ratio;
      for (int b = 0; b < nv; ++b) {
        MultiIndex fnode = tm;
        for (int a = 0; a < d; ++a) fnode[a] += verts[b][a];
        int k = linear_index(fnode, fext, d);
        double fine_val = shape(verts[b], pts[q], d);
        for (int c = 0; c < nv; ++c) G(c, k) += w[q] * vol * shape(verts[c], X, d) * fine_val;
      }
    }
  }
  // Inverse of the Q1 element mass matrix is a tensor product of the 1D
  // inverse (1/H) [[4, -2], [-2, 4]].
  Eigen::MatrixXd Minv(nv, nv);
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      double v = 1.0;
      for (int c = 0; c < d; ++c) v *= (verts[a][c] == verts[b][c] ? 4.0 : -2.0) / H;
      Minv(a, b) = v;
    }
  Eigen::MatrixXd W = Minv * G;  // nodal values of Pi_T lambda_k at the vertices of T

  PatchIndex idx = local_indexers(patch, mesh);
  BoxNodes nodes(d, patch.fine);
  int nH = mesh.nH();
  MultiIndex cext{1, 1, 1};
  for (int a = 0; a < d; ++a) cext[a] = patch.coarse.extent(a);
  int ncoarse = product(cext, d);
  std::vector<Triplet> trip;
  for (int T = 0; T < ncoarse; ++T) {
    MultiIndex tl = multi_index(T, cext, d);
    MultiIndex tg = tl;
    for (int a = 0; a < d; ++a) tg[a] += patch.coarse.lo[a];
    for (int c = 0; c < nv; ++c) {
      MultiIndex z{0, 0, 0};
      MultiIndex zl{0, 0, 0};
      int count = 1;
      bool boundary = false;
      for (int a = 0; a < d; ++a) {
        z[a] = tg[a] + verts[c][a];
        zl[a] = tl[a] + verts[c][a];
        if (z[a] == 0 || z[a] == nH) boundary = true;
        else count *= 2;
      }
      if (boundary) continue;
      int row = linear_index(zl, idx.coarse_node_extent, d);
      for (int k = 0; k < nk; ++k) {
        MultiIndex fk = multi_index(k, fext, d);
        MultiIndex fnode{0, 0, 0};
        for (int a = 0; a < d; ++a) fnode[a] = tg[a] * ratio + fk[a];
        int col = nodes.local(fnode);
        if (col < 0) continue;
        trip.push_back({row, col, W(c, k) / count});
      }
    }
  }
  return SparseMatrix::from_triplets(static_cast<int>(idx.coarse_nodes.size()), nodes.count(),
                                     std::move(trip));
}

std::vector<double> load_vector(const ScalarFunction& f, Level level, const MeshHierarchy& mesh) {
  int d = mesh.dim();
  double h = mesh.mesh_size(level);
  std::vector<Point> pts;
  std::vector<double> w;
  tensor_rule(d, gauss(3), pts, w);
  auto verts = vertex_offsets(d);
  Box box = full_box(mesh, level);
  BoxNodes nodes(d, box);
  std::vector<double> b(nodes.count(), 0.0);
  double vol = std::pow(h, d);
  for_each_box_element(d, box, [&](const MultiIndex& e, const std::vector<int>& dofs) {
    for (std::size_t q = 0; q < pts.size(); ++q) {
      Point x{0, 0, 0};
      for (int c = 0; c < d; ++c) x[c] = (e[c] + pts[q][c]) * h;
      double fx = f(x);
      for (std::size_t v = 0; v < verts.size(); ++v)
        if (dofs[v] >= 0) b[dofs[v]] += w[q] * vol * fx * shape(verts[v], pts[q], d);
    }
  });
  return b;
}

std::vector<Point> free_node_coordinates(const MeshHierarchy& mesh, Level level) {
  int d = mesh.dim();
  int n = mesh.elements_per_axis(level);
  double h = mesh.mesh_size(level);
  MultiIndex inner{n - 1, n - 1, n - 1};
  int count = mesh.num_free_nodes(level);
  std::vector<Point> x(count, Point{0, 0, 0});
  for (int k = 0; k < count; ++k) {
    MultiIndex m = multi_index(k, inner, d);
    for (int a = 0; a < d; ++a) x[k][a] = (m[a] + 1) * h;
  }
  return x;
}

}  // namespace lodnn
