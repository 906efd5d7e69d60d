#include "lodnn/mesh.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace lodnn {

int linear_index(const MultiIndex& m, const MultiIndex& extent, int d) {
  int idx = 0;
  for (int a = d - 1; a >= 0; --a) idx = idx * extent[a] + m[a];
  return idx;
}

MultiIndex multi_index(int idx, const MultiIndex& extent, int d) {
  MultiIndex m{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    m[a] = idx % extent[a];
    idx /= extent[a];
  }
  return m;
}

int product(const MultiIndex& extent, int d) {
  int p = 1;
  for (int a = 0; a < d; ++a) p *= extent[a];
  return p;
}

MeshHierarchy::MeshHierarchy(int d, int nH, int r_eps, int r_h)
    : d_(d), nH_(nH), r_eps_(r_eps), r_h_(r_h) {
  if (d < 1 || d > 3)
    throw std::invalid_argument("dimension must be 1, 2 or 3, got " + std::to_string(d));
  if (nH < 1) throw std::invalid_argument("nH must be positive");
  if (r_eps < 1) throw std::invalid_argument("r_eps must be positive");
  if (r_h < 2) throw std::invalid_argument("r_h must be at least 2 so that h < eps");
}

int MeshHierarchy::elements_per_axis(Level level) const {
  switch (level) {
    case Level::coarse: return nH_;
    case Level::eps: return nH_ * r_eps_;
    case Level::fine: return nH_ * r_eps_ * r_h_;
  }
  return 0;
}

double MeshHierarchy::mesh_size(Level level) const {
  return 1.0 / elements_per_axis(level);
}

int MeshHierarchy::num_elements(Level level) const {
  return product(element_extent(level), d_);
}

int MeshHierarchy::num_nodes(Level level) const {
  return product(node_extent(level), d_);
}

int MeshHierarchy::num_free_nodes(Level level) const {
  int n = elements_per_axis(level) - 1;
  int p = 1;
  for (int a = 0; a < d_; ++a) p *= n;
  return p;
}

MultiIndex MeshHierarchy::element_extent(Level level) const {
  int n = elements_per_axis(level);
  return {n, n, n};
}

MultiIndex MeshHierarchy::node_extent(Level level) const {
  int n = elements_per_axis(level) + 1;
  return {n, n, n};
}

int MeshHierarchy::free_node_index(Level level, const MultiIndex& node) const {
  int n = elements_per_axis(level);
  MultiIndex shifted{0, 0, 0};
  for (int a = 0; a < d_; ++a) {
    if (node[a] <= 0 || node[a] >= n) return -1;
    shifted[a] = node[a] - 1;
  }
  return linear_index(shifted, {n - 1, n - 1, n - 1}, d_);
}

Patch make_patch(const MeshHierarchy& mesh, int element, int ell) {
  if (ell < 1) throw std::invalid_argument("patch size ell must be at least 1");
  int d = mesh.dim();
  int nH = mesh.nH();
  if (element < 0 || element >= mesh.num_elements(Level::coarse))
    throw std::out_of_range("coarse element index out of range");
  Patch p;
  p.element = element;
  p.K = multi_index(element, mesh.element_extent(Level::coarse), d);
  p.ell = ell;
  p.interior = true;
  int re = mesh.r_eps();
  int rf = mesh.r_eps() * mesh.r_h();
  for (int a = 0; a < d; ++a) {
    p.coarse.lo[a] = std::max(0, p.K[a] - ell);
    p.coarse.hi[a] = std::min(nH, p.K[a] + ell + 1);
    if (p.K[a] - ell < 1 || p.K[a] + ell + 1 > nH - 1) p.interior = false;
    p.eps.lo[a] = p.coarse.lo[a] * re;
    p.eps.hi[a] = p.coarse.hi[a] * re;
    p.fine.lo[a] = p.coarse.lo[a] * rf;
    p.fine.hi[a] = p.coarse.hi[a] * rf;
  }
  for (int a = d; a < 3; ++a) {
    p.coarse.hi[a] = p.eps.hi[a] = p.fine.hi[a] = 1;
  }
  return p;
}

PatchCounts interior_patch_counts(const MeshHierarchy& mesh, int ell) {
  long long side_eps = static_cast<long long>(2 * ell + 1) * mesh.r_eps();
  long long side_fine = side_eps * mesh.r_h();
  PatchCounts c{1, 1, 1};
  for (int a = 0; a < mesh.dim(); ++a) {
    c.coefficient_cells *= side_eps;
    c.fine_inner_nodes *= side_fine - 1;
    c.coarse_nodes *= 2 * ell + 2;
  }
  return c;
}

PatchIndex local_indexers(const Patch& patch, const MeshHierarchy& mesh) {
  int d = mesh.dim();
  PatchIndex idx;

  MultiIndex eps_extent{1, 1, 1};
  for (int a = 0; a < d; ++a) eps_extent[a] = patch.eps.extent(a);
  int m = product(eps_extent, d);
  idx.eps_elements.resize(m);
  MultiIndex global_eps = mesh.element_extent(Level::eps);
  for (int j = 0; j < m; ++j) {
    MultiIndex loc = multi_index(j, eps_extent, d);
    for (int a = 0; a < d; ++a) loc[a] += patch.eps.lo[a];
    idx.eps_elements[j] = linear_index(loc, global_eps, d);
  }

  for (int a = 0; a < d; ++a) idx.fine_inner_extent[a] = patch.fine.extent(a) - 1;
  int n = product(idx.fine_inner_extent, d);
  idx.fine_inner_nodes.resize(n);
  MultiIndex global_fine = mesh.node_extent(Level::fine);
  for (int k = 0; k < n; ++k) {
    MultiIndex loc = multi_index(k, idx.fine_inner_extent, d);
    for (int a = 0; a < d; ++a) loc[a] += patch.fine.lo[a] + 1;
    idx.fine_inner_nodes[k] = linear_index(loc, global_fine, d);
  }

  for (int a = 0; a < d; ++a) idx.coarse_node_extent[a] = patch.coarse.extent(a) + 1;
  int N = product(idx.coarse_node_extent, d);
  idx.coarse_nodes.resize(N);
  MultiIndex global_coarse = mesh.node_extent(Level::coarse);
  for (int i = 0; i < N; ++i) {
    MultiIndex loc = multi_index(i, idx.coarse_node_extent, d);
    for (int a = 0; a < d; ++a) loc[a] += patch.coarse.lo[a];
    idx.coarse_nodes[i] = linear_index(loc, global_coarse, d);
  }
  return idx;
}

std::vector<MultiIndex> vertex_offsets(int d) {
  std::vector<MultiIndex> v;
  int count = 1 << d;
  v.reserve(count);
  for (int c = 0; c < count; ++c) {
    MultiIndex o{0, 0, 0};
    for (int a = 0; a < d; ++a) o[a] = (c >> a) & 1;
    v.push_back(o);
  }
  return v;
}

ScatterMap scatter_map(const Patch& patch, const MeshHierarchy& mesh) {
  int d = mesh.dim();
  ScatterMap s;
  MultiIndex ext{1, 1, 1};
  for (int a = 0; a < d; ++a) ext[a] = patch.coarse.extent(a) + 1;
  int N = product(ext, d);
  s.coarse_to_free.resize(N);
  for (int i = 0; i < N; ++i) {
    MultiIndex loc = multi_index(i, ext, d);
    for (int a = 0; a < d; ++a) loc[a] += patch.coarse.lo[a];
    s.coarse_to_free[i] = mesh.free_node_index(Level::coarse, loc);
  }
  for (const MultiIndex& o : vertex_offsets(d)) {
    MultiIndex loc{0, 0, 0};
    MultiIndex glob{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      glob[a] = patch.K[a] + o[a];
      loc[a] = glob[a] - patch.coarse.lo[a];
    }
    s.element_local_nodes.push_back(linear_index(loc, ext, d));
    s.element_free.push_back(mesh.free_node_index(Level::coarse, glob));
  }
  return s;
}

}  // namespace lodnn
