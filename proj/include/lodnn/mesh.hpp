#pragma once

#include <array>
#include <vector>

namespace lodnn {

/// Multi-index into a Cartesian grid; only the first d entries are used.
using MultiIndex = std::array<int, 3>;

enum class Level { coarse, eps, fine };

/// Lexicographic numbering with axis 0 running fastest.
int linear_index(const MultiIndex& m, const MultiIndex& extent, int d);
MultiIndex multi_index(int idx, const MultiIndex& extent, int d);
int product(const MultiIndex& extent, int d);

/// Half-open box [lo, hi) of element indices.
struct Box {
  MultiIndex lo{0, 0, 0};
  MultiIndex hi{0, 0, 0};

  int extent(int axis) const { return hi[axis] - lo[axis]; }
};

/// Three nested uniform Cartesian meshes of the unit cube (0,1)^d.
///
/// The coarse mesh has nH elements per axis, each coarse element is split
/// into r_eps coefficient cells per axis and each cell into r_h fine
/// elements per axis.
class MeshHierarchy {
 public:
  MeshHierarchy() = default;
  MeshHierarchy(int d, int nH, int r_eps, int r_h);

  int dim() const { return d_; }
  int nH() const { return nH_; }
  int r_eps() const { return r_eps_; }
  int r_h() const { return r_h_; }

  int elements_per_axis(Level level) const;
  double mesh_size(Level level) const;
  double H() const { return mesh_size(Level::coarse); }
  double eps() const { return mesh_size(Level::eps); }
  double h() const { return mesh_size(Level::fine); }

  int num_elements(Level level) const;
  int num_nodes(Level level) const;
  /// Nodes not on the boundary of the unit cube.
  int num_free_nodes(Level level) const;

  MultiIndex element_extent(Level level) const;
  MultiIndex node_extent(Level level) const;

  /// Index of a node among the free nodes, or -1 on the boundary.
  int free_node_index(Level level, const MultiIndex& node) const;

  bool operator==(const MeshHierarchy& other) const = default;

 private:
  int d_ = 1;
  int nH_ = 1;
  int r_eps_ = 1;
  int r_h_ = 1;
};

/// Element patch N^ell(K): the box of coarse elements [K-ell, K+ell] clipped
/// to the unit cube.
struct Patch {
  int element = 0;
  MultiIndex K{0, 0, 0};
  int ell = 0;
  Box coarse;
  Box eps;
  Box fine;
  /// True if the patch keeps at least one coarse layer away from the boundary.
  bool interior = false;
};

Patch make_patch(const MeshHierarchy& mesh, int element, int ell);

/// Counts for a full (interior) patch of size ell.
struct PatchCounts {
  long long coefficient_cells;  // m_ell
  long long fine_inner_nodes;   // n_ell
  long long coarse_nodes;       // N_ell
};
PatchCounts interior_patch_counts(const MeshHierarchy& mesh, int ell);

/// Global indices of the patch objects in local lexicographic order.
struct PatchIndex {
  std::vector<int> eps_elements;
  std::vector<int> fine_inner_nodes;
  std::vector<int> coarse_nodes;
  MultiIndex fine_inner_extent{1, 1, 1};
  MultiIndex coarse_node_extent{1, 1, 1};
};

PatchIndex local_indexers(const Patch& patch, const MeshHierarchy& mesh);

/// Maps patch-local coarse nodes to global free coarse nodes.
struct ScatterMap {
  /// For every local coarse node: global free index or -1 on the boundary.
  std::vector<int> coarse_to_free;
  /// Local coarse node numbers of the 2^d vertices of K.
  std::vector<int> element_local_nodes;
  /// Global free indices of the vertices of K (-1 on the boundary).
  std::vector<int> element_free;
};

ScatterMap scatter_map(const Patch& patch, const MeshHierarchy& mesh);

/// Offsets of the 2^d vertices of an element in lexicographic order.
std::vector<MultiIndex> vertex_offsets(int d);

}  // namespace lodnn
