#pragma once

#include <vector>

#include "s2d4d/mesh.hpp"

namespace s2d4d {

/// Sparse row-major transfer matrix; row r holds (column, weight) pairs.
struct SparseTransfer {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<std::pair<int, double>>> entries;

  /// y (rows × C) = T x (cols × C), both row-major with C channels per vertex.
  Matrix apply(const Matrix& x) const;
};

/// For every vertex a fixed-length ordered neighborhood starting at the vertex.
struct SpiralTable {
  int length = 0;
  std::vector<std::vector<int>> spirals;
};

/// Ordered spiral neighborhoods: [v, 1-ring counterclockwise from the
/// smallest-index neighbor, 2-ring, ...], truncated or padded with v.
SpiralTable spiral_sequences(const MeshTopology& topology, int length);

/// The 1-ring of v in counterclockwise order (triangle winding), starting at
/// its smallest-index neighbor.
std::vector<int> ordered_one_ring(const MeshTopology& topology, int v);

/// Level 0 is the input mesh; level l+1 is obtained by decimating level l.
struct SamplingHierarchy {
  std::vector<Mesh> levels;
  /// down[l]: level l -> level l+1 (selection of kept vertices)
  std::vector<SparseTransfer> down;
  /// up[l]: level l+1 -> level l (barycentric, row-stochastic)
  std::vector<SparseTransfer> up;
  /// spirals[l] for level l
  std::vector<SpiralTable> spirals;
  /// kept[l][i]: index in level l of vertex i of level l+1
  std::vector<std::vector<int>> kept;

  int level_count() const { return static_cast<int>(levels.size()) - 1; }
  int vertex_count(int level) const { return levels[static_cast<std::size_t>(level)].vertex_count(); }
};

struct HierarchyOptions {
  int levels = 4;
  int factor = 4;
  /// Spiral length per level (size levels+1). Empty: interpolate from
  /// `fine_spiral` at level 0 to `coarse_spiral` at the coarsest level.
  std::vector<int> spiral_lengths;
  int fine_spiral = 12;
  int coarse_spiral = 9;
};

/// Quadric-error edge-collapse decimation (each collapse keeps one endpoint,
/// ties broken by smallest vertex index) with barycentric up-sampling.
/// Throws TopologyError when the mesh cannot be reduced to the requested
/// sizes or the coarsest level would have fewer than 4 vertices.
SamplingHierarchy build_hierarchy(const Mesh& reference, const HierarchyOptions& options);

/// Decimates to `target` vertices; returns the kept vertex indices (sorted)
/// and the coarse triangles in the kept-vertex numbering.
struct Decimation {
  std::vector<int> kept;
  std::vector<Triangle> triangles;
};
Decimation quadric_decimate(const Mesh& mesh, int target);

/// Barycentric coordinates of the closest point of each fine vertex on the coarse mesh.
SparseTransfer barycentric_upsample(const Mesh& fine, const Mesh& coarse);

}  // namespace s2d4d
