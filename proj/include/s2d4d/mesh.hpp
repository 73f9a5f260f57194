#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "s2d4d/curve_manifold.hpp"
#include "s2d4d/types.hpp"

namespace s2d4d {

using Triangle = std::array<int, 3>;

/// Fixed mesh connectivity. Construction validates index range, that every
/// vertex is used, and that no edge is shared by more than two triangles.
class MeshTopology {
 public:
  MeshTopology(int vertex_count, std::vector<Triangle> triangles);

  int vertex_count() const { return vertex_count_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  /// Sorted neighbor indices of v.
  const std::vector<int>& neighbors(int v) const { return neighbors_[static_cast<std::size_t>(v)]; }
  /// Indices of triangles incident to v.
  const std::vector<int>& incident_triangles(int v) const { return incident_[static_cast<std::size_t>(v)]; }
  bool is_boundary_vertex(int v) const { return boundary_[static_cast<std::size_t>(v)]; }

  /// 64-bit FNV-1a over vertex count and triangle list, as 16 hex digits.
  const std::string& hash() const { return hash_; }

 private:
  int vertex_count_;
  std::vector<Triangle> triangles_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::vector<int>> incident_;
  std::vector<bool> boundary_;
  std::string hash_;
};

using TopologyPtr = std::shared_ptr<const MeshTopology>;

struct Mesh {
  TopologyPtr topology;
  Points3 positions;

  Mesh() = default;
  Mesh(TopologyPtr topo, Points3 pos);

  int vertex_count() const { return topology ? topology->vertex_count() : 0; }
};

struct DisplacementField {
  Points3 values;
};

struct LandmarkIndexTable {
  std::vector<int> indices;

  std::size_t k() const { return indices.size(); }
  /// Throws InvalidInputError on duplicates or out-of-range entries.
  void validate(int vertex_count) const;
};

struct VertexWeightTable {
  Vector weights;
};

struct ErrorStats {
  double mean = 0.0;
  double stddev = 0.0;
};

LandmarkFrame extract_landmarks(const Mesh& mesh, const LandmarkIndexTable& table);

/// Inverse distance to the closest landmark, divided by its maximum over
/// non-landmark vertices; landmark vertices (and vertices coinciding with a
/// landmark) get exactly 1.
VertexWeightTable compute_vertex_weights(const Mesh& neutral, const LandmarkIndexTable& table);

Mesh apply_displacement(const Mesh& neutral, const DisplacementField& field);
DisplacementField mesh_difference(const Mesh& a, const Mesh& b);

/// (1/N) sum_i |pred_i - gt_i|_1
double displacement_l1(const DisplacementField& pred, const DisplacementField& gt);
/// (1/N) sum_i w_i |pred_i - gt_i|_1
double weighted_l1(const Points3& pred, const Points3& gt, const Vector& w);
double weighted_point_l1(const Mesh& pred, const Mesh& gt, const VertexWeightTable& w);

/// Euclidean error per vertex.
Vector pervertex_error(const Mesh& pred, const Mesh& gt);
ErrorStats mean_pervertex_error(const Mesh& pred, const Mesh& gt);
ErrorStats error_stats(const Eigen::Ref<const Vector>& errors);

/// Fraction of errors <= each threshold.
std::vector<double> cumulative_error_curve(const std::vector<double>& errors, const std::vector<double>& thresholds);

}  // namespace s2d4d
