#include "s2d4d/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <unordered_set>

#include "s2d4d/rng.hpp"

namespace s2d4d {

MeshTopology::MeshTopology(int vertex_count, std::vector<Triangle> triangles)
    : vertex_count_(vertex_count), triangles_(std::move(triangles)) {
  if (vertex_count_ <= 0) throw TopologyError("topology needs at least one vertex");
  const auto n = static_cast<std::size_t>(vertex_count_);
  neighbors_.resize(n);
  incident_.resize(n);
  boundary_.assign(n, false);

  std::map<std::pair<int, int>, int> edge_use;
  for (std::size_t f = 0; f < triangles_.size(); ++f) {
    const auto& t = triangles_[f];
    for (int c = 0; c < 3; ++c) {
      if (t[c] < 0 || t[c] >= vertex_count_) {
        throw TopologyError("triangle " + std::to_string(f) + " references vertex " + std::to_string(t[c]) +
                            " out of range");
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw TopologyError("triangle " + std::to_string(f) + " is degenerate");
    }
    for (int c = 0; c < 3; ++c) {
      const int a = t[c], b = t[(c + 1) % 3];
      incident_[static_cast<std::size_t>(a)].push_back(static_cast<int>(f));
      neighbors_[static_cast<std::size_t>(a)].push_back(b);
      neighbors_[static_cast<std::size_t>(b)].push_back(a);
      if (++edge_use[{std::min(a, b), std::max(a, b)}] > 2) {
        throw TopologyError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                            ") is shared by more than two triangles");
      }
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (incident_[v].empty()) throw TopologyError("vertex " + std::to_string(v) + " is not used by any triangle");
    auto& nb = neighbors_[v];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  for (const auto& [e, count] : edge_use) {
    if (count == 1) {
      boundary_[static_cast<std::size_t>(e.first)] = true;
      boundary_[static_cast<std::size_t>(e.second)] = true;
    }
  }

  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::uint32_t x) {
    for (int i = 0; i < 4; ++i) {
      h ^= (x >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<std::uint32_t>(vertex_count_));
  for (const auto& t : triangles_) {
    for (int c = 0; c < 3; ++c) feed(static_cast<std::uint32_t>(t[c]));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  hash_ = buf;
}

Mesh::Mesh(TopologyPtr topo, Points3 pos) : topology(std::move(topo)), positions(std::move(pos)) {
  if (!topology) throw InvalidInputError("mesh without topology");
  if (positions.rows() != topology->vertex_count()) {
    throw ShapeError("mesh has " + std::to_string(positions.rows()) + " positions, topology has " +
                     std::to_string(topology->vertex_count()) + " vertices");
  }
  if (!positions.allFinite()) throw InvalidInputError("mesh positions contain non-finite values");
}

void LandmarkIndexTable::validate(int vertex_count) const {
  if (indices.empty()) throw InvalidInputError("landmark table is empty");
  std::unordered_set<int> seen;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int i = indices[j];
    if (i < 0 || i >= vertex_count) {
      throw InvalidInputError("landmark " + std::to_string(j) + " index " + std::to_string(i) +
                              " out of range [0," + std::to_string(vertex_count) + ")");
    }
    if (!seen.insert(i).second) throw InvalidInputError("landmark index " + std::to_string(i) + " repeated");
  }
}

LandmarkFrame extract_landmarks(const Mesh& mesh, const LandmarkIndexTable& table) {
  table.validate(mesh.vertex_count());
  Points3 out(static_cast<Eigen::Index>(table.k()), 3);
  for (std::size_t j = 0; j < table.k(); ++j) out.row(static_cast<Eigen::Index>(j)) = mesh.positions.row(table.indices[j]);
  return LandmarkFrame(std::move(out));
}

VertexWeightTable compute_vertex_weights(const Mesh& neutral, const LandmarkIndexTable& table) {
  const int n = neutral.vertex_count();
  table.validate(n);
  const LandmarkFrame z = extract_landmarks(neutral, table);
  std::vector<bool> is_landmark(static_cast<std::size_t>(n), false);
  for (int i : table.indices) is_landmark[static_cast<std::size_t>(i)] = true;

  Vector raw = Vector::Zero(n);
  double max_raw = 0.0;
  for (int i = 0; i < n; ++i) {
    if (is_landmark[static_cast<std::size_t>(i)]) continue;
    const double d = (z.points.rowwise() - neutral.positions.row(i)).rowwise().norm().minCoeff();
    if (d < 1e-12) {
      is_landmark[static_cast<std::size_t>(i)] = true;
      continue;
    }
    raw[i] = 1.0 / d;
    max_raw = std::max(max_raw, raw[i]);
  }
  VertexWeightTable w;
  w.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    w.weights[i] = is_landmark[static_cast<std::size_t>(i)] ? 1.0 : raw[i] / max_raw;
  }
  return w;
}

namespace {

void require_same_vertex_count(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": vertex counts differ (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

}  // namespace

Mesh apply_displacement(const Mesh& neutral, const DisplacementField& field) {
  require_same_vertex_count(neutral.positions.rows(), field.values.rows(), "apply_displacement");
  return Mesh(neutral.topology, neutral.positions + field.values);
}

DisplacementField mesh_difference(const Mesh& a, const Mesh& b) {
  require_same_vertex_count(a.positions.rows(), b.positions.rows(), "mesh_difference");
  return DisplacementField{a.positions - b.positions};
}

double displacement_l1(const DisplacementField& pred, const DisplacementField& gt) {
  require_same_vertex_count(pred.values.rows(), gt.values.rows(), "displacement_l1");
  return (pred.values - gt.values).cwiseAbs().sum() / static_cast<double>(pred.values.rows());
}

double weighted_l1(const Points3& pred, const Points3& gt, const Vector& w) {
  require_same_vertex_count(pred.rows(), gt.rows(), "weighted_l1");
  require_same_vertex_count(pred.rows(), w.size(), "weighted_l1");
  const Vector per_vertex = (pred - gt).cwiseAbs().rowwise().sum();
  return per_vertex.dot(w) / static_cast<double>(pred.rows());
}

double weighted_point_l1(const Mesh& pred, const Mesh& gt, const VertexWeightTable& w) {
  return weighted_l1(pred.positions, gt.positions, w.weights);
}

Vector pervertex_error(const Mesh& pred, const Mesh& gt) {
  require_same_vertex_count(pred.positions.rows(), gt.positions.rows(), "pervertex_error");
  return (pred.positions - gt.positions).rowwise().norm();
}

ErrorStats error_stats(const Eigen::Ref<const Vector>& errors) {
  if (errors.size() == 0) throw InvalidInputError("no errors to summarize");
  ErrorStats s;
  s.mean = errors.mean();
  s.stddev = std::sqrt((errors.array() - s.mean).square().mean());
  return s;
}

ErrorStats mean_pervertex_error(const Mesh& pred, const Mesh& gt) { return error_stats(pervertex_error(pred, gt)); }

std::vector<double> cumulative_error_curve(const std::vector<double>& errors, const std::vector<double>& thresholds) {
  if (errors.empty()) throw InvalidInputError("cumulative error curve of an empty set");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    out.push_back(static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size()));
  }
  return out;
}

}  // namespace s2d4d
