#include "s2d4d/hierarchy.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <tuple>

namespace s2d4d {

Matrix SparseTransfer::apply(const Matrix& x) const {
  if (x.rows() != cols) throw ShapeError("transfer expects " + std::to_string(cols) + " rows");
  Matrix y = Matrix::Zero(rows, x.cols());
  for (int r = 0; r < rows; ++r) {
    for (const auto& [c, w] : entries[static_cast<std::size_t>(r)]) y.row(r) += w * x.row(c);
  }
  return y;
}

std::vector<int> ordered_one_ring(const MeshTopology& topology, int v) {
  std::map<int, int> next;
  std::map<int, int> in_degree;
  for (int f : topology.incident_triangles(v)) {
    const auto& t = topology.triangles()[static_cast<std::size_t>(f)];
    const int i = t[0] == v ? 0 : (t[1] == v ? 1 : 2);
    const int a = t[(i + 1) % 3];
    const int b = t[(i + 2) % 3];
    if (!next.emplace(a, b).second) throw TopologyError("vertex " + std::to_string(v) + " has an inconsistent fan");
    ++in_degree[b];
    in_degree.try_emplace(a, 0);
  }
  if (next.empty()) throw TopologyError("isolated vertex " + std::to_string(v));
  const auto& nb = topology.neighbors(v);
  int start = nb.front();
  int open_starts = 0;
  for (const auto& [u, d] : in_degree) {
    if (d == 0) {
      start = u;
      ++open_starts;
    }
    if (d > 1) throw TopologyError("vertex " + std::to_string(v) + " is non-manifold");
  }
  if (open_starts > 1) throw TopologyError("vertex " + std::to_string(v) + " has a disconnected fan");

  std::vector<int> chain;
  int cur = start;
  while (chain.size() <= nb.size()) {
    chain.push_back(cur);
    const auto it = next.find(cur);
    if (it == next.end() || it->second == start) break;
    cur = it->second;
  }
  if (chain.size() != nb.size()) throw TopologyError("vertex " + std::to_string(v) + " is non-manifold");
  const auto pos = std::min_element(chain.begin(), chain.end());
  std::rotate(chain.begin(), pos, chain.end());
  return chain;
}

SpiralTable spiral_sequences(const MeshTopology& topology, int length) {
  if (length < 1) throw InvalidInputError("spiral length must be positive");
  const int n = topology.vertex_count();
  std::vector<std::vector<int>> rings(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) rings[static_cast<std::size_t>(v)] = ordered_one_ring(topology, v);

  SpiralTable table;
  table.length = length;
  table.spirals.resize(static_cast<std::size_t>(n));
  std::vector<int> stamp(static_cast<std::size_t>(n), -1);
  for (int v = 0; v < n; ++v) {
    auto& seq = table.spirals[static_cast<std::size_t>(v)];
    seq.push_back(v);
    stamp[static_cast<std::size_t>(v)] = v;
    std::vector<int> ring{v};
    while (static_cast<int>(seq.size()) < length) {
      std::vector<int> next_ring;
      for (int u : ring) {
        for (int w : rings[static_cast<std::size_t>(u)]) {
          if (stamp[static_cast<std::size_t>(w)] == v) continue;
          stamp[static_cast<std::size_t>(w)] = v;
          next_ring.push_back(w);
        }
      }
      if (next_ring.empty()) break;
      seq.insert(seq.end(), next_ring.begin(), next_ring.end());
      ring = std::move(next_ring);
    }
    seq.resize(static_cast<std::size_t>(length), v);
  }
  return table;
}

namespace {

using Vec3 = Eigen::Vector3d;
using Mat4 = Eigen::Matrix4d;

Mat4 plane_quadric(const Vec3& n, const Vec3& p) {
  Eigen::Vector4d q(n.x(), n.y(), n.z(), -n.dot(p));
  return q * q.transpose();
}

double quadric_cost(const Mat4& q, const Vec3& p) {
  const Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
  return std::max(0.0, h.dot(q * h));
}

class Decimator {
 public:
  Decimator(const Mesh& mesh) : n_(mesh.vertex_count()) {
    pos_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) pos_[static_cast<std::size_t>(i)] = mesh.positions.row(i).transpose();
    faces_ = mesh.topology->triangles();
    face_alive_.assign(faces_.size(), true);
    vfaces_.resize(static_cast<std::size_t>(n_));
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      for (int c = 0; c < 3; ++c) vfaces_[static_cast<std::size_t>(faces_[f][c])].push_back(static_cast<int>(f));
    }
    alive_.assign(static_cast<std::size_t>(n_), true);
    version_.assign(static_cast<std::size_t>(n_), 0);
    boundary_.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) boundary_[static_cast<std::size_t>(i)] = mesh.topology->is_boundary_vertex(i);
    init_quadrics();
  }

  Decimation run(int target) {
    int alive_count = n_;
    for (int v = 0; v < n_; ++v) push_edges(v);
    while (alive_count > target) {
      if (queue_.empty()) {
        throw TopologyError("decimation stalled at " + std::to_string(alive_count) + " vertices (target " +
                            std::to_string(target) + ")");
      }
      const Entry e = queue_.top();
      queue_.pop();
      if (!alive_[static_cast<std::size_t>(e.keep)] || !alive_[static_cast<std::size_t>(e.remove)]) continue;
      if (version_[static_cast<std::size_t>(e.keep)] != e.keep_version ||
          version_[static_cast<std::size_t>(e.remove)] != e.remove_version) {
        continue;
      }
      if (!collapse_valid(e.remove, e.keep)) continue;
      collapse(e.remove, e.keep);
      --alive_count;
    }
    Decimation out;
    std::vector<int> remap(static_cast<std::size_t>(n_), -1);
    for (int v = 0; v < n_; ++v) {
      if (alive_[static_cast<std::size_t>(v)]) {
        remap[static_cast<std::size_t>(v)] = static_cast<int>(out.kept.size());
        out.kept.push_back(v);
      }
    }
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      const auto& t = faces_[f];
      out.triangles.push_back({remap[static_cast<std::size_t>(t[0])], remap[static_cast<std::size_t>(t[1])],
                               remap[static_cast<std::size_t>(t[2])]});
    }
    return out;
  }

 private:
  struct Entry {
    double cost;
    int lo, hi;  // ordering key for ties
    int keep, remove;
    int keep_version, remove_version;
    // equal costs: smaller edge first, then keep the smaller index
    bool operator>(const Entry& o) const {
      return std::tie(cost, lo, hi, keep) > std::tie(o.cost, o.lo, o.hi, o.keep);
    }
  };

  void init_quadrics() {
    quadric_.assign(static_cast<std::size_t>(n_), Mat4::Zero());
    std::map<std::pair<int, int>, std::pair<int, int>> edge_faces;  // edge -> (count, face)
    double total_area = 0.0;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto& t = faces_[f];
      const Vec3 a = P(t[0]), b = P(t[1]), c = P(t[2]);
      const Vec3 cr = (b - a).cross(c - a);
      const double area = 0.5 * cr.norm();
      total_area += area;
      if (cr.norm() > 0) {
        const Mat4 K = area * plane_quadric(cr.normalized(), a);
        for (int i = 0; i < 3; ++i) quadric_[static_cast<std::size_t>(t[i])] += K;
      }
      for (int i = 0; i < 3; ++i) {
        const int u = t[i], v = t[(i + 1) % 3];
        auto& ef = edge_faces[{std::min(u, v), std::max(u, v)}];
        ++ef.first;
        ef.second = static_cast<int>(f);
      }
    }
    // boundary edges get a heavily weighted perpendicular constraint plane
    const double boundary_weight = 100.0 * total_area / std::max<std::size_t>(1, faces_.size());
    for (const auto& [e, info] : edge_faces) {
      if (info.first != 1) continue;
      const auto& t = faces_[static_cast<std::size_t>(info.second)];
      const Vec3 a = P(t[0]), b = P(t[1]), c = P(t[2]);
      const Vec3 fn = (b - a).cross(c - a);
      const Vec3 ev = P(e.second) - P(e.first);
      Vec3 n = ev.cross(fn);
      if (n.norm() == 0) continue;
      n.normalize();
      const Mat4 K = boundary_weight * plane_quadric(n, P(e.first));
      quadric_[static_cast<std::size_t>(e.first)] += K;
      quadric_[static_cast<std::size_t>(e.second)] += K;
    }
  }

  const Vec3& P(int v) const { return pos_[static_cast<std::size_t>(v)]; }

  std::vector<int> live_faces(int v) {
    auto& lst = vfaces_[static_cast<std::size_t>(v)];
    lst.erase(std::remove_if(lst.begin(), lst.end(),
                             [&](int f) {
                               if (!face_alive_[static_cast<std::size_t>(f)]) return true;
                               const auto& t = faces_[static_cast<std::size_t>(f)];
                               return t[0] != v && t[1] != v && t[2] != v;
                             }),
              lst.end());
    std::sort(lst.begin(), lst.end());
    lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
    return lst;
  }

  std::vector<int> neighbors(int v) {
    std::vector<int> nb;
    for (int f : live_faces(v)) {
      for (int c = 0; c < 3; ++c) {
        const int w = faces_[static_cast<std::size_t>(f)][c];
        if (w != v) nb.push_back(w);
      }
    }
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    return nb;
  }

  int edge_face_count(int u, int v) {
    int count = 0;
    for (int f : live_faces(u)) {
      const auto& t = faces_[static_cast<std::size_t>(f)];
      if (t[0] == v || t[1] == v || t[2] == v) ++count;
    }
    return count;
  }

  bool is_boundary(int v) {
    for (int w : neighbors(v)) {
      if (edge_face_count(v, w) == 1) return true;
    }
    return false;
  }

  void push_edges(int v) {
    for (int w : neighbors(v)) {
      if (w < v) continue;
      push_pair(v, w);
    }
  }

  void push_pair(int a, int b) {
    const Mat4 q = quadric_[static_cast<std::size_t>(a)] + quadric_[static_cast<std::size_t>(b)];
    const int lo = std::min(a, b), hi = std::max(a, b);
    // both directions are queued so an invalid cheaper one does not block the other
    for (const auto& [keep, remove] : {std::pair{lo, hi}, std::pair{hi, lo}}) {
      queue_.push(Entry{quadric_cost(q, P(keep)), lo, hi, keep, remove, version_[static_cast<std::size_t>(keep)],
                        version_[static_cast<std::size_t>(remove)]});
    }
  }

  bool collapse_valid(int remove, int keep) {
    const bool edge_boundary = edge_face_count(remove, keep) == 1;
    const bool remove_boundary = boundary_[static_cast<std::size_t>(remove)];
    if (remove_boundary && !edge_boundary) return false;
    if (remove_boundary && !boundary_[static_cast<std::size_t>(keep)]) return false;

    // link condition
    const auto nr = neighbors(remove);
    const auto nk = neighbors(keep);
    std::vector<int> common;
    std::set_intersection(nr.begin(), nr.end(), nk.begin(), nk.end(), std::back_inserter(common));
    const std::size_t expected = edge_boundary ? 1 : 2;
    if (common.size() != expected) return false;
    if (nr.size() + nk.size() - common.size() - 2 < 3) return false;

    // no triangle may flip or degenerate
    for (int f : live_faces(remove)) {
      const auto& t = faces_[static_cast<std::size_t>(f)];
      if (t[0] == keep || t[1] == keep || t[2] == keep) continue;
      Vec3 before[3], after[3];
      for (int c = 0; c < 3; ++c) {
        before[c] = P(t[c]);
        after[c] = t[c] == remove ? P(keep) : P(t[c]);
      }
      const Vec3 n0 = (before[1] - before[0]).cross(before[2] - before[0]);
      const Vec3 n1 = (after[1] - after[0]).cross(after[2] - after[0]);
      if (n1.norm() <= 1e-12 * std::max(1.0, n0.norm())) return false;
      if (n0.dot(n1) <= 0.0) return false;
    }
    return true;
  }

  void collapse(int remove, int keep) {
    const auto faces = live_faces(remove);
    for (int f : faces) {
      auto& t = faces_[static_cast<std::size_t>(f)];
      if (t[0] == keep || t[1] == keep || t[2] == keep) {
        face_alive_[static_cast<std::size_t>(f)] = false;
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        if (t[c] == remove) t[c] = keep;
      }
      vfaces_[static_cast<std::size_t>(keep)].push_back(f);
    }
    alive_[static_cast<std::size_t>(remove)] = false;
    quadric_[static_cast<std::size_t>(keep)] += quadric_[static_cast<std::size_t>(remove)];
    const auto nb = neighbors(keep);
    ++version_[static_cast<std::size_t>(keep)];
    for (int w : nb) ++version_[static_cast<std::size_t>(w)];
    boundary_[static_cast<std::size_t>(keep)] = is_boundary(keep);
    for (int w : nb) boundary_[static_cast<std::size_t>(w)] = is_boundary(w);
    push_edges_all(keep);
    for (int w : nb) push_edges_all(w);
  }

  void push_edges_all(int v) {
    for (int w : neighbors(v)) push_pair(v, w);
  }

  int n_;
  std::vector<Vec3> pos_;
  std::vector<Triangle> faces_;
  std::vector<bool> face_alive_;
  std::vector<std::vector<int>> vfaces_;
  std::vector<bool> alive_;
  std::vector<int> version_;
  std::vector<bool> boundary_;
  std::vector<Mat4> quadric_;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
};

/// Closest point on triangle abc to p, as barycentric weights (Ericson).
Eigen::Vector3d closest_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

}  // namespace

Decimation quadric_decimate(const Mesh& mesh, int target) {
  if (target < 3) throw InvalidInputError("decimation target must keep at least 3 vertices");
  if (target >= mesh.vertex_count()) {
    Decimation d;
    for (int i = 0; i < mesh.vertex_count(); ++i) d.kept.push_back(i);
    d.triangles = mesh.topology->triangles();
    return d;
  }
  Decimator dec(mesh);
  return dec.run(target);
}

SparseTransfer barycentric_upsample(const Mesh& fine, const Mesh& coarse) {
  SparseTransfer t;
  t.rows = fine.vertex_count();
  t.cols = coarse.vertex_count();
  t.entries.resize(static_cast<std::size_t>(t.rows));
  const auto& tris = coarse.topology->triangles();
  for (int i = 0; i < t.rows; ++i) {
    const Vec3 p = fine.positions.row(i).transpose();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Vector3d best_w(1, 0, 0);
    Triangle best_t{0, 0, 0};
    for (const auto& tri : tris) {
      const Vec3 a = coarse.positions.row(tri[0]).transpose();
      const Vec3 b = coarse.positions.row(tri[1]).transpose();
      const Vec3 c = coarse.positions.row(tri[2]).transpose();
      const Eigen::Vector3d w = closest_barycentric(p, a, b, c);
      const double d = (w[0] * a + w[1] * b + w[2] * c - p).squaredNorm();
      if (d < best) {
        best = d;
        best_w = w;
        best_t = tri;
      }
    }
    auto& row = t.entries[static_cast<std::size_t>(i)];
    for (int c = 0; c < 3; ++c) {
      if (best_w[c] != 0.0) row.emplace_back(best_t[static_cast<std::size_t>(c)], best_w[c]);
    }
    std::sort(row.begin(), row.end());
  }
  return t;
}

SamplingHierarchy build_hierarchy(const Mesh& reference, const HierarchyOptions& options) {
  if (options.levels < 1) throw InvalidInputError("hierarchy needs at least one level");
  if (options.factor < 2) throw InvalidInputError("sampling factor must be at least 2");
  std::vector<int> sizes{reference.vertex_count()};
  for (int l = 0; l < options.levels; ++l) sizes.push_back((sizes.back() + options.factor - 1) / options.factor);
  if (sizes.back() < 4) {
    throw TopologyError("coarsest level would keep " + std::to_string(sizes.back()) + " vertices (need >= 4); use fewer levels");
  }
  std::vector<int> lengths = options.spiral_lengths;
  if (lengths.empty()) {
    for (int l = 0; l <= options.levels; ++l) {
      const double t = static_cast<double>(l) / options.levels;
      lengths.push_back(static_cast<int>(std::lround(options.fine_spiral + t * (options.coarse_spiral - options.fine_spiral))));
    }
  }
  if (static_cast<int>(lengths.size()) != options.levels + 1) throw InvalidInputError("need one spiral length per level");

  SamplingHierarchy h;
  h.levels.push_back(reference);
  for (int l = 0; l < options.levels; ++l) {
    const Mesh& fine = h.levels.back();
    Decimation dec = quadric_decimate(fine, sizes[static_cast<std::size_t>(l + 1)]);
    Points3 pos(static_cast<Eigen::Index>(dec.kept.size()), 3);
    for (std::size_t i = 0; i < dec.kept.size(); ++i) pos.row(static_cast<Eigen::Index>(i)) = fine.positions.row(dec.kept[i]);
    auto topo = std::make_shared<const MeshTopology>(static_cast<int>(dec.kept.size()), std::move(dec.triangles));
    Mesh coarse(topo, std::move(pos));

    SparseTransfer down;
    down.rows = coarse.vertex_count();
    down.cols = fine.vertex_count();
    down.entries.resize(static_cast<std::size_t>(down.rows));
    for (std::size_t i = 0; i < dec.kept.size(); ++i) down.entries[i].emplace_back(dec.kept[i], 1.0);

    h.up.push_back(barycentric_upsample(fine, coarse));
    h.down.push_back(std::move(down));
    h.kept.push_back(std::move(dec.kept));
    h.levels.push_back(std::move(coarse));
  }
  for (int l = 0; l <= options.levels; ++l) {
    h.spirals.push_back(spiral_sequences(*h.levels[static_cast<std::size_t>(l)].topology, lengths[static_cast<std::size_t>(l)]));
  }
  return h;
}

}  // namespace s2d4d
