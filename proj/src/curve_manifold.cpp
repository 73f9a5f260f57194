#include "s2d4d/curve_manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace s2d4d {

namespace {

constexpr double kCoincident = 1e-12;
// log_p and interior geodesics are undefined this close to the antipode.
constexpr double kAntipodalMargin = 1e-7;

void require_same_layout(const SpherePoint& a, const SpherePoint& b) {
  if (a.srvf.samples.rows() != b.srvf.samples.rows() || a.srvf.samples.cols() != b.srvf.samples.cols()) {
    throw ShapeError("sphere points have different SRVF layouts");
  }
}

double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

}  // namespace

void LandmarkSequence::validate() const {
  if (frames.size() < 2) throw InvalidInputError("landmark sequence needs at least 2 frames");
  const auto k0 = frames.front().k();
  if (k0 <= 0) throw InvalidInputError("landmark frames are empty");
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].k() != k0) {
      throw ShapeError("frame " + std::to_string(t) + " has " + std::to_string(frames[t].k()) +
                       " landmarks, expected " + std::to_string(k0));
    }
    if (!frames[t].points.allFinite()) {
      throw InvalidInputError("frame " + std::to_string(t) + " contains non-finite coordinates");
    }
  }
}

double srvf_inner(const Matrix& a, const Matrix& b, double dt) {
  return a.cwiseProduct(b).sum() * dt;
}

double srvf_norm(const Matrix& a, double dt) { return std::sqrt(srvf_inner(a, a, dt)); }

Srvf srvf_encode(const LandmarkSequence& seq) {
  seq.validate();
  const auto T = static_cast<Eigen::Index>(seq.length());
  const auto k = seq.k();
  Srvf out;
  out.dt = seq.dt();
  out.samples = Matrix::Zero(T - 1, 3 * k);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const Vector v = (flatten(seq.frames[t + 1].points) - flatten(seq.frames[t].points)) / out.dt;
    const double speed = v.norm();
    if (speed > 0.0) out.samples.row(t) = v.transpose() / std::sqrt(speed);
  }
  return out;
}

SpherePoint srvf_normalize(const Srvf& q) {
  if (!q.samples.allFinite()) throw InvalidInputError("SRVF contains non-finite samples");
  const double norm = srvf_norm(q.samples, q.dt);
  if (!(norm > 0.0)) throw DegenerateMotionError("SRVF has zero norm (static motion cannot be normalized)");
  SpherePoint p;
  p.srvf.dt = q.dt;
  p.srvf.samples = q.samples / norm;
  p.scale = norm;
  return p;
}

LandmarkSequence srvf_decode(const Srvf& q, const LandmarkFrame& initial) {
  if (initial.k() != q.k()) {
    throw ShapeError("initial frame has " + std::to_string(initial.k()) + " landmarks, SRVF encodes " +
                     std::to_string(q.k()));
  }
  LandmarkSequence seq;
  seq.frames.reserve(static_cast<std::size_t>(q.segments() + 1));
  seq.frames.push_back(initial);
  Vector cur = flatten(initial.points);
  for (Eigen::Index t = 0; t < q.segments(); ++t) {
    const Vector s = q.samples.row(t).transpose();
    cur += s.norm() * s * q.dt;
    seq.frames.emplace_back(unflatten(cur));
  }
  return seq;
}

std::vector<Points3> srvf_decode_offsets(const SpherePoint& point, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidInputError("decode scale must be positive");
  const Srvf& q = point.srvf;
  std::vector<Points3> out;
  out.reserve(static_cast<std::size_t>(q.segments() + 1));
  Vector cur = Vector::Zero(q.samples.cols());
  out.push_back(unflatten(cur));
  for (Eigen::Index t = 0; t < q.segments(); ++t) {
    const Vector s = scale * q.samples.row(t).transpose();
    cur += s.norm() * s * q.dt;
    out.push_back(unflatten(cur));
  }
  return out;
}

LandmarkSequence srvf_decode(const SpherePoint& point, const LandmarkFrame& initial, double scale,
                             const DecodeOptions& options) {
  if (initial.k() != point.srvf.k()) {
    throw ShapeError("initial frame has " + std::to_string(initial.k()) + " landmarks, SRVF encodes " +
                     std::to_string(point.srvf.k()));
  }
  const auto offsets = srvf_decode_offsets(point, scale);
  LandmarkSequence seq;
  seq.frames.reserve(offsets.size());
  const Eigen::RowVector3d c0 = initial.points.colwise().mean();
  for (const auto& off : offsets) {
    Points3 f = initial.points + off;
    if (options.recenter) f.rowwise() += c0 - f.colwise().mean();
    seq.frames.emplace_back(std::move(f));
  }
  // frame 0 is the initial configuration bit for bit
  seq.frames.front() = initial;
  return seq;
}

double sphere_distance(const SpherePoint& a, const SpherePoint& b) {
  require_same_layout(a, b);
  // 2 atan2(|a-b|, |a+b|) equals acos(<a,b>) for unit vectors and stays
  // accurate near 0 and pi where acos loses digits.
  const double dt = a.srvf.dt;
  const double minus = srvf_norm(a.srvf.samples - b.srvf.samples, dt);
  const double plus = srvf_norm(a.srvf.samples + b.srvf.samples, dt);
  const double d = 2.0 * std::atan2(minus, plus);
  return std::clamp(d, 0.0, std::numbers::pi);
}

TangentVector log_map(const SpherePoint& p, const SpherePoint& q) {
  require_same_layout(p, q);
  const double dt = p.srvf.dt;
  TangentVector out;
  out.base = p;
  const double d = sphere_distance(p, q);
  if (d < kCoincident) {
    out.data = Matrix::Zero(p.srvf.samples.rows(), p.srvf.samples.cols());
    return out;
  }
  if (d > std::numbers::pi - kAntipodalMargin) {
    throw SingularityError("log map undefined at the antipode of the base point");
  }
  const double c = srvf_inner(p.srvf.samples, q.srvf.samples, dt);
  Matrix u = q.srvf.samples - c * p.srvf.samples;
  const double un = srvf_norm(u, dt);  // = sin(d) for unit inputs
  out.data = (d / un) * u;
  return out;
}

SpherePoint exp_map(const SpherePoint& p, const Matrix& s) {
  if (s.rows() != p.srvf.samples.rows() || s.cols() != p.srvf.samples.cols()) {
    throw ShapeError("tangent vector layout does not match base point");
  }
  const double dt = p.srvf.dt;
  const double n = srvf_norm(s, dt);
  if (!std::isfinite(n)) throw InvalidInputError("tangent vector is not finite");
  if (std::abs(srvf_inner(s, p.srvf.samples, dt)) > 1e-6 * std::max(1.0, n)) {
    throw InvalidInputError("vector is not tangent at the base point");
  }
  if (n == 0.0) return p;
  SpherePoint out;
  out.scale = p.scale;
  out.srvf.dt = dt;
  out.srvf.samples = std::cos(n) * p.srvf.samples + sinc(n) * s;
  out.srvf.samples /= srvf_norm(out.srvf.samples, dt);
  return out;
}

SpherePoint exp_map(const SpherePoint& p, const TangentVector& s) { return exp_map(p, s.data); }

SpherePoint geodesic_interpolate(const SpherePoint& a, const SpherePoint& b, double tau) {
  require_same_layout(a, b);
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInputError("interpolation parameter must lie in [0,1]");
  if (tau == 0.0) return a;
  if (tau == 1.0) return b;
  const double theta = sphere_distance(a, b);
  if (theta < kCoincident) return a;
  if (theta > std::numbers::pi - kAntipodalMargin) {
    throw SingularityError("geodesic between antipodal points is not unique");
  }
  SpherePoint out;
  out.srvf.dt = a.srvf.dt;
  const double st = std::sin(theta);
  out.srvf.samples = (std::sin((1.0 - tau) * theta) / st) * a.srvf.samples +
                     (std::sin(tau * theta) / st) * b.srvf.samples;
  out.scale = (1.0 - tau) * a.scale + tau * b.scale;
  return out;
}

SpherePoint extrinsic_mean(const std::vector<SpherePoint>& points) {
  if (points.empty()) throw InvalidInputError("mean of an empty set");
  SpherePoint out;
  out.srvf.dt = points.front().srvf.dt;
  out.srvf.samples = Matrix::Zero(points.front().srvf.samples.rows(), points.front().srvf.samples.cols());
  double scale = 0.0;
  for (const auto& q : points) {
    require_same_layout(points.front(), q);
    out.srvf.samples += q.srvf.samples;
    scale += q.scale;
  }
  const double n = srvf_norm(out.srvf.samples, out.srvf.dt);
  if (!(n > kCoincident)) throw DegenerateMotionError("extrinsic mean vanishes (points cancel out)");
  out.srvf.samples /= n;
  out.scale = scale / static_cast<double>(points.size());
  return out;
}

namespace {

Matrix mean_log(const SpherePoint& mu, const std::vector<SpherePoint>& points) {
  Matrix acc = Matrix::Zero(mu.srvf.samples.rows(), mu.srvf.samples.cols());
  for (const auto& q : points) acc += log_map(mu, q).data;
  return acc / static_cast<double>(points.size());
}

}  // namespace

double karcher_residual(const SpherePoint& mu, const std::vector<SpherePoint>& points) {
  return srvf_norm(mean_log(mu, points), mu.srvf.dt);
}

SpherePoint karcher_mean(const std::vector<SpherePoint>& points, const KarcherOptions& opts) {
  if (points.empty()) throw InvalidInputError("Karcher mean of an empty set");
  if (points.size() == 1) return points.front();
  SpherePoint mu = extrinsic_mean(points);
  for (int it = 0; it < opts.max_iter; ++it) {
    Matrix step = mean_log(mu, points);
    // drop the round-off normal component so exp_map's tangency check holds
    step -= srvf_inner(step, mu.srvf.samples, mu.srvf.dt) * mu.srvf.samples;
    if (srvf_norm(step, mu.srvf.dt) < opts.tol) return mu;
    const double scale = mu.scale;
    mu = exp_map(mu, step);
    mu.scale = scale;
  }
  throw ConvergenceError("Karcher mean did not converge in " + std::to_string(opts.max_iter) + " iterations",
                         mu);
}

std::vector<SparseDisplacement> sequence_to_sparse_displacements(const LandmarkSequence& seq,
                                                                 const LandmarkFrame& neutral) {
  std::vector<SparseDisplacement> out;
  out.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    if (f.k() != neutral.k()) {
      throw ShapeError("sequence has " + std::to_string(f.k()) + " landmarks, neutral has " +
                       std::to_string(neutral.k()));
    }
    out.push_back(SparseDisplacement{f.points - neutral.points});
  }
  return out;
}

LandmarkNormalization LandmarkNormalization::from_frame(const LandmarkFrame& neutral) {
  LandmarkNormalization n;
  n.centroid = neutral.points.colwise().mean();
  Points3 c = neutral.points;
  c.rowwise() -= n.centroid;
  n.norm = c.norm();
  if (!(n.norm > 0.0)) throw DegenerateMotionError("neutral landmark configuration has zero extent");
  return n;
}

LandmarkFrame LandmarkNormalization::apply(const LandmarkFrame& f) const {
  Points3 p = f.points;
  p.rowwise() -= centroid;
  return LandmarkFrame(p / norm);
}

LandmarkSequence LandmarkNormalization::apply(const LandmarkSequence& s) const {
  LandmarkSequence out;
  out.frames.reserve(s.frames.size());
  for (const auto& f : s.frames) out.frames.push_back(apply(f));
  return out;
}

LandmarkFrame LandmarkNormalization::invert(const LandmarkFrame& f) const {
  Points3 p = f.points * norm;
  p.rowwise() += centroid;
  return LandmarkFrame(p);
}

}  // namespace s2d4d
