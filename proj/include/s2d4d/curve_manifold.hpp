#pragma once

#include <vector>

#include "s2d4d/errors.hpp"
#include "s2d4d/types.hpp"

// Square-root velocity encoding of landmark trajectories and the geometry of
// the unit hypersphere of SRVFs. A trajectory of T frames of k landmarks is
// sampled uniformly on [0,1]; its SRVF has T-1 samples at interval midpoints
// and every inner product is weighted by dt = 1/(T-1).

namespace s2d4d {

struct LandmarkFrame {
  Points3 points;

  LandmarkFrame() = default;
  explicit LandmarkFrame(Points3 p) : points(std::move(p)) {}

  Eigen::Index k() const { return points.rows(); }
};

struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;

  std::size_t length() const { return frames.size(); }
  Eigen::Index k() const { return frames.empty() ? 0 : frames.front().k(); }
  double dt() const { return 1.0 / static_cast<double>(frames.size() - 1); }

  /// Throws InvalidInputError / ShapeError when T < 2, k varies or a value is not finite.
  void validate() const;
};

/// Discretized SRVF: `samples` is (T-1) × 3k, row t the flattened sample q_t.
struct Srvf {
  Matrix samples;
  double dt = 1.0;

  Eigen::Index segments() const { return samples.rows(); }
  Eigen::Index k() const { return samples.cols() / 3; }
  Eigen::Index dimension() const { return samples.size(); }
};

/// A unit-norm SRVF plus the norm removed when it was normalized.
struct SpherePoint {
  Srvf srvf;
  double scale = 1.0;
};

/// Element of the tangent space at `base`. `data` uses the Srvf sample layout.
struct TangentVector {
  Matrix data;
  SpherePoint base;
};

using ReferencePoint = SpherePoint;

/// Carries the last iterate of a Karcher iteration that did not converge.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, SpherePoint last)
      : Error(ErrorKind::Convergence, what), last_iterate_(std::move(last)) {}
  const SpherePoint& last_iterate() const noexcept { return last_iterate_; }

 private:
  SpherePoint last_iterate_;
};

// Discrete L2 structure: <a,b> = sum_t <a_t,b_t> dt.
double srvf_inner(const Matrix& a, const Matrix& b, double dt);
double srvf_norm(const Matrix& a, double dt);

Srvf srvf_encode(const LandmarkSequence& seq);
SpherePoint srvf_normalize(const Srvf& q);

/// Integrates |q|q dt from `initial` (no amplitude change).
LandmarkSequence srvf_decode(const Srvf& q, const LandmarkFrame& initial);

struct DecodeOptions {
  /// Translate every decoded frame so its centroid matches the initial frame's.
  bool recenter = false;
};

/// Recovers a trajectory from a sphere point: the samples are multiplied by
/// `scale` (amplitude restoration) and integrated from `initial`.
LandmarkSequence srvf_decode(const SpherePoint& point, const LandmarkFrame& initial, double scale,
                             const DecodeOptions& options = {});

/// Cumulative displacement of decoded frames relative to frame 0
/// (frame 0 is exactly zero). Shape: T entries of k×3.
std::vector<Points3> srvf_decode_offsets(const SpherePoint& point, double scale);

double sphere_distance(const SpherePoint& a, const SpherePoint& b);
TangentVector log_map(const SpherePoint& p, const SpherePoint& q);
SpherePoint exp_map(const SpherePoint& p, const TangentVector& s);
/// exp_p applied to raw tangent data (must be tangent at p).
SpherePoint exp_map(const SpherePoint& p, const Matrix& s);
SpherePoint geodesic_interpolate(const SpherePoint& a, const SpherePoint& b, double tau);

/// Normalized extrinsic (ambient) mean.
SpherePoint extrinsic_mean(const std::vector<SpherePoint>& points);

struct KarcherOptions {
  double tol = 1e-10;
  int max_iter = 500;
};

/// Intrinsic mean by fixed-point iteration of mu <- exp_mu(mean_i log_mu(x_i)),
/// started from the normalized extrinsic mean.
SpherePoint karcher_mean(const std::vector<SpherePoint>& points, const KarcherOptions& opts = {});

/// Norm of mean_i log_mu(x_i): the first-order stationarity residual.
double karcher_residual(const SpherePoint& mu, const std::vector<SpherePoint>& points);

/// frame_t - neutral for every frame.
std::vector<SparseDisplacement> sequence_to_sparse_displacements(const LandmarkSequence& seq,
                                                                 const LandmarkFrame& neutral);

/// Similarity normalization applied to landmarks before SRVF encoding:
/// subtract the neutral frame centroid, divide by the Frobenius norm of the
/// centered neutral frame.
struct LandmarkNormalization {
  Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
  double norm = 1.0;

  static LandmarkNormalization from_frame(const LandmarkFrame& neutral);
  LandmarkFrame apply(const LandmarkFrame& f) const;
  LandmarkSequence apply(const LandmarkSequence& s) const;
  LandmarkFrame invert(const LandmarkFrame& f) const;
};

}  // namespace s2d4d
