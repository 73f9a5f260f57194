#pragma once

#include <Eigen/Core>

namespace s2d4d {

/// Row-major n×3 coordinate block; row i is point i.
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Row-major dense matrix used for batched data and network tensors.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = Eigen::VectorXd;

/// k×3 landmark displacement (expressive minus neutral landmarks).
struct SparseDisplacement {
  Points3 values;

  Eigen::Index landmark_count() const { return values.rows(); }
};

/// Flattens an n×3 block into a 3n row vector (x0 y0 z0 x1 ...).
inline Vector flatten(const Points3& p) {
  return Eigen::Map<const Vector>(p.data(), p.size());
}

inline Points3 unflatten(const Eigen::Ref<const Vector>& v) {
  return Eigen::Map<const Points3>(v.data(), v.size() / 3, 3);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace s2d4d
