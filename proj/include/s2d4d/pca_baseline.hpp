#pragma once

#include <string>
#include <vector>

#include "s2d4d/checkpoint.hpp"
#include "s2d4d/mesh.hpp"
#include "s2d4d/s2d_decoder.hpp"

// Linear displacement model (PCA) fitted to landmarks, the comparison
// baseline for the decoder.

namespace s2d4d {

/// Component counts of the reference baselines.
inline constexpr int kPcaInputSized = 204;
inline constexpr int kPcaPresetLarge = 220;
inline constexpr int kPcaPresetSmall = 38;

struct PcaModel {
  Vector mean;         // 3N mean displacement
  Matrix components;   // n × 3N, orthonormal rows
  Vector eigenvalues;  // n, descending
  double total_variance = 0.0;

  int component_count() const { return static_cast<int>(components.rows()); }
  int vertex_count() const { return static_cast<int>(mean.size() / 3); }
  /// Cumulative explained variance ratio per component.
  Vector explained_variance() const;

  void store(Checkpoint& ck, const std::string& prefix = "pca") const;
  static PcaModel load(const Checkpoint& ck, const std::string& prefix = "pca");
};

/// Rows of `samples` are flattened displacement fields. Components beyond
/// the data rank (e.g. fewer samples than components) have eigenvalue 0 and
/// complete the basis to an orthonormal set.
PcaModel build_pca(const Matrix& samples, int n_components);
PcaModel build_pca(const std::vector<DisplacementField>& displacements, int n_components);

struct PcaFitOptions {
  /// Tikhonov weight relative to the largest eigenvalue of A^T A (A: the
  /// model restricted to the landmark coordinates). 0 disables it.
  double relative_ridge = 1e-4;
};

/// Landmark-to-coefficient solver for one model and landmark table.
class PcaLandmarkFitter {
 public:
  PcaLandmarkFitter(const PcaModel& model, const LandmarkIndexTable& table, const PcaFitOptions& opts = {});

  /// Coefficients for a landmark displacement (k×3).
  Vector coefficients(const Points3& landmark_displacement) const;
  /// B×3k landmark displacements -> B×3N dense displacements.
  Matrix predict(const Matrix& landmark_displacements) const;

  double ridge() const { return ridge_; }
  /// True when ridge = 0 and the restricted system is rank deficient
  /// (minimum-norm pseudo-inverse solution).
  bool used_pseudo_inverse() const { return pinv_; }

 private:
  const PcaModel* model_;
  Vector mean_landmarks_;
  Matrix solve_;  // n × 3k: coefficients = solve_ (d - mean_landmarks)
  double ridge_ = 0.0;
  bool pinv_ = false;
};

struct PcaFit {
  Vector coefficients;
  Mesh fitted;
  bool pseudo_inverse = false;
  double ridge = 0.0;
};

/// Minimizes |Z^e - (Z^n + A c + mean_L)|^2 + ridge |c|^2; fitted mesh =
/// neutral + mean + components^T c.
PcaFit fit_landmarks(const PcaModel& model, const Mesh& neutral, const LandmarkFrame& target,
                     const LandmarkIndexTable& table, const PcaFitOptions& opts = {});

// ---------------------------------------------------------------- comparison

struct MethodReport {
  std::string method;
  std::string split;
  ErrorStats error;  // over all vertices of all test frames
  std::vector<double> curve;  // fraction of vertex errors <= each threshold
};

struct ComparisonReport {
  std::vector<double> thresholds;
  std::vector<MethodReport> rows;

  std::string csv() const;
  std::string text() const;
  std::string curves_csv() const;
};

/// Pooled per-vertex Euclidean errors of `predictions` (B×3N) against `targets`.
std::vector<double> vertex_errors(const Matrix& predictions, const Matrix& targets);
MethodReport summarize_errors(const std::string& method, const std::string& split, const std::vector<double>& errors,
                              const std::vector<double>& thresholds);
std::vector<double> default_thresholds(double max_mm = 10.0, int steps = 100);

/// Decoder ("ours") and every PCA model ("pca-<n>") on the same test pairs.
ComparisonReport evaluate_comparison(const S2DDataset& test, const std::string& split, const S2DDecoder* decoder,
                                     const std::vector<const PcaModel*>& models, const LandmarkIndexTable& table,
                                     const PcaFitOptions& opts = {});

}  // namespace s2d4d
