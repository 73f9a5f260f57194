#pragma once

#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2d4d/autodiff.hpp"
#include "s2d4d/checkpoint.hpp"
#include "s2d4d/curve_manifold.hpp"
#include "s2d4d/nn.hpp"

// Conditional Wasserstein GAN with gradient penalty in the tangent space of
// the SRVF hypersphere at a reference point p. Tangent vectors are rows of
// length (T-1)·3k in the Srvf sample layout.

namespace s2d4d {

/// Generated tangents longer than this are rescaled onto it.
inline constexpr double kTangentNormCap = std::numbers::pi - 1e-3;

struct GanConfig {
  int noise = 128;
  int classes = 12;
  int frames = 30;  // T
  int landmarks = 68;
  std::vector<int> generator_hidden{512, 512, 512};
  std::vector<int> critic_hidden{512, 512, 512};
  double slope = 0.2;

  int tangent_dim() const { return (frames - 1) * 3 * landmarks; }
  nlohmann::json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

struct GanTrainConfig {
  double alpha1 = 1.0;
  double alpha2 = 10.0;
  double lambda = 10.0;
  double lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int batch = 128;
  int epochs = 8000;
  int critic_steps = 5;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static GanTrainConfig from_json(const nlohmann::json& j);
};

/// One-hot rows for `labels`.
Matrix one_hot(const std::vector<int>& labels, int classes);

/// Critic callable: (B×D tangents, B×C labels) -> B×1 scores.
using CriticFn = std::function<ad::Var(const ad::Var&, const ad::Var&)>;

class MotionGan {
 public:
  MotionGan(GanConfig cfg, SpherePoint reference, Rng& rng);

  const GanConfig& config() const { return cfg_; }
  const SpherePoint& reference() const { return reference_; }

  /// Generator output projected onto the tangent space at p, with its norm
  /// clamped to pi - 1e-3 (B×noise, B×classes -> B×D).
  ad::Var generate_tangent(const ad::Var& z, const ad::Var& labels) const;
  TangentVector generate_tangent(const Vector& z, int label) const;
  SpherePoint generate_motion(const Vector& z, int label) const;
  /// Standard normal noise vector.
  Vector sample_noise(Rng& rng) const;

  ad::Var critic(const ad::Var& tangents, const ad::Var& labels) const;
  CriticFn critic_fn() const;

  std::vector<ad::Var> generator_parameters() const { return generator_.parameters(); }
  std::vector<ad::Var> critic_parameters() const { return critic_.parameters(); }

  /// Mean training-set scale per class (normalized landmark units).
  std::vector<double> class_scales;

  void store(Checkpoint& ck) const;
  static MotionGan load(const Checkpoint& ck);

 private:
  MotionGan() = default;
  void check_shapes() const;

  GanConfig cfg_;
  SpherePoint reference_;
  Matrix reference_row_;  // 1×D
  nn::Mlp generator_;
  nn::Mlp critic_;
};

/// Flattened tangent data (1×D).
Matrix tangent_row(const TangentVector& v);
Matrix tangent_row(const Matrix& samples);

/// Mean over the batch of (|grad_x D(x_hat, c)|_2 - 1)^2 with
/// x_hat = (1 - tau) real + tau fake (tau per row). With create_graph the
/// result can be differentiated again with respect to the critic parameters.
ad::Var gradient_penalty(const CriticFn& critic, const Matrix& real, const Matrix& fake, const Matrix& labels,
                         const Vector& tau, bool create_graph = true);

struct AdversarialLosses {
  ad::Var critic;             // mean D(fake) - mean D(real) + lambda * penalty
  ad::Var generator;          // -mean D(fake)
  double wasserstein = 0.0;   // mean D(real) - mean D(fake)
  double penalty = 0.0;
};

/// `fake` is the generator output for the batch (graph attached); the critic
/// term sees it detached.
AdversarialLosses adversarial_loss(const CriticFn& critic, const Matrix& real, const ad::Var& fake,
                                   const Matrix& labels, const Vector& tau, double lambda);

/// Mean over rows of |fake_i - log_p(q_i)|_1 (rows of `target` hold log_p(q_i)).
ad::Var reconstruction_loss(const ad::Var& fake, const Matrix& target);
double reconstruction_loss(const MotionGan& gan, const Vector& z, int label, const SpherePoint& q_gt);

struct GanDataset {
  std::vector<SpherePoint> points;
  std::vector<int> labels;
};

/// Landmark sequences -> normalized (centroid, Frobenius norm of the first
/// frame) -> SRVF sphere points.
GanDataset make_gan_dataset(const std::vector<LandmarkSequence>& sequences, const std::vector<int>& labels);

struct GanEpochLog {
  int epoch = 0;
  double wasserstein = 0.0;
  double l_r = 0.0;
  double penalty = 0.0;
};

struct GanTrainResult {
  std::vector<GanEpochLog> log;
  double initial_l_r = 0.0;  // before the first update
};

/// Tangent rows log_p(q_i) of the dataset. Throws InvalidInputError when a
/// point is (numerically) antipodal to p.
Matrix dataset_tangents(const SpherePoint& p, const GanDataset& data);

/// Alternating critic / generator Adam updates. Every training sample keeps
/// a fixed noise vector for the reconstruction term. The log's l_r is the
/// reconstruction loss over the whole dataset at the end of each epoch.
/// `on_epoch` (optional) runs after every epoch, e.g. for checkpointing.
GanTrainResult train_gan(MotionGan& gan, const GanDataset& data, const GanTrainConfig& cfg,
                         const std::function<void(const GanEpochLog&)>& on_epoch = {});

std::string format_gan_log_csv(const GanTrainResult& result);

/// Generated motion for `label` decoded from `neutral`: frame_t = neutral +
/// norm(neutral) * offset_t, so frame 0 is the neutral exactly. scale <= 0
/// uses the class mean scale.
LandmarkSequence sample_sequence(const MotionGan& gan, int label, std::uint64_t seed, const LandmarkFrame& neutral,
                                 double scale = 0.0);
/// Sphere point of sample_sequence (same seed stream).
SpherePoint sample_motion(const MotionGan& gan, int label, std::uint64_t seed);

/// Offsets of a sphere point replayed from `neutral` (see sample_sequence).
LandmarkSequence decode_motion(const SpherePoint& point, const LandmarkFrame& neutral, double scale);

}  // namespace s2d4d
