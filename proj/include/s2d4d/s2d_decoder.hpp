#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2d4d/autodiff.hpp"
#include "s2d4d/checkpoint.hpp"
#include "s2d4d/hierarchy.hpp"
#include "s2d4d/nn.hpp"

// Sparse-to-dense decoder: a k×3 landmark displacement is lifted by a fully
// connected layer to the coarsest hierarchy level and expanded by spiral
// convolutions and up-sampling to an N×3 displacement field.

namespace s2d4d {

struct DecoderConfig {
  int landmarks = 68;
  /// Output channels of the spiral layers, coarse to fine; the last must be 3.
  std::vector<int> channels{64, 32, 32, 16, 3};
  double slope = 0.2;
  /// false: each spiral layer runs on its level and is followed by
  /// up-sampling. true: up-sample first, so the last layer runs at full
  /// resolution.
  bool upsample_first = false;

  nlohmann::json to_json() const;
  static DecoderConfig from_json(const nlohmann::json& j);
};

/// Hierarchy options matching a decoder config (one level per spiral layer).
HierarchyOptions decoder_hierarchy_options(const DecoderConfig& cfg, int factor = 4);

class S2DDecoder {
 public:
  /// Random (Glorot) initialization. Throws ShapeError when the hierarchy
  /// depth differs from the number of spiral layers.
  S2DDecoder(DecoderConfig cfg, std::shared_ptr<const SamplingHierarchy> hierarchy, Rng& rng);

  const DecoderConfig& config() const { return cfg_; }
  const SamplingHierarchy& hierarchy() const { return *hierarchy_; }
  int vertex_count() const { return hierarchy_->vertex_count(0); }
  int input_dim() const { return 3 * cfg_.landmarks; }
  /// Width of the fully connected output (coarsest vertices × first channel count).
  Eigen::Index lift_width() const { return fc_.out(); }

  /// B×3k landmark displacements -> B×3N vertex displacements.
  ad::Var forward(const ad::Var& d) const;
  Matrix forward(const Matrix& d) const;
  DisplacementField forward(const SparseDisplacement& d) const;

  std::vector<ad::Var> parameters() const;
  std::size_t parameter_count() const;

  /// Tensors `s2d.*` plus the hierarchy reference mesh; meta under "s2d".
  void store(Checkpoint& ck) const;
  /// Rebuilds the hierarchy from the stored reference mesh.
  static S2DDecoder load(const Checkpoint& ck);

 private:
  S2DDecoder() = default;
  void build_plan();

  DecoderConfig cfg_;
  std::shared_ptr<const SamplingHierarchy> hierarchy_;
  nn::Dense fc_;
  std::vector<nn::Dense> convs_;

  struct Layer {
    int level = 0;  // level the convolution runs on
    int vertices = 0;
    int in_channels = 0;
    std::shared_ptr<const std::vector<int>> gather;  // spiral gather index
    std::shared_ptr<const SparseTransfer> up;        // level -> level-1, or null
    std::shared_ptr<const SparseTransfer> pre_up;    // up-sampling before the conv, or null
  };
  std::vector<Layer> plan_;
};

/// Spiral convolution on a batch: x is B×(V·Cin), weight (S·Cin)×Cout.
ad::Var spiral_conv(const ad::Var& x, const std::shared_ptr<const std::vector<int>>& gather, int vertices,
                    const nn::Dense& layer);
std::shared_ptr<const std::vector<int>> spiral_gather_index(const SpiralTable& spirals, int channels);

// ---------------------------------------------------------------- loss

struct S2DLossWeights {
  double beta1 = 1.0;
  double beta2 = 0.1;
};

/// beta1 * L_dr(pred, gt) + beta2 * weighted_point_l1(neutral + pred, gt_mesh, w).
/// Throws InvalidInputError when gt_mesh differs from neutral + gt by more
/// than 1e-9 at any coordinate.
double s2d_loss(const DisplacementField& pred, const DisplacementField& gt, const Mesh& neutral, const Mesh& gt_mesh,
                const VertexWeightTable& w, const S2DLossWeights& beta);

// ---------------------------------------------------------------- training

enum class S2DLossMode { DisplacementOnly, Unweighted, Weighted };

std::string to_string(S2DLossMode m);
S2DLossMode parse_loss_mode(const std::string& s);

/// Training pairs in factored form: pair (p, c) has input c·landmark.row(p)
/// and target c·dense.row(p).
struct S2DDataset {
  Matrix landmark;  // P×3k
  Matrix dense;     // P×3N
  std::vector<int> weight_row;  // per pattern, row of `weights`
  Matrix weights;               // I×N vertex weights (one row per neutral)
  std::vector<std::pair<int, double>> pairs;

  std::size_t size() const { return pairs.size(); }
  int vertex_count() const { return static_cast<int>(dense.cols() / 3); }
  /// Appends a neutral and returns its weight row.
  int add_neutral(const Mesh& neutral, const LandmarkIndexTable& table);
  /// One pattern per frame (coefficient 1); frame meshes must share the neutral's topology.
  void add_sequence(int weight_row, const Mesh& neutral, const std::vector<Mesh>& frames,
                    const LandmarkIndexTable& table, int frame_stride = 1);
  /// Single pattern scaled by `coefficients` (frames neutral + c·dense).
  void add_pattern(int weight_row, const Vector& landmark_row, const Vector& dense_row,
                   const std::vector<double>& coefficients);

  Matrix inputs(const std::vector<std::size_t>& idx) const;
  Matrix targets(const std::vector<std::size_t>& idx) const;
};

struct S2DTrainConfig {
  S2DLossWeights beta;
  double lr = 1e-3;
  int batch = 16;
  int epochs = 300;
  std::uint64_t seed = 1;
  S2DLossMode mode = S2DLossMode::Weighted;

  nlohmann::json to_json() const;
  static S2DTrainConfig from_json(const nlohmann::json& j);
};

struct S2DEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_error = 0.0;
};

struct S2DTrainResult {
  std::vector<S2DEpochLog> log;
  int best_epoch = 0;
  double best_validation_error = 0.0;
};

/// Mean per-vertex Euclidean error of the decoder over the dataset pairs.
double mean_vertex_error(const S2DDecoder& net, const S2DDataset& data);
/// Per-pair mean per-vertex errors.
std::vector<double> pair_vertex_errors(const S2DDecoder& net, const S2DDataset& data);

/// Adam over L_S2D. The decoder ends holding the parameters of the epoch
/// with the lowest validation error. Throws DivergenceError on a non-finite loss.
S2DTrainResult train_s2d(S2DDecoder& net, const S2DDataset& train, const S2DDataset& validation,
                         const S2DTrainConfig& cfg);

std::string format_s2d_log_csv(const S2DTrainResult& result);

// ---------------------------------------------------------------- applications

Mesh generate_expressive_mesh(const S2DDecoder& net, const Mesh& neutral, const SparseDisplacement& d);

/// One mesh per frame: d_t = frame_t - landmarks(neutral).
std::vector<Mesh> generate_4d(const S2DDecoder& net, const Mesh& neutral, const LandmarkSequence& seq,
                              const LandmarkIndexTable& table);

/// Motion of `source` (as an SRVF) replayed from the target's neutral landmarks.
LandmarkSequence transfer_landmarks(const LandmarkSequence& source, const LandmarkFrame& target_neutral);
std::vector<Mesh> transfer(const S2DDecoder& net, const LandmarkSequence& source, const Mesh& target_neutral,
                           const LandmarkIndexTable& table);

Mesh neutralize(const S2DDecoder& net, const Mesh& expressive, const LandmarkFrame& neutral_template,
                const LandmarkIndexTable& table);

}  // namespace s2d4d
