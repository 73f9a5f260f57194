#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2d4d/motion_gan.hpp"
#include "s2d4d/pca_baseline.hpp"
#include "s2d4d/s2d_decoder.hpp"
#include "s2d4d/synth.hpp"

// Glue between the synthetic corpus, the two networks and the baseline:
// splits, datasets, desk-scale presets and the JSON pipeline config.

namespace s2d4d {

inline constexpr const char* kVersion = "0.1.0";

struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Expression-independent split: the last `held_out_classes` classes form
/// the test split; of the remaining sequences, those of the last
/// `validation_identities` identities validate.
CorpusSplit expression_split(const SynthCorpus& corpus, int held_out_classes = 2, int validation_identities = 2);

/// Pairs (landmark displacement, dense displacement) for every
/// `frame_stride`-th frame of the given sequences.
S2DDataset make_s2d_dataset(const SynthCorpus& corpus, const std::vector<std::size_t>& sequences, int frame_stride);

/// Template identity (mean parameters) used as the hierarchy reference.
Mesh template_neutral(const FaceTemplate& face);

/// Landmark sequences and labels of the given corpus sequences.
GanDataset make_gan_dataset(const SynthCorpus& corpus, const std::vector<std::size_t>& sequences);

struct PipelineConfig {
  std::uint64_t seed = 1;
  int frame_stride = 3;
  int held_out_classes = 2;
  int validation_identities = 2;
  int hierarchy_factor = 4;
  DecoderConfig decoder;
  S2DTrainConfig s2d_train;
  GanConfig gan;
  GanTrainConfig gan_train;
  int pca_components = kPcaInputSized;
  double pca_relative_ridge = 1e-4;
  /// Optional consistency checks against the corpus.
  std::optional<std::string> topology_hash;
  std::optional<int> landmarks;
  std::optional<int> frames;
  std::optional<int> classes;

  /// Desk-scale defaults (small corpus, short schedules).
  static PipelineConfig desk();
  nlohmann::json to_json() const;
  /// Keys missing from `j` keep their desk() values; unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j);
  /// Throws InvalidInputError when an optional check disagrees with the corpus.
  void check_corpus(const SynthCorpus& corpus) const;
};

/// Regenerates the corpus recorded in <dir>/meta.json and verifies its
/// topology hash. Throws FormatError on a missing or malformed meta file.
SynthCorpus load_corpus(const std::filesystem::path& dir);

struct TrainedDecoder {
  std::shared_ptr<S2DDecoder> net;
  S2DTrainResult result;
  double untrained_test_error = 0.0;
  double test_error = 0.0;
};

/// Builds the hierarchy on the template neutral, initializes with the
/// "s2d-init" stream and trains on the expression split.
TrainedDecoder train_decoder(const SynthCorpus& corpus, const PipelineConfig& cfg);
std::shared_ptr<S2DDecoder> make_decoder(const SynthCorpus& corpus, const PipelineConfig& cfg);

/// Decoder checkpoint with the landmark table and corpus hash in its meta.
Checkpoint decoder_checkpoint(const S2DDecoder& net, const LandmarkIndexTable& table);
LandmarkIndexTable checkpoint_landmarks(const Checkpoint& ck);

/// PCA over the dense displacements of the training split.
PcaModel fit_corpus_pca(const SynthCorpus& corpus, const PipelineConfig& cfg, int n_components);

/// GAN on all sequences of the corpus (labels = corpus classes), reference
/// point = Karcher mean of the training points.
MotionGan make_gan(const SynthCorpus& corpus, const PipelineConfig& cfg, const GanDataset& data);

}  // namespace s2d4d
