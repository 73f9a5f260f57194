#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2d4d/curve_manifold.hpp"
#include "s2d4d/mesh.hpp"

// Deterministic synthetic faces: a half-ellipsoid grid with facial features,
// 68 landmarks at fixed loci of the parameter domain, and expressions built
// from localized muscle-like actuators (geodesic falloff) plus a jaw
// rotation. A sequence runs from the neutral to the apex:
//   S_t = S_n + e(t) * B_seq,  e(0) = 0, e(T-1) = 1, e nondecreasing.

namespace s2d4d {

struct SynthFaceSpec {
  int resolution = 1500;         // target vertex count
  int identities = 20;
  int classes = 6;               // at most expression_class_names().size()
  int sequences_per_class = 5;
  int frames = 30;
  std::uint64_t seed = 1;
  double jitter = 0.2;           // per-sequence actuator noise (relative)
  double identity_style = 0.15;  // per-identity class-weight perturbation

  nlohmann::json to_json() const;
  /// Rejects unknown keys.
  static SynthFaceSpec from_json(const nlohmann::json& j);
  void validate() const;
};

const std::vector<std::string>& expression_class_names();
int actuator_count();

struct FaceTemplate {
  TopologyPtr topology;
  LandmarkIndexTable landmarks;
  /// Disk-domain parameter coordinates of every vertex (N×2).
  Eigen::MatrixX2d domain;
  int grid = 0;
};

/// Grid topology over the unit disk with 68 landmark vertices. Throws
/// InvalidInputError when the resolution is below 200 or two landmark loci
/// cannot be given distinct nearby vertices.
FaceTemplate make_face_template(int resolution);

struct IdentityParams {
  double rx = 80, ry = 105, rz = 70;
  double nose = 20, eye_depth = 6, mouth_protrusion = 3, chin = 4;
  double eye_spacing = 0, mouth_shift = 0, brow_shift = 0;
  std::vector<Eigen::Vector4d> bumps;  // (x, y, width, amplitude) surface noise
};

IdentityParams sample_identity(std::uint64_t seed);
Mesh make_neutral(const FaceTemplate& tmpl, const IdentityParams& id);

/// Actuator displacement fields of one identity (evaluated on its neutral).
class ActuatorRig {
 public:
  ActuatorRig(const FaceTemplate& tmpl, const Mesh& neutral);
  /// Dense displacement for activation vector w (size actuator_count()).
  Points3 displacement(const Eigen::VectorXd& w) const;

 private:
  struct Field {
    int kind = 0;
    std::vector<int> vertices;
    std::vector<double> falloff;
    std::vector<Eigen::RowVector3d> direction;  // unit direction per vertex (pull kinds)
    double amplitude = 0.0;
  };
  std::vector<Field> fields_;
  Points3 positions_;
  Eigen::RowVector3d jaw_pivot_;
  Eigen::VectorXd jaw_mask_;
};

/// Class weights over actuators (row c = class c).
Eigen::MatrixXd class_actuator_weights();

struct SynthSequence {
  int identity = 0;
  int label = 0;
  int repetition = 0;
  std::vector<double> envelope;  // T values
  Points3 blendshape;            // apex displacement B_seq
  double intensity = 1.0;
};

/// Per-sequence data for one identity and class; frame t = neutral + envelope[t]*blendshape.
struct SynthCorpus {
  SynthFaceSpec spec;
  FaceTemplate face;
  std::vector<Mesh> neutrals;           // per identity
  std::vector<SynthSequence> sequences; // identity-major, then class, then repetition

  Mesh frame_mesh(const SynthSequence& s, int t) const;
  DisplacementField frame_displacement(const SynthSequence& s, int t) const;
  LandmarkSequence landmark_sequence(const SynthSequence& s) const;
  const Mesh& neutral(const SynthSequence& s) const { return neutrals[static_cast<std::size_t>(s.identity)]; }
};

/// Monotone neutral-to-apex profile: smoothstep(s^gamma), s = t/(T-1).
std::vector<double> make_envelope(int frames, double gamma);

SynthCorpus generate_corpus(const SynthFaceSpec& spec);
/// One sequence (identity seed, class) with its neutral and all frames.
struct SampledSequence {
  Mesh neutral;
  std::vector<Mesh> frames;
  LandmarkSequence landmarks;
  LandmarkIndexTable table;
};
SampledSequence sample_expression_sequence(const SynthFaceSpec& spec, std::uint64_t identity_seed, int label,
                                           int frames);

struct ExportOptions {
  /// Sequences exported (indices into corpus.sequences); empty = all.
  std::vector<std::size_t> subset;
};

/// corpus/<identity>/<class>/<repetition>/frame_%04d.obj with landmarks.txt in
/// each sequence directory, plus landmarks.txt and meta.json at the root.
void export_corpus(const SynthCorpus& corpus, const std::filesystem::path& root, const ExportOptions& opts = {});

std::string sequence_dir_name(const SynthCorpus& corpus, const SynthSequence& s);

struct IngestedSequence {
  std::vector<Mesh> frames;
  LandmarkSequence landmarks;
  LandmarkIndexTable table;
};

/// Lexically ordered .obj/.ply frames plus landmarks.txt (or the file given).
/// Throws TopologyError when connectivity changes between frames.
IngestedSequence ingest_sequence_dir(const std::filesystem::path& dir,
                                     const std::filesystem::path& landmark_file = {});

}  // namespace s2d4d
