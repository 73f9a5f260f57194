#include "s2d4d/pipeline.hpp"

#include <algorithm>

#include "s2d4d/errors.hpp"
#include "s2d4d/io.hpp"

namespace s2d4d {

CorpusSplit expression_split(const SynthCorpus& corpus, int held_out_classes, int validation_identities) {
  const int classes = corpus.spec.classes;
  if (held_out_classes < 0 || held_out_classes >= classes) {
    throw InvalidInputError("held-out class count must leave at least one training class");
  }
  if (validation_identities < 0 || validation_identities >= corpus.spec.identities) {
    throw InvalidInputError("validation identities must leave at least one training identity");
  }
  CorpusSplit split;
  const int first_test = classes - held_out_classes;
  const int first_val = corpus.spec.identities - validation_identities;
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    const auto& s = corpus.sequences[i];
    if (s.label >= first_test) split.test.push_back(i);
    else if (s.identity >= first_val) split.validation.push_back(i);
    else split.train.push_back(i);
  }
  return split;
}

S2DDataset make_s2d_dataset(const SynthCorpus& corpus, const std::vector<std::size_t>& sequences, int frame_stride) {
  if (frame_stride < 1) throw InvalidInputError("frame stride must be >= 1");
  S2DDataset d;
  std::vector<int> rows;
  for (const auto& n : corpus.neutrals) rows.push_back(d.add_neutral(n, corpus.face.landmarks));
  const auto& idx = corpus.face.landmarks.indices;
  for (std::size_t i : sequences) {
    const SynthSequence& s = corpus.sequences.at(i);
    Points3 lm(static_cast<Eigen::Index>(idx.size()), 3);
    for (std::size_t l = 0; l < idx.size(); ++l) lm.row(static_cast<Eigen::Index>(l)) = s.blendshape.row(idx[l]);
    std::vector<double> coeffs;
    for (std::size_t t = 0; t < s.envelope.size(); t += static_cast<std::size_t>(frame_stride)) {
      coeffs.push_back(s.envelope[t]);
    }
    d.add_pattern(rows[static_cast<std::size_t>(s.identity)], flatten(lm), flatten(s.blendshape), coeffs);
  }
  return d;
}

Mesh template_neutral(const FaceTemplate& face) { return make_neutral(face, IdentityParams{}); }

GanDataset make_gan_dataset(const SynthCorpus& corpus, const std::vector<std::size_t>& sequences) {
  std::vector<LandmarkSequence> seqs;
  std::vector<int> labels;
  for (std::size_t i : sequences) {
    seqs.push_back(corpus.landmark_sequence(corpus.sequences.at(i)));
    labels.push_back(corpus.sequences[i].label);
  }
  return make_gan_dataset(seqs, labels);
}

// ---------------------------------------------------------------- config

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c;
  c.decoder.channels = {64, 32, 16, 3};
  c.s2d_train.epochs = 40;
  c.gan.classes = 6;
  c.gan.generator_hidden = {128, 128, 128};
  c.gan.critic_hidden = {128, 128, 128};
  c.gan_train.epochs = 60;
  c.gan_train.batch = 64;
  c.gan_train.lr = 1e-3;
  return c;
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j{{"seed", seed},
                   {"frame_stride", frame_stride},
                   {"held_out_classes", held_out_classes},
                   {"validation_identities", validation_identities},
                   {"hierarchy_factor", hierarchy_factor},
                   {"decoder", decoder.to_json()},
                   {"s2d_train", s2d_train.to_json()},
                   {"gan", gan.to_json()},
                   {"gan_train", gan_train.to_json()},
                   {"pca_components", pca_components},
                   {"pca_relative_ridge", pca_relative_ridge}};
  if (topology_hash) j["topology_hash"] = *topology_hash;
  if (landmarks) j["landmarks"] = *landmarks;
  if (frames) j["frames"] = *frames;
  if (classes) j["classes"] = *classes;
  return j;
}

namespace {

// Section overrides; the section's own parser rejects unknown keys.
nlohmann::json merged(nlohmann::json base, const nlohmann::json& overrides) {
  if (!overrides.is_object()) throw InvalidInputError("config sections must be JSON objects");
  base.update(overrides);
  return base;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInputError("pipeline config must be a JSON object");
  PipelineConfig c = desk();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "frame_stride") c.frame_stride = value.get<int>();
      else if (key == "held_out_classes") c.held_out_classes = value.get<int>();
      else if (key == "validation_identities") c.validation_identities = value.get<int>();
      else if (key == "hierarchy_factor") c.hierarchy_factor = value.get<int>();
      else if (key == "decoder") c.decoder = DecoderConfig::from_json(merged(c.decoder.to_json(), value));
      else if (key == "s2d_train") c.s2d_train = S2DTrainConfig::from_json(merged(c.s2d_train.to_json(), value));
      else if (key == "gan") c.gan = GanConfig::from_json(merged(c.gan.to_json(), value));
      else if (key == "gan_train") c.gan_train = GanTrainConfig::from_json(merged(c.gan_train.to_json(), value));
      else if (key == "pca_components") c.pca_components = value.get<int>();
      else if (key == "pca_relative_ridge") c.pca_relative_ridge = value.get<double>();
      else if (key == "topology_hash") c.topology_hash = value.get<std::string>();
      else if (key == "landmarks") c.landmarks = value.get<int>();
      else if (key == "frames") c.frames = value.get<int>();
      else if (key == "classes") c.classes = value.get<int>();
      else throw InvalidInputError("unknown pipeline config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("bad pipeline config: ") + e.what());
  }
  if (c.frame_stride < 1 || c.hierarchy_factor < 2 || c.pca_components < 1 || c.pca_relative_ridge < 0) {
    throw InvalidInputError("pipeline config: frame_stride >= 1, hierarchy_factor >= 2, pca_components >= 1, ridge >= 0");
  }
  return c;
}

void PipelineConfig::check_corpus(const SynthCorpus& corpus) const {
  if (topology_hash && *topology_hash != corpus.face.topology->hash()) {
    throw InvalidInputError("config topology hash " + *topology_hash + " does not match the corpus (" +
                            corpus.face.topology->hash() + ")");
  }
  if (landmarks && *landmarks != static_cast<int>(corpus.face.landmarks.k())) {
    throw InvalidInputError("config k does not match the corpus");
  }
  if (frames && *frames != corpus.spec.frames) throw InvalidInputError("config T does not match the corpus");
  if (classes && *classes != corpus.spec.classes) throw InvalidInputError("config class count does not match the corpus");
}

SynthCorpus load_corpus(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) throw FormatError(meta_path.string() + " not found");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  if (!meta.contains("spec") || !meta.contains("topology_hash")) {
    throw FormatError(meta_path.string() + ": missing spec or topology_hash");
  }
  SynthCorpus corpus = generate_corpus(SynthFaceSpec::from_json(meta["spec"]));
  if (corpus.face.topology->hash() != meta["topology_hash"].get<std::string>()) {
    throw TopologyError("corpus topology hash differs from " + meta_path.string());
  }
  return corpus;
}

// ---------------------------------------------------------------- training helpers

std::shared_ptr<S2DDecoder> make_decoder(const SynthCorpus& corpus, const PipelineConfig& cfg) {
  DecoderConfig dc = cfg.decoder;
  dc.landmarks = static_cast<int>(corpus.face.landmarks.k());
  auto h = std::make_shared<const SamplingHierarchy>(
      build_hierarchy(template_neutral(corpus.face), decoder_hierarchy_options(dc, cfg.hierarchy_factor)));
  Rng rng = make_rng(cfg.seed, "s2d-init");
  return std::make_shared<S2DDecoder>(dc, h, rng);
}

TrainedDecoder train_decoder(const SynthCorpus& corpus, const PipelineConfig& cfg) {
  cfg.check_corpus(corpus);
  const CorpusSplit split = expression_split(corpus, cfg.held_out_classes, cfg.validation_identities);
  const S2DDataset train = make_s2d_dataset(corpus, split.train, cfg.frame_stride);
  const S2DDataset val = make_s2d_dataset(corpus, split.validation, cfg.frame_stride);
  const S2DDataset test = make_s2d_dataset(corpus, split.test, cfg.frame_stride);
  TrainedDecoder out;
  out.net = make_decoder(corpus, cfg);
  if (test.size() > 0) out.untrained_test_error = mean_vertex_error(*out.net, test);
  S2DTrainConfig tc = cfg.s2d_train;
  tc.seed = cfg.seed;
  out.result = train_s2d(*out.net, train, val, tc);
  if (test.size() > 0) out.test_error = mean_vertex_error(*out.net, test);
  return out;
}

Checkpoint decoder_checkpoint(const S2DDecoder& net, const LandmarkIndexTable& table) {
  Checkpoint ck;
  net.store(ck);
  ck.meta["landmarks"] = table.indices;
  return ck;
}

LandmarkIndexTable checkpoint_landmarks(const Checkpoint& ck) {
  if (!ck.meta.contains("landmarks")) throw FormatError("checkpoint has no landmark table");
  LandmarkIndexTable t;
  try {
    t.indices = ck.meta["landmarks"].get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed landmark table: ") + e.what());
  }
  return t;
}

PcaModel fit_corpus_pca(const SynthCorpus& corpus, const PipelineConfig& cfg, int n_components) {
  const CorpusSplit split = expression_split(corpus, cfg.held_out_classes, cfg.validation_identities);
  std::vector<std::size_t> seqs = split.train;
  seqs.insert(seqs.end(), split.validation.begin(), split.validation.end());
  // every training frame is a multiple of its sequence's apex field, so a
  // coarse frame stride loses no directions
  int stride = std::max(cfg.frame_stride, 1);
  S2DDataset data = make_s2d_dataset(corpus, seqs, stride);
  while (static_cast<int>(data.size()) > 4 * std::max(n_components, 256) && stride < corpus.spec.frames) {
    data = make_s2d_dataset(corpus, seqs, ++stride);
  }
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return build_pca(data.targets(idx), n_components);
}

MotionGan make_gan(const SynthCorpus& corpus, const PipelineConfig& cfg, const GanDataset& data) {
  GanConfig gc = cfg.gan;
  gc.frames = corpus.spec.frames;
  gc.landmarks = static_cast<int>(corpus.face.landmarks.k());
  gc.classes = corpus.spec.classes;
  Rng rng = make_rng(cfg.seed, "gan-init");
  return MotionGan(gc, karcher_mean(data.points), rng);
}

}  // namespace s2d4d
