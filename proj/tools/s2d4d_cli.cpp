// s2d4d command-line driver.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "s2d4d/checkpoint.hpp"
#include "s2d4d/errors.hpp"
#include "s2d4d/io.hpp"
#include "s2d4d/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s2d4d;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

bool deterministic_mode() {
  const char* v = std::getenv("S2D4D_DETERMINISTIC");
  return v && std::string(v) == "1";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return kExitUsage;
    case ErrorKind::Shape:
    case ErrorKind::Format: return kExitFormat;
    case ErrorKind::Numeric:
    case ErrorKind::Convergence: return kExitNumeric;
  }
  return kExitUsage;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Format: return "format";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Convergence: return "convergence";
  }
  return "unknown";
}

void report_error(bool as_json, const std::string& kind, const std::string& message, int code) {
  if (as_json) {
    std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  } else {
    std::cerr << "error: " << message << '\n';
  }
}

// Creates `dir`, refusing to reuse a non-empty one unless `force`.
void prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw InvalidInputError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) throw InvalidInputError(dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return PipelineConfig::desk();
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return PipelineConfig::from_json(j);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::string frame_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.obj", t);
  return buf;
}

void write_frames(const fs::path& dir, const std::vector<Mesh>& frames) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < frames.size(); ++t) write_obj(dir / frame_name(t), frames[t]);
}

int parse_label(const std::string& text, int classes) {
  const auto names = expression_class_names();
  int label = -1;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == text) label = static_cast<int>(i);
  }
  if (label < 0) {
    try {
      std::size_t used = 0;
      label = std::stoi(text, &used);
      if (used != text.size()) label = -1;
    } catch (const std::exception&) {
      label = -1;
    }
  }
  if (label < 0 || label >= classes) {
    throw InvalidInputError("label '" + text + "' is not a class index or name below " + std::to_string(classes));
  }
  return label;
}

// ---------------------------------------------------------------- sample checkpoints

Checkpoint sample_checkpoint(const SpherePoint& p, double scale, int label, std::uint64_t seed) {
  Checkpoint ck;
  ck.tensors["sample.srvf"] = p.srvf.samples;
  ck.meta["sample"] = {{"dt", p.srvf.dt}, {"scale", scale}, {"label", label}, {"seed", seed}};
  return ck;
}

struct Sample {
  SpherePoint point;
  double scale = 0.0;
};

Sample load_sample(const fs::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (!ck.meta.contains("sample")) throw FormatError(path.string() + " is not a motion sample checkpoint");
  Sample s;
  s.point.srvf.samples = ck.tensor("sample.srvf");
  try {
    s.point.srvf.dt = ck.meta["sample"].at("dt").get<double>();
    s.scale = ck.meta["sample"].at("scale").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  s.point.scale = s.scale;
  const double norm = s.point.srvf.samples.norm() * std::sqrt(s.point.srvf.dt);
  if (std::abs(norm - 1.0) > 1e-6) throw FormatError(path.string() + ": stored SRVF is not on the unit sphere");
  return s;
}

struct Decoder {
  std::shared_ptr<S2DDecoder> net;
  LandmarkIndexTable table;
};

Decoder load_decoder(const fs::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  Decoder d;
  d.net = std::make_shared<S2DDecoder>(S2DDecoder::load(ck));
  d.table = checkpoint_landmarks(ck);
  d.table.validate(d.net->vertex_count());
  return d;
}

Mesh load_neutral(const fs::path& path, const Decoder& dec) {
  const Mesh m = read_mesh(path);
  if (m.vertex_count() != dec.net->vertex_count()) {
    throw TopologyError(path.string() + " has " + std::to_string(m.vertex_count()) + " vertices, the decoder expects " +
                        std::to_string(dec.net->vertex_count()));
  }
  return m;
}

// ---------------------------------------------------------------- subcommands

struct Common {
  std::string out;
  bool force = false;
  std::string config;
};

void add_out(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_flag("--force", c.force, "Overwrite a non-empty output directory");
}

struct SynthArgs {
  Common common;
  std::string spec;
  std::vector<std::size_t> subset;
};

int run_synth(const SynthArgs& a) {
  SynthFaceSpec spec;
  if (!a.spec.empty()) spec = SynthFaceSpec::from_json(read_json(a.spec));
  spec.validate();
  prepare_out(a.common.out, a.common.force);
  const SynthCorpus corpus = generate_corpus(spec);
  ExportOptions opts;
  opts.subset = a.subset;
  export_corpus(corpus, a.common.out, opts);
  std::cout << "corpus: " << corpus.sequences.size() << " sequences, " << corpus.face.topology->vertex_count()
            << " vertices, topology " << corpus.face.topology->hash() << '\n';
  return kExitOk;
}

struct TrainArgs {
  Common common;
  std::string corpus;
  std::optional<int> epochs;
  std::string mode;
};

int run_train_s2d(const TrainArgs& a) {
  PipelineConfig cfg = load_config(a.common.config);
  if (a.epochs) cfg.s2d_train.epochs = *a.epochs;
  if (!a.mode.empty()) cfg.s2d_train.mode = parse_loss_mode(a.mode);
  const SynthCorpus corpus = load_corpus(a.corpus);
  prepare_out(a.common.out, a.common.force);
  write_json(fs::path(a.common.out) / "config.json", cfg.to_json());
  const TrainedDecoder t = train_decoder(corpus, cfg);
  write_checkpoint(fs::path(a.common.out) / "s2d.ckpt", decoder_checkpoint(*t.net, corpus.face.landmarks));
  write_file(fs::path(a.common.out) / "s2d_log.csv", format_s2d_log_csv(t.result));
  const json summary{{"untrained_test_error", t.untrained_test_error},
                     {"test_error", t.test_error},
                     {"best_epoch", t.result.best_epoch},
                     {"best_validation_error", t.result.best_validation_error}};
  write_json(fs::path(a.common.out) / "summary.json", summary);
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

int run_train_gan(const TrainArgs& a) {
  PipelineConfig cfg = load_config(a.common.config);
  if (a.epochs) cfg.gan_train.epochs = *a.epochs;
  const SynthCorpus corpus = load_corpus(a.corpus);
  cfg.check_corpus(corpus);
  prepare_out(a.common.out, a.common.force);
  write_json(fs::path(a.common.out) / "config.json", cfg.to_json());
  std::vector<std::size_t> all(corpus.sequences.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const GanDataset data = make_gan_dataset(corpus, all);
  MotionGan gan = make_gan(corpus, cfg, data);
  GanTrainConfig tc = cfg.gan_train;
  tc.seed = cfg.seed;
  const GanTrainResult result = train_gan(gan, data, tc);
  Checkpoint ck;
  gan.store(ck);
  write_checkpoint(fs::path(a.common.out) / "gan.ckpt", ck);
  write_file(fs::path(a.common.out) / "gan_log.csv", format_gan_log_csv(result));
  if (!result.log.empty()) {
    std::cout << "l_r " << result.log.front().l_r << " -> " << result.log.back().l_r << '\n';
  }
  return kExitOk;
}

struct GenerateArgs {
  Common common;
  std::string gan, s2d, neutral, label;
  std::uint64_t seed = 1;
  double scale = 0.0;
};

int run_generate(const GenerateArgs& a) {
  const MotionGan gan = MotionGan::load(read_checkpoint(a.gan));
  const Decoder dec = load_decoder(a.s2d);
  const Mesh neutral = load_neutral(a.neutral, dec);
  const int label = parse_label(a.label, gan.config().classes);
  if (gan.config().landmarks != static_cast<int>(dec.table.k())) {
    throw ShapeError("GAN and decoder disagree on the landmark count");
  }
  prepare_out(a.common.out, a.common.force);
  const SpherePoint p = sample_motion(gan, label, a.seed);
  const double scale = a.scale > 0 ? a.scale : gan.class_scales.at(static_cast<std::size_t>(label));
  const LandmarkSequence seq = decode_motion(p, extract_landmarks(neutral, dec.table), scale);
  const std::vector<Mesh> frames = generate_4d(*dec.net, neutral, seq, dec.table);
  write_frames(a.common.out, frames);
  write_landmark_csv(fs::path(a.common.out) / "landmarks.csv", seq);
  write_checkpoint(fs::path(a.common.out) / "sample.ckpt", sample_checkpoint(p, scale, label, a.seed));
  const double eps0 = (frames.front().positions - neutral.positions).rowwise().norm().maxCoeff();
  write_json(fs::path(a.common.out) / "manifest.json",
             json{{"label", label},
                  {"class", expression_class_names().at(static_cast<std::size_t>(label))},
                  {"seed", a.seed},
                  {"scale", scale},
                  {"frames", frames.size()},
                  {"frame0_max_deviation", eps0},
                  {"deterministic", deterministic_mode()}});
  std::cout << frames.size() << " frames, frame-0 deviation " << eps0 << '\n';
  return kExitOk;
}

struct InterpolateArgs {
  Common common;
  std::string a, b, s2d, neutral;
  int steps = 5;
};

int run_interpolate(const InterpolateArgs& a) {
  if (a.steps < 2) throw InvalidInputError("--steps must be >= 2");
  const Sample sa = load_sample(a.a);
  const Sample sb = load_sample(a.b);
  const Decoder dec = load_decoder(a.s2d);
  const Mesh neutral = load_neutral(a.neutral, dec);
  prepare_out(a.common.out, a.common.force);
  const LandmarkFrame z0 = extract_landmarks(neutral, dec.table);
  json steps = json::array();
  for (int i = 0; i < a.steps; ++i) {
    const double tau = static_cast<double>(i) / (a.steps - 1);
    const SpherePoint p = geodesic_interpolate(sa.point, sb.point, tau);
    const double scale = (1.0 - tau) * sa.scale + tau * sb.scale;
    const LandmarkSequence seq = decode_motion(p, z0, scale);
    char name[32];
    std::snprintf(name, sizeof name, "step_%03d", i);
    const fs::path dir = fs::path(a.common.out) / name;
    write_frames(dir, generate_4d(*dec.net, neutral, seq, dec.table));
    write_landmark_csv(dir / "landmarks.csv", seq);
    steps.push_back({{"dir", name}, {"tau", tau}, {"scale", scale}});
  }
  write_json(fs::path(a.common.out) / "manifest.json", json{{"steps", steps}});
  return kExitOk;
}

struct TransferArgs {
  Common common;
  std::string source, target, s2d, landmark_file;
};

int run_transfer(const TransferArgs& a) {
  const Decoder dec = load_decoder(a.s2d);
  const Mesh target = load_neutral(a.target, dec);
  const IngestedSequence src = ingest_sequence_dir(a.source, a.landmark_file);
  prepare_out(a.common.out, a.common.force);
  const LandmarkSequence moved = transfer_landmarks(src.landmarks, extract_landmarks(target, dec.table));
  write_frames(a.common.out, generate_4d(*dec.net, target, moved, dec.table));
  write_landmark_csv(fs::path(a.common.out) / "landmarks.csv", moved);
  return kExitOk;
}

struct NeutralizeArgs {
  Common common;
  std::string input, templ, s2d;
};

int run_neutralize(const NeutralizeArgs& a) {
  const Decoder dec = load_decoder(a.s2d);
  const Mesh expressive = load_neutral(a.input, dec);
  const LandmarkSequence templ = read_landmark_csv(a.templ);
  if (templ.length() < 1) throw FormatError(a.templ + " holds no frame");
  prepare_out(a.common.out, a.common.force);
  write_obj(fs::path(a.common.out) / "neutral.obj", neutralize(*dec.net, expressive, templ.frames.front(), dec.table));
  return kExitOk;
}

struct PcaArgs {
  Common common;
  std::string corpus, neutral, target;
  std::optional<int> components;
};

int run_fit_pca(const PcaArgs& a) {
  const PipelineConfig cfg = load_config(a.common.config);
  if (a.neutral.empty() != a.target.empty()) throw InvalidInputError("--neutral and --target go together");
  const SynthCorpus corpus = load_corpus(a.corpus);
  cfg.check_corpus(corpus);
  prepare_out(a.common.out, a.common.force);
  const PcaModel model = fit_corpus_pca(corpus, cfg, a.components.value_or(cfg.pca_components));
  Checkpoint ck;
  model.store(ck);
  ck.meta["landmarks"] = corpus.face.landmarks.indices;
  write_checkpoint(fs::path(a.common.out) / "pca.ckpt", ck);
  if (!a.neutral.empty()) {
    const Mesh neutral = read_mesh(a.neutral);
    const LandmarkSequence target = read_landmark_csv(a.target);
    PcaFitOptions opts;
    opts.relative_ridge = cfg.pca_relative_ridge;
    const PcaFit fit = fit_landmarks(model, neutral, target.frames.front(), corpus.face.landmarks, opts);
    write_obj(fs::path(a.common.out) / "fitted.obj", fit.fitted);
    if (fit.pseudo_inverse) std::cerr << "warning: rank-deficient fit, pseudo-inverse used\n";
  }
  const Vector ev = model.explained_variance();
  std::cout << model.component_count() << " components, explained variance " << ev[ev.size() - 1] << '\n';
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::string corpus, s2d;
  std::vector<std::string> pca;
};

int run_eval(const EvalArgs& a) {
  const PipelineConfig cfg = load_config(a.common.config);
  const SynthCorpus corpus = load_corpus(a.corpus);
  cfg.check_corpus(corpus);
  const Decoder dec = load_decoder(a.s2d);
  if (dec.net->vertex_count() != corpus.face.topology->vertex_count()) {
    throw TopologyError("decoder and corpus vertex counts differ");
  }
  std::vector<PcaModel> models;
  for (const auto& p : a.pca) models.push_back(PcaModel::load(read_checkpoint(p)));
  if (models.empty()) models.push_back(fit_corpus_pca(corpus, cfg, cfg.pca_components));
  prepare_out(a.common.out, a.common.force);
  const CorpusSplit split = expression_split(corpus, cfg.held_out_classes, cfg.validation_identities);
  const S2DDataset test = make_s2d_dataset(corpus, split.test, cfg.frame_stride);
  std::vector<const PcaModel*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  PcaFitOptions opts;
  opts.relative_ridge = cfg.pca_relative_ridge;
  const ComparisonReport report = evaluate_comparison(test, "held-out-expressions", dec.net.get(), ptrs,
                                                      corpus.face.landmarks, opts);
  write_file(fs::path(a.common.out) / "report.csv", report.csv());
  write_file(fs::path(a.common.out) / "curves.csv", report.curves_csv());
  std::cout << report.text();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-to-dense 4D facial expression generation"};
  app.require_subcommand(1);
  bool error_json = false;
  app.add_flag("--error-json", error_json, "Report errors as one JSON line on stderr");
  app.set_version_flag("--version", std::string("s2d4d ") + kVersion + " (checkpoint format " +
                                        std::string(kCheckpointMagic) + ")");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate and export the synthetic corpus");
  add_out(c_synth, synth.common);
  c_synth->add_option("--spec", synth.spec, "Corpus spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  c_synth->add_option("--subset", synth.subset, "Export only these sequence indices");

  TrainArgs s2d_train;
  auto* c_s2d = app.add_subcommand("train-s2d", "Train the sparse-to-dense decoder");
  add_out(c_s2d, s2d_train.common);
  c_s2d->add_option("--corpus", s2d_train.corpus, "Corpus directory from `synth`")->required();
  c_s2d->add_option("--config", s2d_train.common.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  c_s2d->add_option("--epochs", s2d_train.epochs, "Override the epoch count");
  c_s2d->add_option("--mode", s2d_train.mode, "Loss: displacement | unweighted | weighted");

  TrainArgs gan_train;
  auto* c_gan = app.add_subcommand("train-gan", "Train the motion GAN");
  add_out(c_gan, gan_train.common);
  c_gan->add_option("--corpus", gan_train.corpus, "Corpus directory from `synth`")->required();
  c_gan->add_option("--config", gan_train.common.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  c_gan->add_option("--epochs", gan_train.epochs, "Override the epoch count");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Sample a motion and decode it to mesh frames");
  add_out(c_gen, gen.common);
  c_gen->add_option("--gan", gen.gan, "GAN checkpoint")->required()->check(CLI::ExistingFile);
  c_gen->add_option("--s2d", gen.s2d, "Decoder checkpoint")->required()->check(CLI::ExistingFile);
  c_gen->add_option("--neutral", gen.neutral, "Neutral mesh (.obj/.ply)")->required()->check(CLI::ExistingFile);
  c_gen->add_option("--label", gen.label, "Class index or name")->required();
  c_gen->add_option("--seed", gen.seed, "Noise seed");
  c_gen->add_option("--scale", gen.scale, "Motion scale (default: class mean)");

  InterpolateArgs interp;
  auto* c_int = app.add_subcommand("interpolate", "Geodesic interpolation between two motion samples");
  add_out(c_int, interp.common);
  c_int->add_option("--a", interp.a, "First sample checkpoint")->required()->check(CLI::ExistingFile);
  c_int->add_option("--b", interp.b, "Second sample checkpoint")->required()->check(CLI::ExistingFile);
  c_int->add_option("--steps", interp.steps, "Number of steps including both endpoints");
  c_int->add_option("--s2d", interp.s2d, "Decoder checkpoint")->required()->check(CLI::ExistingFile);
  c_int->add_option("--neutral", interp.neutral, "Neutral mesh")->required()->check(CLI::ExistingFile);

  TransferArgs tr;
  auto* c_tr = app.add_subcommand("transfer", "Replay a sequence's motion on another face");
  add_out(c_tr, tr.common);
  c_tr->add_option("--source", tr.source, "Sequence directory of mesh frames")->required()->check(CLI::ExistingDirectory);
  c_tr->add_option("--target", tr.target, "Target neutral mesh")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--s2d", tr.s2d, "Decoder checkpoint")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--landmark-file", tr.landmark_file, "Landmark index file (default: <source>/landmarks.txt)");

  NeutralizeArgs neu;
  auto* c_neu = app.add_subcommand("neutralize", "Remove the expression from a mesh");
  add_out(c_neu, neu.common);
  c_neu->add_option("--input", neu.input, "Expressive mesh")->required()->check(CLI::ExistingFile);
  c_neu->add_option("--template", neu.templ, "Neutral landmark CSV")->required()->check(CLI::ExistingFile);
  c_neu->add_option("--s2d", neu.s2d, "Decoder checkpoint")->required()->check(CLI::ExistingFile);

  PcaArgs pca;
  auto* c_pca = app.add_subcommand("fit-pca", "Build the PCA baseline, optionally fit a landmark target");
  add_out(c_pca, pca.common);
  c_pca->add_option("--corpus", pca.corpus, "Corpus directory")->required();
  c_pca->add_option("--config", pca.common.config, "Pipeline config JSON")->check(CLI::ExistingFile);
  c_pca->add_option("--components", pca.components, "Component count (default 204)");
  c_pca->add_option("--neutral", pca.neutral, "Neutral mesh to fit from")->check(CLI::ExistingFile);
  c_pca->add_option("--target", pca.target, "Target landmark CSV (first frame used)")->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Held-out comparison of the decoder against PCA baselines");
  add_out(c_eval, ev.common);
  c_eval->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  c_eval->add_option("--s2d", ev.s2d, "Decoder checkpoint")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--pca", ev.pca, "PCA checkpoints (default: build one from the corpus)");
  c_eval->add_option("--config", ev.common.config, "Pipeline config JSON")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error(error_json, "usage", e.what(), kExitUsage);
    return kExitUsage;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_s2d) return run_train_s2d(s2d_train);
    if (*c_gan) return run_train_gan(gan_train);
    if (*c_gen) return run_generate(gen);
    if (*c_int) return run_interpolate(interp);
    if (*c_tr) return run_transfer(tr);
    if (*c_neu) return run_neutralize(neu);
    if (*c_pca) return run_fit_pca(pca);
    if (*c_eval) return run_eval(ev);
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    report_error(error_json, kind_name(e.kind()), e.what(), code);
    return code;
  } catch (const fs::filesystem_error& e) {
    report_error(error_json, "io", e.what(), kExitFormat);
    return kExitFormat;
  }
  return kExitUsage;
}
