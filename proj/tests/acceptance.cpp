// Acceptance run: one PASS/FAIL line per criterion. Criteria can be selected
// on the command line (e.g. `acceptance 1 2 3`); the default runs all eight.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>

#include "s2d4d/errors.hpp"
#include "s2d4d/io.hpp"
#include "s2d4d/pipeline.hpp"
#include "test_support.hpp"

using namespace s2d4d;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string details;
};

// ---------------------------------------------------------------- shared fixtures

struct Shared {
  PipelineConfig cfg = PipelineConfig::desk();
  std::optional<SynthCorpus> s2d_corpus;
  std::map<S2DLossMode, TrainedDecoder> decoders;
  std::optional<SynthCorpus> gan_corpus;
  std::unique_ptr<MotionGan> gan;
  GanTrainResult gan_result;
  GanDataset gan_data;
  double gan_seconds = 0.0;
  std::map<S2DLossMode, double> decoder_seconds;

  const SynthCorpus& corpus() {
    if (!s2d_corpus) s2d_corpus = generate_corpus(SynthFaceSpec{});
    return *s2d_corpus;
  }

  const TrainedDecoder& decoder(S2DLossMode mode) {
    auto it = decoders.find(mode);
    if (it != decoders.end()) return it->second;
    PipelineConfig c = cfg;
    c.s2d_train.mode = mode;
    const auto t0 = Clock::now();
    TrainedDecoder d = train_decoder(corpus(), c);
    decoder_seconds[mode] = seconds_since(t0);
    std::cout << "  trained decoder (" << to_string(mode) << "): test error " << fmt(d.test_error) << " mm, untrained "
              << fmt(d.untrained_test_error) << " mm, " << fmt(decoder_seconds[mode]) << " s" << std::endl;
    return decoders.emplace(mode, std::move(d)).first->second;
  }

  // Two-class motion corpus: 40 identities x 5 repetitions per class.
  MotionGan& motion_gan() {
    if (gan) return *gan;
    SynthFaceSpec spec;
    spec.identities = 40;
    spec.classes = 2;
    spec.sequences_per_class = 5;
    spec.seed = 2;
    const auto t0 = Clock::now();
    gan_corpus = generate_corpus(spec);
    std::vector<std::size_t> all(gan_corpus->sequences.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    gan_data = make_gan_dataset(*gan_corpus, all);
    gan = std::make_unique<MotionGan>(make_gan(*gan_corpus, cfg, gan_data));
    GanTrainConfig tc = cfg.gan_train;
    tc.seed = cfg.seed;
    gan_result = train_gan(*gan, gan_data, tc);
    gan_seconds = seconds_since(t0);
    std::cout << "  trained GAN: " << gan_data.points.size() << " sequences, " << tc.epochs << " epochs, "
              << fmt(gan_seconds) << " s" << std::endl;
    return *gan;
  }
};

// ---------------------------------------------------------------- finite differences

// Worst relative error of d(loss)/d(param) against central differences over
// up to `samples` entries. The step scales with |x|.
double fd_error(const std::function<ad::Var()>& loss, ad::Var param, int samples = 20, double h = 1e-6) {
  const ad::Var g = ad::gradient(loss(), {param})[0];
  Matrix& v = param.mutable_value();
  double worst = 0.0;
  const Eigen::Index step = std::max<Eigen::Index>(1, v.size() / samples);
  for (Eigen::Index i = 0; i < v.size(); i += step) {
    const double x = v.data()[i];
    const double step = h * std::max(1.0, std::abs(x));
    v.data()[i] = x + step;
    const double fp = loss().item();
    v.data()[i] = x - step;
    const double fm = loss().item();
    v.data()[i] = x;
    const double num = (fp - fm) / (2 * step), ana = g.value().data()[i];
    worst = std::max(worst, std::abs(num - ana) / std::max(1e-6, std::abs(num) + std::abs(ana)));
  }
  return worst;
}

// ---------------------------------------------------------------- criteria

Outcome criterion_geometry() {
  std::mt19937_64 rng(101);
  double roundtrip = 0.0;
  for (int i = 0; i < 100; ++i) {
    const LandmarkSequence seq = s2d4d::testing::smooth_sequence(rng, 30, 68);
    const SpherePoint p = srvf_normalize(srvf_encode(seq));
    const LandmarkSequence back = srvf_decode(p, seq.frames.front(), p.scale);
    for (std::size_t t = 0; t < seq.length(); ++t) {
      roundtrip = std::max(roundtrip, (back.frames[t].points - seq.frames[t].points).cwiseAbs().maxCoeff());
    }
  }
  double explog = 0.0, arclength = 0.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const SpherePoint p = s2d4d::testing::random_sphere_point(rng, 29, 68);
    const Matrix v = s2d4d::testing::random_tangent(rng, p, 0.05 + 3.0 * u(rng));
    const SpherePoint q = exp_map(p, v);
    explog = std::max(explog, (log_map(p, q).data - v).cwiseAbs().maxCoeff());
    explog = std::max(explog, (exp_map(p, log_map(p, q)).srvf.samples - q.srvf.samples).cwiseAbs().maxCoeff());
    const SpherePoint r = exp_map(p, s2d4d::testing::random_tangent(rng, p, 0.1 + 2.5 * u(rng)));
    const double theta = sphere_distance(p, r);
    const double t1 = u(rng), t2 = u(rng);
    const SpherePoint g1 = geodesic_interpolate(p, r, t1), g2 = geodesic_interpolate(p, r, t2);
    arclength = std::max(arclength, std::abs(sphere_distance(p, g1) - t1 * theta));
    arclength = std::max(arclength, std::abs(sphere_distance(g1, g2) - std::abs(t1 - t2) * theta));
    arclength = std::max(arclength, std::abs(sphere_distance(g1, r) - (1 - t1) * theta));
  }
  double stationarity = 0.0;
  for (int c = 0; c < 5; ++c) {
    const SpherePoint a = s2d4d::testing::random_sphere_point(rng, 29, 68);
    std::vector<SpherePoint> cluster;
    for (int i = 0; i < 30; ++i) cluster.push_back(exp_map(a, s2d4d::testing::random_tangent(rng, a, 0.2 + 0.6 * u(rng))));
    stationarity = std::max(stationarity, karcher_residual(karcher_mean(cluster), cluster));
  }
  Outcome o;
  o.pass = roundtrip < 1e-6 && explog < 1e-10 && arclength < 1e-8 && stationarity < 1e-8;
  o.details = "roundtrip " + fmt(roundtrip) + ", exp/log " + fmt(explog) + ", arclength " + fmt(arclength) +
              ", Karcher residual " + fmt(stationarity);
  return o;
}

Outcome criterion_autodiff() {
  std::map<std::string, double> blocks;
  auto track = [&](const std::string& block, double e) { blocks[block] = std::max(blocks[block], e); };
  Rng rng(202);

  // dense + leaky rectifier stack
  {
    const nn::Mlp mlp = nn::make_mlp({7, 9, 5, 3}, rng, 0.2);
    const Matrix x = Matrix::Random(4, 7), y = Matrix::Random(4, 3);
    const auto loss = [&] { return ad::sum(ad::square(ad::sub(nn::forward(mlp, ad::constant(x)), ad::constant(y)))); };
    for (const auto& p : mlp.parameters()) track("dense", fd_error(loss, p));
  }
  // spiral convolution, up-sampling transfer and the full decoder
  {
    const Mesh ref = s2d4d::testing::grid_mesh(12, 12, 0.3);
    DecoderConfig dc;
    dc.landmarks = 5;
    dc.channels = {6, 3};
    auto h = std::make_shared<const SamplingHierarchy>(build_hierarchy(ref, decoder_hierarchy_options(dc)));
    for (bool up_first : {false, true}) {
      dc.upsample_first = up_first;
      const S2DDecoder net(dc, h, rng);
      const Matrix x = Matrix::Random(3, net.input_dim()), y = Matrix::Random(3, 3 * 144);
      const auto loss = [&] { return ad::sum(ad::square(ad::sub(net.forward(ad::constant(x)), ad::constant(y)))); };
      for (const auto& p : net.parameters()) track("decoder", fd_error(loss, p));
    }
    const auto up = std::make_shared<const SparseTransfer>(h->up[0]);
    const ad::Var a = ad::variable(Matrix::Random(2, up->cols * 3));
    const Matrix w = Matrix::Random(2, up->rows * 3);
    track("transfer", fd_error([&] { return ad::sum(ad::mul(ad::square(ad::transfer(a, up, 3)), ad::constant(w))); }, a));
    const nn::Dense conv = nn::make_dense(static_cast<Eigen::Index>(h->spirals[1].length) * 4, 5, rng);
    const auto gather = spiral_gather_index(h->spirals[1], 4);
    const ad::Var xs = ad::variable(Matrix::Random(2, h->vertex_count(1) * 4));
    const Matrix ws = Matrix::Random(2, h->vertex_count(1) * 5);
    const auto sloss = [&] { return ad::sum(ad::mul(ad::square(spiral_conv(xs, gather, h->vertex_count(1), conv)), ad::constant(ws))); };
    track("spiral", fd_error(sloss, xs));
    track("spiral", fd_error(sloss, conv.weight));
    track("spiral", fd_error(sloss, conv.bias));
  }
  // weighted L1 training loss away from its kinks
  {
    const ad::Var pred = ad::variable(Matrix::Random(3, 12));
    Matrix gt = pred.value();
    gt.array() += 0.5 * Matrix::Random(3, 12).array().sign() + 0.1;
    const Matrix w = Matrix::Random(3, 12).cwiseAbs();
    track("l1", fd_error([&] { return ad::sum(ad::mul(ad::abs(ad::sub(pred, ad::constant(gt))), ad::constant(w))); }, pred, 36, 1e-7));
  }
  // generator (projection with and without the norm cap) and critic
  {
    std::mt19937_64 r(5);
    std::vector<SpherePoint> pts;
    for (int i = 0; i < 4; ++i) pts.push_back(s2d4d::testing::random_sphere_point(r, 5, 4));
    GanConfig gc;
    gc.noise = 6;
    gc.classes = 2;
    gc.frames = 6;
    gc.landmarks = 4;
    gc.generator_hidden = {10};
    gc.critic_hidden = {10};
    MotionGan base(gc, karcher_mean(pts), rng);
    const Matrix z = Matrix::Random(3, 6), lab = one_hot({0, 1, 1}, 2), y = Matrix::Random(3, gc.tangent_dim());
    const double root_dt = std::sqrt(1.0 / (gc.frames - 1));
    const double raw = root_dt * base.generate_tangent(ad::constant(z), ad::constant(lab)).value().rowwise().norm().minCoeff();
    // the output layer acts linearly on the tangent, so scaling it moves every row past the cap
    for (double amp : {1.0, 2.0 * std::numbers::pi / raw}) {
      Checkpoint ck;
      base.store(ck);
      for (auto& [name, t] : ck.tensors) {
        if (name.rfind("gan.generator.1.", 0) == 0) t *= amp;
      }
      MotionGan g2 = MotionGan::load(ck);
      if (amp > 1.0) {
        const Vector norms = root_dt * g2.generate_tangent(ad::constant(z), ad::constant(lab)).value().rowwise().norm();
        if ((norms.array() - kTangentNormCap).abs().maxCoeff() > 1e-12) track("generator cap not engaged", 1.0);
      }
      const auto loss = [&] {
        return ad::sum(ad::square(ad::sub(g2.generate_tangent(ad::constant(z), ad::constant(lab)), ad::constant(y))));
      };
      for (const auto& p : g2.generator_parameters()) track("generator", fd_error(loss, p));
      const Matrix xc = Matrix::Random(3, gc.tangent_dim());
      const auto closs = [&] { return ad::sum(ad::square(g2.critic(ad::constant(xc), ad::constant(lab)))); };
      for (const auto& p : g2.critic_parameters()) track("critic", fd_error(closs, p));
    }
  }

  // second order: critic-parameter gradient of the gradient penalty
  double second = 0.0;
  {
    std::mt19937_64 r(9);
    std::vector<SpherePoint> pts;
    for (int i = 0; i < 3; ++i) pts.push_back(s2d4d::testing::random_sphere_point(r, 5, 4));
    GanConfig gc;
    gc.noise = 6;
    gc.classes = 2;
    gc.frames = 6;
    gc.landmarks = 4;
    gc.generator_hidden = {10};
    gc.critic_hidden = {12, 12};
    MotionGan gan(gc, karcher_mean(pts), rng);
    const Matrix real = Matrix::Random(4, gc.tangent_dim()) * 0.3, fake = Matrix::Random(4, gc.tangent_dim()) * 0.3;
    const Matrix lab = one_hot({0, 1, 0, 1}, 2);
    const Vector tau = Vector::LinSpaced(4, 0.2, 0.8);
    const auto pen = [&] { return gradient_penalty(gan.critic_fn(), real, fake, lab, tau, true); };
    for (const auto& p : gan.critic_parameters()) second = std::max(second, fd_error(pen, p, 20, 1e-5));
  }

  // linear discriminator: penalty equals (|w| - 1)^2
  double linear = 0.0;
  {
    std::mt19937_64 r(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double target : {0.25, 0.9, 1.0, 3.5}) {
      Matrix w(20, 1);
      for (int i = 0; i < 20; ++i) w(i, 0) = n(r);
      w *= target / w.norm();
      const ad::Var wv = ad::constant(w);
      const CriticFn critic = [&](const ad::Var& x, const ad::Var&) { return ad::matmul(x, wv); };
      const double gp =
          gradient_penalty(critic, Matrix::Random(6, 20), Matrix::Random(6, 20), Matrix::Zero(6, 1), Vector::LinSpaced(6, 0, 1))
              .item();
      const double expected = (w.norm() - 1.0) * (w.norm() - 1.0);
      linear = std::max(linear, std::abs(gp - expected) / std::max(1.0, expected));
    }
  }
  Outcome o;
  const double eps = std::numeric_limits<double>::epsilon();
  double worst = 0.0;
  std::string per_block;
  for (const auto& [name, e] : blocks) {
    worst = std::max(worst, e);
    per_block += (per_block.empty() ? "" : " ") + name + " " + fmt(e);
  }
  o.pass = worst < 1e-5 && second < 1e-4 && linear <= 8 * eps;
  o.details = "first-order " + fmt(worst) + " (" + per_block + "), second-order " + fmt(second) + ", linear penalty " + fmt(linear) +
              " (" + fmt(linear / eps) + " ulp)";
  return o;
}

Outcome criterion_losses() {
  bool ok = true;
  std::ostringstream why;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      why << what << "; ";
    }
  };
  // toy: four vertices, landmark at vertex 0, distances 1, 2 and 4
  auto topo = std::make_shared<const MeshTopology>(4, std::vector<Triangle>{{0, 1, 2}, {0, 2, 3}});
  Points3 pn(4, 3);
  pn << 0, 0, 0,
        1, 0, 0,
        0, 2, 0,
        0, 0, 4;
  const Mesh neutral(topo, pn);
  const LandmarkIndexTable table{{0}};
  const VertexWeightTable w = compute_vertex_weights(neutral, table);
  expect(w.weights[0] == 1.0 && w.weights[1] == 1.0 && w.weights[2] == 0.5 && w.weights[3] == 0.25, "weights");
  DisplacementField gt{Points3(4, 3)}, pred{Points3(4, 3)};
  gt.values << 1, 2, 3,
               0, 0, 0,
               -1, 0, 1,
               2, 2, 2;
  pred.values << 1, 2, 2,
                 1, 1, 1,
                 -1, 0, 1,
                 0, 0, 0;
  // per-vertex L1: 1, 3, 0, 6
  const double l_dr = displacement_l1(pred, gt);
  expect(l_dr == 10.0 / 4.0, "displacement L1 " + fmt(l_dr));
  const Mesh gt_mesh = apply_displacement(neutral, gt), pred_mesh = apply_displacement(neutral, pred);
  const double l_pr = weighted_point_l1(pred_mesh, gt_mesh, w);
  expect(l_pr == (1.0 * 1 + 1.0 * 3 + 0.5 * 0 + 0.25 * 6) / 4.0, "weighted point L1 " + fmt(l_pr));
  const double total = s2d_loss(pred, gt, neutral, gt_mesh, w, {1.0, 0.1});
  expect(std::abs(total - (2.5 + 0.1 * 5.5 / 4.0)) < 1e-15, "combined loss " + fmt(total));

  // unit weights reduce the point term to the displacement term
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Mesh m = s2d4d::testing::grid_mesh(7, 6, 0.2);
    const DisplacementField a{Points3::Random(42, 3)}, b{Points3::Random(42, 3)};
    const VertexWeightTable ones{Vector::Ones(42)};
    const double lhs = weighted_point_l1(apply_displacement(m, a), apply_displacement(m, b), ones);
    expect(std::abs(lhs - displacement_l1(a, b)) < 1e-12, "unit-weight reduction");
  }

  // weight-table invariants on the synthetic face
  const FaceTemplate face = make_face_template(1500);
  const Mesh n1 = make_neutral(face, sample_identity(7));
  const VertexWeightTable wt = compute_vertex_weights(n1, face.landmarks);
  expect(wt.weights.minCoeff() > 0.0 && wt.weights.maxCoeff() <= 1.0, "weight range");
  for (int idx : face.landmarks.indices) expect(wt.weights[idx] == 1.0, "landmark weight");
  Mesh shifted = n1;
  shifted.positions.rowwise() += Eigen::RowVector3d(13.0, -4.5, 120.0);
  const VertexWeightTable ws = compute_vertex_weights(shifted, face.landmarks);
  expect((ws.weights - wt.weights).cwiseAbs().maxCoeff() < 1e-12, "translation invariance");

  Outcome o;
  o.pass = ok;
  o.details = ok ? "toy values exact, unit-weight identity, weight invariants hold" : why.str();
  return o;
}

Outcome criterion_s2d(Shared& s) {
  const TrainedDecoder& d = s.decoder(S2DLossMode::Weighted);
  const SynthCorpus& corpus = s.corpus();
  const auto t0 = Clock::now();
  const PcaModel pca = fit_corpus_pca(corpus, s.cfg, kPcaInputSized);
  const CorpusSplit split = expression_split(corpus, s.cfg.held_out_classes, s.cfg.validation_identities);
  const S2DDataset test = make_s2d_dataset(corpus, split.test, s.cfg.frame_stride);
  PcaFitOptions opts;
  opts.relative_ridge = s.cfg.pca_relative_ridge;
  const ComparisonReport report = evaluate_comparison(test, "held-out-expressions", d.net.get(), {&pca},
                                                      corpus.face.landmarks, opts);
  const double pca_seconds = seconds_since(t0);
  const double ours = report.rows[0].error.mean, base = report.rows[1].error.mean;
  const double improvement = d.untrained_test_error / ours;
  const double runtime = s.decoder_seconds[S2DLossMode::Weighted] + pca_seconds;
  std::cout << report.text();
  Outcome o;
  o.pass = improvement >= 5.0 && ours < base && runtime < 1800.0;
  o.details = "held-out error " + fmt(ours) + " mm vs untrained " + fmt(d.untrained_test_error) + " mm (" +
              fmt(improvement) + "x), PCA-204 " + fmt(base) + " mm, " + std::to_string(corpus.sequences.size()) +
              " sequences, " + std::to_string(corpus.face.topology->vertex_count()) + " vertices, " + fmt(runtime) +
              " s";
  return o;
}

Outcome criterion_ablation(Shared& s) {
  const double e_dr = s.decoder(S2DLossMode::DisplacementOnly).test_error;
  const double e_unw = s.decoder(S2DLossMode::Unweighted).test_error;
  const double e_w = s.decoder(S2DLossMode::Weighted).test_error;
  const double gap1 = (e_dr - e_unw) / e_dr, gap2 = (e_unw - e_w) / e_unw;
  Outcome o;
  o.pass = gap1 >= 0.10 && gap2 >= 0.10;
  o.details = "L_dr " + fmt(e_dr) + " mm, +unweighted " + fmt(e_unw) + " mm, +weighted " + fmt(e_w) +
              " mm; relative gaps " + fmt(100 * gap1) + "% and " + fmt(100 * gap2) + "% (need >= 10%)";
  return o;
}

Outcome criterion_gan(Shared& s) {
  MotionGan& gan = s.motion_gan();
  std::vector<SpherePoint> c0, c1;
  for (std::size_t i = 0; i < s.gan_data.points.size(); ++i) (s.gan_data.labels[i] == 0 ? c0 : c1).push_back(s.gan_data.points[i]);
  const SpherePoint m0 = karcher_mean(c0), m1 = karcher_mean(c1);
  int correct = 0;
  for (int i = 0; i < 200; ++i) {
    const int label = i % 2;
    const SpherePoint q = sample_motion(gan, label, 5000 + static_cast<std::uint64_t>(i));
    const bool nearer0 = sphere_distance(q, m0) < sphere_distance(q, m1);
    correct += (label == 0) == nearer0;
  }
  const double acc = correct / 200.0;
  const double l0 = s.gan_result.initial_l_r, l1 = s.gan_result.log.back().l_r;
  const double drop = 1.0 - l1 / l0;
  Outcome o;
  o.pass = acc >= 0.8 && drop >= 0.5 && s.gan_seconds < 1200.0;
  o.details = "class-mean accuracy " + fmt(100 * acc) + "% of 200 samples, L_r " + fmt(l0) + " -> " + fmt(l1) + " (" +
              fmt(100 * drop) + "% drop), " + fmt(s.gan_seconds) + " s";
  return o;
}

Outcome criterion_pipeline(Shared& s) {
  const TrainedDecoder& d = s.decoder(S2DLossMode::Weighted);
  const MotionGan& trained = s.motion_gan();
  const SynthCorpus& corpus = s.corpus();
  bool ok = true;
  std::ostringstream why;
  if (corpus.face.topology->hash() != s.gan_corpus->face.topology->hash()) {
    ok = false;
    why << "GAN and decoder corpora differ in topology; ";
  }
  // models travel through serialized checkpoints, as in the CLI
  Checkpoint gck, dck;
  trained.store(gck);
  const MotionGan gan = MotionGan::load(parse_checkpoint(serialize_checkpoint(gck), "gan"));
  d.net->store(dck);
  const S2DDecoder net = S2DDecoder::load(parse_checkpoint(serialize_checkpoint(dck), "s2d"));
  const LandmarkIndexTable& table = corpus.face.landmarks;
  const Mesh& neutral = corpus.neutrals[3];
  const LandmarkFrame z0 = extract_landmarks(neutral, table);

  auto generate = [&](int label, std::uint64_t seed) {
    const SpherePoint p = sample_motion(gan, label, seed);
    const double scale = gan.class_scales[static_cast<std::size_t>(label)];
    return std::make_pair(p, generate_4d(net, neutral, decode_motion(p, z0, scale), table));
  };
  const auto [pa, frames] = generate(0, 17);
  if (frames.size() != 30) {
    ok = false;
    why << "frame count " << frames.size() << "; ";
  }
  // frame 0 differs from the neutral only by the decoder's zero-input response
  const double eps0 = (frames.front().positions - neutral.positions).rowwise().norm().maxCoeff();
  const DisplacementField zero = net.forward(SparseDisplacement{Points3::Zero(static_cast<Eigen::Index>(table.k()), 3)});
  const double eps0_expected = zero.values.rowwise().norm().maxCoeff();
  if (std::abs(eps0 - eps0_expected) > 1e-12 || eps0 > 0.5) {
    ok = false;
    why << "frame-0 deviation " << eps0 << "; ";
  }

  // determinism: byte-identical OBJ output
  const auto [pa2, again] = generate(0, 17);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (format_obj(frames[t]) != format_obj(again[t])) {
      ok = false;
      why << "frame " << t << " not byte-identical; ";
      break;
    }
  }

  // interpolation endpoints
  const auto [pb, frames_b] = generate(1, 18);
  const double sa = gan.class_scales[0], sb = gan.class_scales[1];
  for (double tau : {0.0, 1.0}) {
    const SpherePoint p = geodesic_interpolate(pa, pb, tau);
    const double scale = (1 - tau) * sa + tau * sb;
    const auto seq = generate_4d(net, neutral, decode_motion(p, z0, scale), table);
    const auto& ref = tau == 0.0 ? frames : frames_b;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (format_obj(seq[t]) != format_obj(ref[t])) {
        ok = false;
        why << "interpolation endpoint " << tau << " differs; ";
        break;
      }
    }
  }

  // self-transfer reproduces direct generation
  LandmarkSequence lm;
  for (const auto& f : frames) lm.frames.push_back(extract_landmarks(f, table));
  const LandmarkSequence generated = decode_motion(pa, z0, sa);
  const std::vector<Mesh> moved = transfer(net, generated, neutral, table);
  double transfer_err = 0.0;
  for (std::size_t t = 0; t < moved.size(); ++t) {
    transfer_err = std::max(transfer_err, (moved[t].positions - frames[t].positions).cwiseAbs().maxCoeff());
  }
  if (transfer_err > 1e-6) {
    ok = false;
    why << "self-transfer error " << transfer_err << "; ";
  }
  Outcome o;
  o.pass = ok;
  o.details = ok ? "30 frames, frame-0 deviation " + fmt(eps0) + " mm (= decoder zero response), endpoints exact, " +
                       "self-transfer " + fmt(transfer_err) + " mm, byte-identical reruns"
                 : why.str();
  return o;
}

Outcome criterion_ingestion(Shared& s) {
  const SynthCorpus& corpus = s.corpus();
  const fs::path root = fs::temp_directory_path() / "s2d4d_acceptance_ingest";
  fs::remove_all(root);
  ExportOptions opts;
  opts.subset = {0, 131, 599};
  export_corpus(corpus, root, opts);
  double worst = 0.0;
  bool ok = true;
  std::ostringstream why;
  for (std::size_t i : opts.subset) {
    const SynthSequence& seq = corpus.sequences[i];
    const IngestedSequence in = ingest_sequence_dir(root / sequence_dir_name(corpus, seq));
    if (in.frames.size() != static_cast<std::size_t>(corpus.spec.frames) ||
        in.frames[0].topology->hash() != corpus.face.topology->hash() || in.table.indices != corpus.face.landmarks.indices) {
      ok = false;
      why << "sequence " << i << " layout; ";
      continue;
    }
    for (int t = 0; t < corpus.spec.frames; ++t) {
      worst = std::max(worst, (in.frames[static_cast<std::size_t>(t)].positions - corpus.frame_mesh(seq, t).positions)
                                  .cwiseAbs()
                                  .maxCoeff());
    }
  }
  if (worst != 0.0) {
    ok = false;
    why << "roundtrip deviation " << worst << "; ";
  }
  const SynthCorpus reloaded = load_corpus(root);
  if (reloaded.sequences[131].blendshape != corpus.sequences[131].blendshape) {
    ok = false;
    why << "corpus regeneration from meta differs; ";
  }

  // corrupted inputs raise the documented error types
  int paths = 0, handled = 0;
  auto expect_error = [&](const std::string& what, auto tag, const std::function<void()>& fn) {
    using E = typename decltype(tag)::type;
    ++paths;
    try {
      fn();
      why << what << ": no error; ";
    } catch (const E&) {
      ++handled;
    } catch (const std::exception& e) {
      why << what << ": unexpected error " << e.what() << "; ";
    }
  };
  const fs::path seq_dir = root / sequence_dir_name(corpus, corpus.sequences[0]);
  const fs::path work = root / "corrupt";
  auto fresh_copy = [&] {
    fs::remove_all(work);
    fs::copy(seq_dir, work);
  };
  fresh_copy();
  const std::string obj = read_file(work / "frame_0010.obj");
  write_file(work / "frame_0010.obj", obj.substr(0, obj.size() / 3) + "\nv 0.5 nan_text 1\n");
  expect_error("truncated OBJ", std::type_identity<ParseError>{}, [&] { (void)ingest_sequence_dir(work); });
  fresh_copy();
  write_file(work / "frame_0011.obj", obj.substr(0, obj.rfind("\nf ") + 1));
  expect_error("connectivity drift", std::type_identity<TopologyError>{}, [&] { (void)ingest_sequence_dir(work); });
  fresh_copy();
  fs::remove(work / "landmarks.txt");
  expect_error("missing landmark file", std::type_identity<InvalidInputError>{}, [&] { (void)ingest_sequence_dir(work); });
  fresh_copy();
  write_file(work / "landmarks.txt", "3\nseven\n");
  expect_error("malformed landmark file", std::type_identity<ParseError>{}, [&] { (void)ingest_sequence_dir(work); });
  write_file(work / "bad.csv", "frame,l0x,l0y,l0z\n0,1,2\n");
  expect_error("short landmark CSV row", std::type_identity<ParseError>{}, [&] { (void)read_landmark_csv(work / "bad.csv"); });
  write_file(work / "bad.ply", "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                               "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\x01\x02");
  expect_error("truncated binary PLY", std::type_identity<ParseError>{}, [&] { (void)read_mesh(work / "bad.ply"); });
  Checkpoint ck;
  ck.tensors["x"] = Matrix::Ones(2, 2);
  const std::string bytes = serialize_checkpoint(ck);
  expect_error("truncated checkpoint", std::type_identity<FormatError>{}, [&] { (void)parse_checkpoint(bytes.substr(0, bytes.size() - 3), "ck"); });
  write_file(work / "meta.json", "{\"spec\": ");
  expect_error("malformed corpus meta", std::type_identity<FormatError>{}, [&] { (void)load_corpus(work); });
  fs::remove_all(root);
  if (handled != paths) ok = false;

  Outcome o;
  o.pass = ok;
  o.details = ok ? "3 sequences x 30 frames bit-exact (max deviation 0), " + std::to_string(handled) + "/" +
                       std::to_string(paths) + " corrupted-input paths raise typed errors"
                 : why.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    try {
      selected.insert(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::cerr << "usage: acceptance [criterion numbers 1-8]\n";
      return 2;
    }
  }
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  Shared shared;
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"geometry suite", [] { return criterion_geometry(); }}},
      {2, {"autodiff suite", [] { return criterion_autodiff(); }}},
      {3, {"loss suite", [] { return criterion_losses(); }}},
      {4, {"decoder desk-scale training", [&] { return criterion_s2d(shared); }}},
      {5, {"loss ablation ordering", [&] { return criterion_ablation(shared); }}},
      {6, {"motion GAN desk-scale training", [&] { return criterion_gan(shared); }}},
      {7, {"pipeline end-to-end", [&] { return criterion_pipeline(shared); }}},
      {8, {"ingestion", [&] { return criterion_ingestion(shared); }}},
  };
  const std::map<int, double> budget{{1, 10.0}, {2, 30.0}, {3, 5.0}};

  int failures = 0;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.details = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    const auto b = budget.find(id);
    if (b != budget.end() && secs >= b->second) {
      o.pass = false;
      o.details += " (over the " + fmt(b->second) + " s budget)";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << it->second.first << "): " << o.details
              << " [" << fmt(secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
