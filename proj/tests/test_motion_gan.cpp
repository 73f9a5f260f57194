#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "s2d4d/errors.hpp"
#include "s2d4d/motion_gan.hpp"
#include "test_support.hpp"

using namespace s2d4d;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr int kT = 6;
constexpr int kK = 4;

GanConfig tiny_config() {
  GanConfig c;
  c.noise = 8;
  c.classes = 2;
  c.frames = kT;
  c.landmarks = kK;
  c.generator_hidden = {16};
  c.critic_hidden = {16};
  return c;
}

// Class 0 drifts along +x, class 1 along +y.
GanDataset tiny_dataset(int per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<LandmarkSequence> seqs;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per_class; ++i) {
      LandmarkSequence s = s2d4d::testing::smooth_sequence(rng, kT, kK);
      for (int t = 0; t < kT; ++t) s.frames[static_cast<std::size_t>(t)].points.col(c).array() += 3.0 * t;
      seqs.push_back(s);
      labels.push_back(c);
    }
  }
  return make_gan_dataset(seqs, labels);
}

double tangent_inner(const Matrix& a, const SpherePoint& p) { return srvf_inner(a, p.srvf.samples, p.srvf.dt); }

}  // namespace

TEST_CASE("config json") {
  const GanConfig c = tiny_config();
  CHECK(GanConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(c.tangent_dim() == (kT - 1) * 3 * kK);
  CHECK_THROWS_AS(GanConfig::from_json({{"noize", 3}}), InvalidInputError);
  GanTrainConfig t;
  t.lr = 5e-4;
  CHECK(GanTrainConfig::from_json(t.to_json()).to_json() == t.to_json());
  CHECK_THROWS_AS(GanTrainConfig::from_json({{"lambda", "big"}}), InvalidInputError);
}

TEST_CASE("one hot") {
  const Matrix m = one_hot({1, 0, 2}, 3);
  CHECK(m == (Matrix(3, 3) << 0, 1, 0, 1, 0, 0, 0, 0, 1).finished());
  CHECK_THROWS_AS(one_hot({3}, 3), InvalidInputError);
}

TEST_CASE("dataset points are normalized sphere points") {
  const GanDataset d = tiny_dataset(3, 1);
  REQUIRE(d.points.size() == 6u);
  for (const auto& p : d.points) CHECK_THAT(srvf_norm(p.srvf.samples, p.srvf.dt), WithinAbs(1.0, 1e-12));
  // invariant to translating and scaling the input
  std::mt19937_64 rng(4);
  const LandmarkSequence s = s2d4d::testing::smooth_sequence(rng, kT, kK);
  LandmarkSequence moved = s;
  for (auto& f : moved.frames) f.points = 2.5 * f.points.array() + 7.0;
  const GanDataset a = make_gan_dataset({s}, {0});
  const GanDataset b = make_gan_dataset({moved}, {0});
  CHECK(sphere_distance(a.points[0], b.points[0]) < 1e-7);
  CHECK_THAT(a.points[0].scale, WithinRel(b.points[0].scale, 1e-10));
  CHECK_THROWS_AS(make_gan_dataset({s}, {0, 1}), InvalidInputError);

  // antipodal reference
  SpherePoint anti = a.points[0];
  anti.srvf.samples = -anti.srvf.samples;
  CHECK_THROWS_AS(dataset_tangents(anti, a), InvalidInputError);
}

TEST_CASE("generator output is tangent and norm capped") {
  const GanDataset d = tiny_dataset(3, 2);
  Rng rng(7);
  MotionGan gan(tiny_config(), karcher_mean(d.points), rng);
  Rng zr(1);
  for (int label : {0, 1}) {
    const TangentVector v = gan.generate_tangent(gan.sample_noise(zr), label);
    CHECK(std::abs(tangent_inner(v.data, gan.reference())) < 1e-12);
  }
  // blow up the generator so the cap engages
  Checkpoint ck;
  gan.store(ck);
  for (auto& [name, t] : ck.tensors) {
    if (name.rfind("gan.generator", 0) == 0) t *= 50.0;
  }
  const MotionGan big = MotionGan::load(ck);
  const TangentVector v = big.generate_tangent(big.sample_noise(zr), 1);
  CHECK_THAT(srvf_norm(v.data, v.base.srvf.dt), WithinAbs(std::numbers::pi - 1e-3, 1e-9));
  CHECK(std::abs(tangent_inner(v.data, big.reference())) < 1e-9);
  const SpherePoint q = big.generate_motion(big.sample_noise(zr), 0);
  CHECK_THAT(srvf_norm(q.srvf.samples, q.srvf.dt), WithinAbs(1.0, 1e-12));
  CHECK_THROWS_AS(gan.generate_tangent(ad::constant(Matrix::Zero(2, 3)), ad::constant(Matrix::Zero(2, 2))), ShapeError);
}

TEST_CASE("gradient penalty of a linear critic is (|w| - 1)^2") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const int dim = 10;
  for (double wscale : {0.3, 1.0, 2.7}) {
    Matrix w(dim, 1);
    for (int i = 0; i < dim; ++i) w(i, 0) = n(rng);
    w *= wscale / w.norm() * 1.1;
    const ad::Var wv = ad::constant(w);
    const CriticFn critic = [&](const ad::Var& x, const ad::Var&) { return ad::matmul(x, wv); };
    const Matrix real = Matrix::Random(5, dim), fake = Matrix::Random(5, dim);
    const Vector tau = Vector::LinSpaced(5, 0.0, 1.0);
    const double gp = gradient_penalty(critic, real, fake, Matrix::Zero(5, 1), tau).item();
    const double expected = (w.norm() - 1.0) * (w.norm() - 1.0);
    CHECK(std::abs(gp - expected) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, expected));
  }
  const CriticFn critic = [](const ad::Var& x, const ad::Var&) { return ad::row_sum(x); };
  CHECK_THROWS_AS(gradient_penalty(critic, Matrix::Zero(2, 3), Matrix::Zero(3, 3), Matrix::Zero(2, 1), Vector::Zero(2)),
                  ShapeError);
  CHECK_THROWS_AS(gradient_penalty(critic, Matrix::Zero(1, 3), Matrix::Zero(1, 3), Matrix::Zero(1, 1), Vector::Constant(1, 2.0)),
                  InvalidInputError);
}

TEST_CASE("second-order penalty gradient matches finite differences") {
  const GanDataset d = tiny_dataset(2, 5);
  Rng rng(11);
  MotionGan gan(tiny_config(), karcher_mean(d.points), rng);
  const Matrix real = dataset_tangents(gan.reference(), d);
  Rng zr(2);
  Matrix fake(real.rows(), real.cols());
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    fake.row(i) = tangent_row(gan.generate_tangent(gan.sample_noise(zr), d.labels[static_cast<std::size_t>(i)]));
  }
  const Matrix labels = one_hot(d.labels, 2);
  const Vector tau = Vector::LinSpaced(real.rows(), 0.1, 0.9);
  const auto penalty = [&] { return gradient_penalty(gan.critic_fn(), real, fake, labels, tau, true); };
  auto params = gan.critic_parameters();
  const std::vector<ad::Var> grads = ad::gradient(penalty(), params);
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& v = params[p].mutable_value();
    for (Eigen::Index i = 0; i < v.size(); i += std::max<Eigen::Index>(1, v.size() / 12)) {
      const double x = v.data()[i], h = 1e-5;
      v.data()[i] = x + h;
      const double fp = penalty().item();
      v.data()[i] = x - h;
      const double fm = penalty().item();
      v.data()[i] = x;
      const double num = (fp - fm) / (2 * h), ana = grads[p].value().data()[i];
      worst = std::max(worst, std::abs(num - ana) / std::max(1e-7, std::abs(num) + std::abs(ana)));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("reconstruction loss hand value") {
  const Matrix fake = (Matrix(2, 2) << 1, -2, 3, 4).finished();
  CHECK(reconstruction_loss(ad::constant(fake), Matrix::Zero(2, 2)).item() == 5.0);
  CHECK_THROWS_AS(reconstruction_loss(ad::constant(fake), Matrix::Zero(1, 2)), ShapeError);
}

TEST_CASE("training is deterministic and reduces reconstruction") {
  const GanDataset d = tiny_dataset(6, 9);
  GanTrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch = 4;
  cfg.lr = 1e-3;
  cfg.critic_steps = 2;
  auto run = [&] {
    Rng rng(5);
    MotionGan gan(tiny_config(), karcher_mean(d.points), rng);
    int calls = 0;
    const GanTrainResult r = train_gan(gan, d, cfg, [&](const GanEpochLog&) { ++calls; });
    CHECK(calls == cfg.epochs);
    return std::make_pair(r, gan.class_scales);
  };
  const auto [a, scales] = run();
  const auto [b, scales_b] = run();
  REQUIRE(a.log.size() == 40u);
  CHECK(a.log.back().l_r < 0.5 * a.log.front().l_r);
  CHECK(format_gan_log_csv(a) == format_gan_log_csv(b));
  CHECK(format_gan_log_csv(a).rfind("epoch,wasserstein_estimate,l_r,penalty\n", 0) == 0);
  double mean0 = 0.0;
  for (int i = 0; i < 6; ++i) mean0 += d.points[static_cast<std::size_t>(i)].scale / 6.0;
  CHECK_THAT(scales[0], WithinRel(mean0, 1e-12));

  GanDataset bad = d;
  bad.labels[0] = 5;
  Rng rng(5);
  MotionGan gan(tiny_config(), karcher_mean(d.points), rng);
  CHECK_THROWS_AS(train_gan(gan, bad, cfg), InvalidInputError);
  CHECK_THROWS_AS(train_gan(gan, GanDataset{}, cfg), InvalidInputError);
}

TEST_CASE("checkpoint roundtrip and sampling") {
  const GanDataset d = tiny_dataset(3, 4);
  Rng rng(6);
  MotionGan gan(tiny_config(), karcher_mean(d.points), rng);
  gan.class_scales = {0.2, 0.3};
  Checkpoint ck;
  gan.store(ck);
  const MotionGan back = MotionGan::load(parse_checkpoint(serialize_checkpoint(ck), "mem"));
  CHECK(back.class_scales == gan.class_scales);
  const SpherePoint a = sample_motion(gan, 1, 42), b = sample_motion(back, 1, 42);
  CHECK(a.srvf.samples == b.srvf.samples);
  CHECK(sample_motion(gan, 1, 43).srvf.samples != a.srvf.samples);
  CHECK_THROWS_AS(sample_motion(gan, 2, 1), InvalidInputError);

  Checkpoint no_meta = ck;
  no_meta.meta.erase("gan");
  CHECK_THROWS_AS(MotionGan::load(no_meta), FormatError);
  Checkpoint bad_scales = ck;
  bad_scales.meta["gan"]["class_scales"] = {1.0};
  CHECK_THROWS_AS(MotionGan::load(bad_scales), FormatError);

  std::mt19937_64 r2(8);
  const LandmarkFrame neutral = s2d4d::testing::smooth_sequence(r2, 2, kK).frames[0];
  const LandmarkSequence s1 = sample_sequence(gan, 0, 9, neutral);
  const LandmarkSequence s2 = sample_sequence(back, 0, 9, neutral);
  REQUIRE(s1.length() == static_cast<std::size_t>(kT));
  CHECK(s1.frames[0].points == neutral.points);
  for (std::size_t t = 0; t < s1.length(); ++t) CHECK(s1.frames[t].points == s2.frames[t].points);
}

TEST_CASE("decoding a dataset point replays the original motion") {
  std::mt19937_64 rng(12);
  const LandmarkSequence s = s2d4d::testing::smooth_sequence(rng, kT, kK);
  const GanDataset d = make_gan_dataset({s}, {0});
  const LandmarkSequence back = decode_motion(d.points[0], s.frames[0], d.points[0].scale);
  for (std::size_t t = 0; t < s.length(); ++t) {
    CHECK((back.frames[t].points - s.frames[t].points).cwiseAbs().maxCoeff() < 1e-8);
  }
  CHECK_THROWS_AS(decode_motion(d.points[0], LandmarkFrame{Points3::Zero(2, 3)}, 1.0), ShapeError);
}
