#include "s2d4d/motion_gan.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "s2d4d/errors.hpp"

namespace s2d4d {

namespace {

std::vector<Eigen::Index> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<Eigen::Index> s{in};
  for (int h : hidden) s.push_back(h);
  s.push_back(out);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- configs

nlohmann::json GanConfig::to_json() const {
  return {{"noise", noise},
          {"classes", classes},
          {"frames", frames},
          {"landmarks", landmarks},
          {"generator_hidden", generator_hidden},
          {"critic_hidden", critic_hidden},
          {"slope", slope}};
}

GanConfig GanConfig::from_json(const nlohmann::json& j) {
  GanConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "noise") c.noise = value.get<int>();
      else if (key == "classes") c.classes = value.get<int>();
      else if (key == "frames") c.frames = value.get<int>();
      else if (key == "landmarks") c.landmarks = value.get<int>();
      else if (key == "generator_hidden") c.generator_hidden = value.get<std::vector<int>>();
      else if (key == "critic_hidden") c.critic_hidden = value.get<std::vector<int>>();
      else if (key == "slope") c.slope = value.get<double>();
      else throw InvalidInputError("unknown GAN config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("bad GAN config: ") + e.what());
  }
  if (c.noise < 1 || c.classes < 1 || c.frames < 2 || c.landmarks < 1) {
    throw InvalidInputError("GAN config sizes must be positive (frames >= 2)");
  }
  return c;
}

nlohmann::json GanTrainConfig::to_json() const {
  return {{"alpha1", alpha1}, {"alpha2", alpha2}, {"lambda", lambda},         {"lr", lr},
          {"adam_beta1", adam_beta1}, {"adam_beta2", adam_beta2}, {"batch", batch}, {"epochs", epochs},
          {"critic_steps", critic_steps}, {"seed", seed}};
}

GanTrainConfig GanTrainConfig::from_json(const nlohmann::json& j) {
  GanTrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "alpha1") c.alpha1 = value.get<double>();
      else if (key == "alpha2") c.alpha2 = value.get<double>();
      else if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "batch") c.batch = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "critic_steps") c.critic_steps = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw InvalidInputError("unknown GAN training key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("bad GAN training config: ") + e.what());
  }
  if (!(c.lr > 0) || c.batch < 1 || c.epochs < 1 || c.critic_steps < 1 || c.alpha1 < 0 || c.alpha2 < 0 ||
      c.lambda < 0) {
    throw InvalidInputError("GAN training config values must be positive");
  }
  return c;
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw InvalidInputError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return m;
}

Matrix tangent_row(const Matrix& samples) {
  return Eigen::Map<const Matrix>(samples.data(), 1, samples.size());
}

Matrix tangent_row(const TangentVector& v) { return tangent_row(v.data); }

// ---------------------------------------------------------------- networks

MotionGan::MotionGan(GanConfig cfg, SpherePoint reference, Rng& rng)
    : cfg_(std::move(cfg)), reference_(std::move(reference)) {
  reference_row_ = tangent_row(reference_.srvf.samples);
  generator_ = nn::make_mlp(layer_sizes(cfg_.noise + cfg_.classes, cfg_.generator_hidden, cfg_.tangent_dim()), rng,
                            cfg_.slope);
  critic_ = nn::make_mlp(layer_sizes(cfg_.tangent_dim() + cfg_.classes, cfg_.critic_hidden, 1), rng, cfg_.slope);
  class_scales.assign(static_cast<std::size_t>(cfg_.classes), 1.0);
  check_shapes();
}

void MotionGan::check_shapes() const {
  if (reference_.srvf.samples.rows() != cfg_.frames - 1 || reference_.srvf.samples.cols() != 3 * cfg_.landmarks) {
    throw ShapeError("reference point does not match T=" + std::to_string(cfg_.frames) +
                     ", k=" + std::to_string(cfg_.landmarks));
  }
  if (generator_.in() != cfg_.noise + cfg_.classes || generator_.out() != cfg_.tangent_dim() ||
      critic_.in() != cfg_.tangent_dim() + cfg_.classes || critic_.out() != 1) {
    throw ShapeError("GAN layer shapes do not match the configuration");
  }
}

ad::Var MotionGan::generate_tangent(const ad::Var& z, const ad::Var& labels) const {
  if (z.cols() != cfg_.noise || labels.cols() != cfg_.classes || z.rows() != labels.rows()) {
    throw ShapeError("generator expects noise of size " + std::to_string(cfg_.noise) + " and " +
                     std::to_string(cfg_.classes) + " label columns");
  }
  const ad::Var raw = nn::forward(generator_, ad::concat_cols(z, labels));
  // tangent projection s - <s, p> p, with <a, b> = dt * sum(a b)
  const double dt = reference_.srvf.dt;
  const ad::Var p = ad::constant(reference_row_);
  const ad::Var along = ad::scale(ad::matmul(raw, p, false, true), dt);  // B×1
  const ad::Var s = ad::sub(raw, ad::matmul(along, p));
  // norm clamp: rows longer than the cap are rescaled onto it
  const ad::Var norm = ad::sqrt(ad::add_scalar(ad::scale(ad::row_sum(ad::square(s)), dt), 1e-300));
  Matrix mask(s.rows(), 1);
  for (Eigen::Index i = 0; i < s.rows(); ++i) mask(i, 0) = norm.value()(i, 0) > kTangentNormCap ? 1.0 : 0.0;
  const ad::Var shrink = ad::scale(ad::pow(norm, -1.0), kTangentNormCap);
  const ad::Var factor = ad::add(ad::mul(shrink, ad::constant(mask)), ad::constant(Matrix::Ones(s.rows(), 1) - mask));
  return ad::mul_col(s, factor);
}

TangentVector MotionGan::generate_tangent(const Vector& z, int label) const {
  ad::NoGradGuard guard;
  const Matrix out = generate_tangent(ad::constant(Matrix(z.transpose())), ad::constant(one_hot({label}, cfg_.classes))).value();
  TangentVector t;
  t.base = reference_;
  t.data = Eigen::Map<const Matrix>(out.data(), cfg_.frames - 1, 3 * cfg_.landmarks);
  return t;
}

SpherePoint MotionGan::generate_motion(const Vector& z, int label) const {
  return exp_map(reference_, generate_tangent(z, label));
}

Vector MotionGan::sample_noise(Rng& rng) const {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector z(cfg_.noise);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = n(rng);
  return z;
}

ad::Var MotionGan::critic(const ad::Var& tangents, const ad::Var& labels) const {
  if (tangents.cols() != cfg_.tangent_dim() || labels.cols() != cfg_.classes) {
    throw ShapeError("critic expects " + std::to_string(cfg_.tangent_dim()) + " tangent columns and " +
                     std::to_string(cfg_.classes) + " label columns");
  }
  return nn::forward(critic_, ad::concat_cols(tangents, labels));
}

CriticFn MotionGan::critic_fn() const {
  return [this](const ad::Var& x, const ad::Var& c) { return critic(x, c); };
}

void MotionGan::store(Checkpoint& ck) const {
  nn::store(generator_, "gan.generator", ck);
  nn::store(critic_, "gan.critic", ck);
  ck.tensors["gan.reference"] = reference_.srvf.samples;
  ck.meta["gan"] = {{"config", cfg_.to_json()},
                    {"reference_dt", reference_.srvf.dt},
                    {"reference_scale", reference_.scale},
                    {"class_scales", class_scales}};
}

MotionGan MotionGan::load(const Checkpoint& ck) {
  if (!ck.meta.contains("gan")) throw FormatError("checkpoint holds no motion GAN");
  MotionGan g;
  try {
    const auto& m = ck.meta["gan"];
    g.cfg_ = GanConfig::from_json(m.at("config"));
    g.reference_.srvf.samples = ck.tensor("gan.reference");
    g.reference_.srvf.dt = m.at("reference_dt").get<double>();
    g.reference_.scale = m.at("reference_scale").get<double>();
    g.class_scales = m.at("class_scales").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed GAN metadata: ") + e.what());
  } catch (const InvalidInputError& e) {
    throw FormatError(std::string("malformed GAN metadata: ") + e.what());
  }
  g.reference_row_ = tangent_row(g.reference_.srvf.samples);
  g.generator_ = nn::load_mlp(ck, "gan.generator", g.cfg_.slope);
  g.critic_ = nn::load_mlp(ck, "gan.critic", g.cfg_.slope);
  if (static_cast<int>(g.class_scales.size()) != g.cfg_.classes) throw FormatError("class scale count mismatch");
  try {
    g.check_shapes();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint GAN: ") + e.what());
  }
  return g;
}

// ---------------------------------------------------------------- losses

ad::Var gradient_penalty(const CriticFn& critic, const Matrix& real, const Matrix& fake, const Matrix& labels,
                         const Vector& tau, bool create_graph) {
  if (real.rows() == 0) throw InvalidInputError("gradient penalty needs a non-empty batch");
  if (real.rows() != fake.rows() || real.cols() != fake.cols() || tau.size() != real.rows() ||
      labels.rows() != real.rows()) {
    throw ShapeError("gradient penalty inputs disagree in shape");
  }
  Matrix mix = real;
  for (Eigen::Index i = 0; i < real.rows(); ++i) {
    if (!(tau[i] >= 0.0 && tau[i] <= 1.0)) throw InvalidInputError("tau must lie in [0, 1]");
    mix.row(i) = (1.0 - tau[i]) * real.row(i) + tau[i] * fake.row(i);
  }
  const ad::Var x = ad::variable(std::move(mix));
  const ad::Var score = ad::sum(critic(x, ad::constant(labels)));
  const ad::Var g = ad::gradient(score, {x}, create_graph)[0];
  // the guard keeps the norm differentiable at g = 0 and vanishes in rounding at unit scale
  const ad::Var norm = ad::sqrt(ad::add_scalar(ad::row_sum(ad::square(g)), 1e-24));
  return ad::mean(ad::square(ad::add_scalar(norm, -1.0)));
}

AdversarialLosses adversarial_loss(const CriticFn& critic, const Matrix& real, const ad::Var& fake,
                                   const Matrix& labels, const Vector& tau, double lambda) {
  if (real.rows() == 0) throw InvalidInputError("adversarial loss needs a non-empty batch");
  const ad::Var c = ad::constant(labels);
  const ad::Var fake_detached = ad::constant(fake.value());
  const ad::Var d_real = ad::mean(critic(ad::constant(real), c));
  const ad::Var d_fake_critic = ad::mean(critic(fake_detached, c));
  const ad::Var penalty = gradient_penalty(critic, real, fake.value(), labels, tau, true);
  AdversarialLosses out;
  out.critic = ad::add(ad::sub(d_fake_critic, d_real), ad::scale(penalty, lambda));
  out.generator = ad::neg(ad::mean(critic(fake, c)));
  out.wasserstein = d_real.item() - d_fake_critic.item();
  out.penalty = penalty.item();
  return out;
}

ad::Var reconstruction_loss(const ad::Var& fake, const Matrix& target) {
  if (fake.rows() != target.rows() || fake.cols() != target.cols()) throw ShapeError("reconstruction shapes differ");
  return ad::scale(ad::l1_norm(ad::sub(fake, ad::constant(target))), 1.0 / static_cast<double>(target.rows()));
}

double reconstruction_loss(const MotionGan& gan, const Vector& z, int label, const SpherePoint& q_gt) {
  const TangentVector fake = log_map(gan.reference(), gan.generate_motion(z, label));
  const TangentVector target = log_map(gan.reference(), q_gt);
  return (fake.data - target.data).cwiseAbs().sum();
}

// ---------------------------------------------------------------- data

GanDataset make_gan_dataset(const std::vector<LandmarkSequence>& sequences, const std::vector<int>& labels) {
  if (sequences.size() != labels.size()) throw InvalidInputError("one label per sequence required");
  GanDataset d;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    sequences[i].validate();
    const auto norm = LandmarkNormalization::from_frame(sequences[i].frames.front());
    d.points.push_back(srvf_normalize(srvf_encode(norm.apply(sequences[i]))));
    d.labels.push_back(labels[i]);
  }
  return d;
}

Matrix dataset_tangents(const SpherePoint& p, const GanDataset& data) {
  Matrix out(static_cast<Eigen::Index>(data.points.size()), p.srvf.samples.size());
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    const double d = sphere_distance(p, data.points[i]);
    if (!(d < std::numbers::pi - 1e-6)) {
      throw InvalidInputError("training sample " + std::to_string(i) + " is antipodal to the reference point");
    }
    out.row(static_cast<Eigen::Index>(i)) = tangent_row(log_map(p, data.points[i]));
  }
  return out;
}

// ---------------------------------------------------------------- training

GanTrainResult train_gan(MotionGan& gan, const GanDataset& data, const GanTrainConfig& cfg,
                         const std::function<void(const GanEpochLog&)>& on_epoch) {
  if (data.points.empty()) throw InvalidInputError("empty GAN training set");
  const GanConfig& gc = gan.config();
  for (int l : data.labels) {
    if (l < 0 || l >= gc.classes) throw InvalidInputError("dataset label outside the configured classes");
  }
  const Matrix tangents = dataset_tangents(gan.reference(), data);
  if (tangents.cols() != gc.tangent_dim()) throw ShapeError("dataset sequences do not match the GAN configuration");
  const Matrix labels = one_hot(data.labels, gc.classes);
  const Eigen::Index m = tangents.rows();

  for (int c = 0; c < gc.classes; ++c) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < data.points.size(); ++i) {
      if (data.labels[i] == c) {
        s += data.points[i].scale;
        ++n;
      }
    }
    if (n > 0) gan.class_scales[static_cast<std::size_t>(c)] = s / n;
  }

  Rng rng = make_rng(cfg.seed, "gan-batches");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix matched(m, gc.noise);  // fixed noise per training sample
  for (Eigen::Index i = 0; i < matched.size(); ++i) matched.data()[i] = normal(rng);

  std::vector<ad::Var> gp = gan.generator_parameters();
  std::vector<ad::Var> cp = gan.critic_parameters();
  ad::AdamOptions opts;
  opts.lr = cfg.lr;
  opts.beta1 = cfg.adam_beta1;
  opts.beta2 = cfg.adam_beta2;
  ad::AdamState g_state = ad::make_adam_state(gp);
  ad::AdamState c_state = ad::make_adam_state(cp);
  const CriticFn critic = gan.critic_fn();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto next_batch = [&]() {
    std::vector<Eigen::Index> idx;
    const auto b = static_cast<std::size_t>(std::min<Eigen::Index>(cfg.batch, m));
    while (idx.size() < b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    return idx;
  };
  auto rows = [](const Matrix& src, const std::vector<Eigen::Index>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(idx[i]);
    return out;
  };
  auto noise = [&](Eigen::Index n) {
    Matrix z(n, gc.noise);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
    return z;
  };

  const int steps_per_epoch = static_cast<int>((m + cfg.batch - 1) / cfg.batch);
  auto full_l_r = [&] {
    ad::NoGradGuard guard;
    return reconstruction_loss(gan.generate_tangent(ad::constant(matched), ad::constant(labels)), tangents).item();
  };
  GanTrainResult result;
  result.initial_l_r = full_l_r();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    GanEpochLog row;
    row.epoch = epoch;
    int critic_updates = 0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      for (int k = 0; k < cfg.critic_steps; ++k) {
        const auto idx = next_batch();
        const Matrix real = rows(tangents, idx);
        const Matrix lab = rows(labels, idx);
        ad::Var fake;
        {
          ad::NoGradGuard guard;
          fake = gan.generate_tangent(ad::constant(noise(real.rows())), ad::constant(lab));
        }
        Vector tau(real.rows());
        for (Eigen::Index i = 0; i < tau.size(); ++i) tau[i] = uniform(rng);
        const AdversarialLosses loss = adversarial_loss(critic, real, fake, lab, tau, cfg.lambda);
        if (!std::isfinite(loss.critic.item())) {
          throw DivergenceError("critic loss became non-finite at epoch " + std::to_string(epoch));
        }
        ad::adam_step(cp, ad::gradient(loss.critic, cp), c_state, opts);
        row.wasserstein += loss.wasserstein;
        row.penalty += loss.penalty;
        ++critic_updates;
      }
      const auto idx = next_batch();
      const Matrix lab = rows(labels, idx);
      const ad::Var c = ad::constant(lab);
      const ad::Var fake = gan.generate_tangent(ad::constant(noise(lab.rows())), c);
      const ad::Var adv = ad::neg(ad::mean(critic(fake, c)));
      const ad::Var rec = reconstruction_loss(gan.generate_tangent(ad::constant(rows(matched, idx)), c), rows(tangents, idx));
      const ad::Var total = ad::add(ad::scale(adv, cfg.alpha1), ad::scale(rec, cfg.alpha2));
      if (!std::isfinite(total.item())) {
        throw DivergenceError("generator loss became non-finite at epoch " + std::to_string(epoch));
      }
      ad::adam_step(gp, ad::gradient(total, gp), g_state, opts);
    }
    row.wasserstein /= critic_updates;
    row.penalty /= critic_updates;
    row.l_r = full_l_r();
    if (!std::isfinite(row.l_r)) throw DivergenceError("reconstruction loss became non-finite at epoch " + std::to_string(epoch));
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

std::string format_gan_log_csv(const GanTrainResult& result) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,wasserstein_estimate,l_r,penalty\n";
  for (const auto& r : result.log) os << r.epoch << ',' << r.wasserstein << ',' << r.l_r << ',' << r.penalty << '\n';
  return os.str();
}

// ---------------------------------------------------------------- sampling

SpherePoint sample_motion(const MotionGan& gan, int label, std::uint64_t seed) {
  if (label < 0 || label >= gan.config().classes) throw InvalidInputError("label outside the configured classes");
  Rng rng = make_rng(seed, "sample");
  return gan.generate_motion(gan.sample_noise(rng), label);
}

LandmarkSequence decode_motion(const SpherePoint& point, const LandmarkFrame& neutral, double scale) {
  if (neutral.k() != point.srvf.k()) throw ShapeError("neutral frame and motion disagree on k");
  const auto norm = LandmarkNormalization::from_frame(neutral);
  const std::vector<Points3> offsets = srvf_decode_offsets(point, scale);
  LandmarkSequence seq;
  seq.frames.reserve(offsets.size());
  seq.frames.push_back(neutral);
  for (std::size_t t = 1; t < offsets.size(); ++t) seq.frames.emplace_back(neutral.points + norm.norm * offsets[t]);
  return seq;
}

LandmarkSequence sample_sequence(const MotionGan& gan, int label, std::uint64_t seed, const LandmarkFrame& neutral,
                                 double scale) {
  const double s = scale > 0 ? scale : gan.class_scales.at(static_cast<std::size_t>(label));
  return decode_motion(sample_motion(gan, label, seed), neutral, s);
}

}  // namespace s2d4d
