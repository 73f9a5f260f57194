#include "s2d4d/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <queue>

#include "s2d4d/io.hpp"
#include "s2d4d/rng.hpp"

namespace s2d4d {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- spec

nlohmann::json SynthFaceSpec::to_json() const {
  return {{"resolution", resolution},
          {"identities", identities},
          {"classes", classes},
          {"sequences_per_class", sequences_per_class},
          {"frames", frames},
          {"seed", seed},
          {"jitter", jitter},
          {"identity_style", identity_style}};
}

SynthFaceSpec SynthFaceSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInputError("synthetic face spec must be a JSON object");
  SynthFaceSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "resolution") s.resolution = value.get<int>();
      else if (key == "identities") s.identities = value.get<int>();
      else if (key == "classes") s.classes = value.get<int>();
      else if (key == "sequences_per_class") s.sequences_per_class = value.get<int>();
      else if (key == "frames") s.frames = value.get<int>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "jitter") s.jitter = value.get<double>();
      else if (key == "identity_style") s.identity_style = value.get<double>();
      else throw InvalidInputError("unknown key '" + key + "' in synthetic face spec");
    } catch (const nlohmann::json::exception&) {
      throw InvalidInputError("bad value for '" + key + "' in synthetic face spec");
    }
  }
  s.validate();
  return s;
}

void SynthFaceSpec::validate() const {
  if (resolution < 200) throw InvalidInputError("resolution must be at least 200 vertices");
  if (identities < 1 || sequences_per_class < 1) throw InvalidInputError("corpus must contain at least one sequence");
  if (classes < 1 || classes > static_cast<int>(expression_class_names().size())) {
    throw InvalidInputError("classes must lie in [1, " + std::to_string(expression_class_names().size()) + "]");
  }
  if (frames < 2) throw InvalidInputError("sequences need at least two frames");
  if (!(jitter >= 0.0) || !(identity_style >= 0.0)) throw InvalidInputError("jitter and identity_style must be >= 0");
}

const std::vector<std::string>& expression_class_names() {
  static const std::vector<std::string> names{"smile",     "mouth_open", "sad",        "pucker",
                                              "brow_raise", "cheeks_puff", "disgust",   "high_smile",
                                              "mouth_side_left", "mouth_side_right", "bare_teeth", "eyes_closed"};
  return names;
}

// ---------------------------------------------------------------- template

namespace {

using Vec2 = Eigen::Vector2d;

// 68-point layout in the disk domain (x right, y up).
std::vector<Vec2> landmark_loci() {
  std::vector<Vec2> p;
  for (int i = 0; i < 17; ++i) {  // jaw line
    const double phi = std::numbers::pi + std::numbers::pi * i / 16.0;
    p.emplace_back(0.8 * std::cos(phi), 0.25 + 1.05 * std::sin(phi));
  }
  for (int side = -1; side <= 1; side += 2) {  // brows, left then right
    for (int i = 0; i < 5; ++i) {
      const double t = i / 4.0;
      const double x = side < 0 ? -0.58 + 0.44 * t : 0.14 + 0.44 * t;
      const double arch = 0.05 * std::sin(std::numbers::pi * t);
      p.emplace_back(x, 0.44 + arch);
    }
  }
  for (int i = 0; i < 4; ++i) p.emplace_back(0.0, 0.32 - 0.11 * i);   // nose bridge
  for (int i = 0; i < 5; ++i) p.emplace_back(-0.16 + 0.08 * i, -0.1);  // nose base
  for (int side = -1; side <= 1; side += 2) {                          // eyes
    const Vec2 c(0.32 * side, 0.25);
    const double angles[6] = {180, 120, 60, 0, -60, -120};
    for (double a : angles) {
      const double r = a * std::numbers::pi / 180.0;
      // outer corner first on both sides
      const double dx = side < 0 ? std::cos(r) : -std::cos(r);
      p.emplace_back(c.x() + 0.14 * dx, c.y() + 0.07 * std::sin(r));
    }
  }
  const Vec2 mc(0.0, -0.4);
  for (int i = 0; i < 12; ++i) {  // outer lip, from the left corner over the top
    const double r = std::numbers::pi - 2.0 * std::numbers::pi * i / 12.0;
    p.emplace_back(mc.x() + 0.32 * std::cos(r), mc.y() + 0.15 * std::sin(r));
  }
  for (int i = 0; i < 8; ++i) {  // inner lip
    const double r = std::numbers::pi - 2.0 * std::numbers::pi * i / 8.0;
    p.emplace_back(mc.x() + 0.2 * std::cos(r), mc.y() + 0.055 * std::sin(r));
  }
  return p;
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double gauss2(double dx, double dy, double sx, double sy) {
  return std::exp(-(dx * dx / (2 * sx * sx) + dy * dy / (2 * sy * sy)));
}

}  // namespace

FaceTemplate make_face_template(int resolution) {
  if (resolution < 200) throw InvalidInputError("resolution must be at least 200 vertices");
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(resolution))));
  FaceTemplate t;
  t.grid = n;
  t.domain.resize(n * n, 2);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      // grid lines twice as dense in the middle of the face as at the rim
      auto pack = [](double a) { return a * (0.5 + 0.5 * a * a); };
      const double u = pack(-1.0 + 2.0 * i / (n - 1)), v = pack(-1.0 + 2.0 * j / (n - 1));
      t.domain.row(j * n + i) << u * std::sqrt(1.0 - v * v / 2.0), v * std::sqrt(1.0 - u * u / 2.0);
    }
  }
  std::vector<Triangle> tris;
  tris.reserve(static_cast<std::size_t>(2 * (n - 1) * (n - 1)));
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const int a = j * n + i, b = a + 1, c = a + n, d = c + 1;
      tris.push_back({a, b, d});
      tris.push_back({a, d, c});
    }
  }
  t.topology = std::make_shared<const MeshTopology>(n * n, std::move(tris));

  // Closest pair first: repeatedly commit the landmark whose nearest free
  // vertex is nearest.
  const double spacing = 2.0 / (n - 1);
  const std::vector<Vec2> loci = landmark_loci();
  const int k = static_cast<int>(loci.size());
  std::vector<bool> used(static_cast<std::size_t>(n * n), false);
  t.landmarks.indices.assign(static_cast<std::size_t>(k), -1);
  for (int step = 0; step < k; ++step) {
    int best_l = -1, best_v = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int l = 0; l < k; ++l) {
      if (t.landmarks.indices[static_cast<std::size_t>(l)] >= 0) continue;
      for (int v = 0; v < n * n; ++v) {
        if (used[static_cast<std::size_t>(v)]) continue;
        const double d = (t.domain.row(v).transpose() - loci[static_cast<std::size_t>(l)]).norm();
        if (d < best_d) {
          best_d = d;
          best_l = l;
          best_v = v;
        }
      }
    }
    if (best_d > 1.5 * spacing) {
      throw InvalidInputError("resolution " + std::to_string(resolution) +
                              " is too coarse to place the landmarks on distinct vertices");
    }
    used[static_cast<std::size_t>(best_v)] = true;
    t.landmarks.indices[static_cast<std::size_t>(best_l)] = best_v;
  }
  return t;
}

// ---------------------------------------------------------------- identities

IdentityParams sample_identity(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double a, double b) { return a + (b - a) * u(rng); };
  IdentityParams p;
  p.rx = in(72, 90);
  p.ry = in(95, 115);
  p.rz = in(60, 80);
  p.nose = in(14, 26);
  p.eye_depth = in(4, 9);
  p.mouth_protrusion = in(2, 6);
  p.chin = in(2, 7);
  p.eye_spacing = in(-0.06, 0.06);
  p.mouth_shift = in(-0.04, 0.04);
  p.brow_shift = in(-0.03, 0.03);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int i = 0; i < 4; ++i) p.bumps.emplace_back(in(-0.7, 0.7), in(-0.7, 0.7), in(0.1, 0.25), n(rng));
  return p;
}

namespace {

Vec2 warp(const IdentityParams& id, double x, double y) {
  const double xs = x * (1.0 + id.eye_spacing * std::exp(-(y - 0.25) * (y - 0.25) / 0.08));
  const double ys = y + id.mouth_shift * std::exp(-(y + 0.4) * (y + 0.4) / 0.05) +
                    id.brow_shift * std::exp(-(y - 0.45) * (y - 0.45) / 0.03);
  Vec2 w(xs, ys);
  const double r = w.norm();
  if (r > 1.0) w /= r;
  return w;
}

double height(const IdentityParams& id, double x, double y) {
  double z = id.rz * std::sqrt(std::max(0.0, 1.0 - x * x - y * y));
  z += id.nose * gauss2(x, y - 0.08, 0.08, 0.14);
  z -= id.eye_depth * (gauss2(x - 0.32, y - 0.25, 0.09, 0.09) + gauss2(x + 0.32, y - 0.25, 0.09, 0.09));
  z += id.mouth_protrusion * gauss2(x, y + 0.4, 0.25, 0.1);
  z += id.chin * gauss2(x, y + 0.72, 0.2, 0.1);
  z += 3.0 * gauss2(std::abs(x) - 0.33, y - 0.45, 0.15, 0.05);
  for (const auto& b : id.bumps) z += b[3] * gauss2(x - b[0], y - b[1], b[2], b[2]);
  return z;
}

}  // namespace

Mesh make_neutral(const FaceTemplate& tmpl, const IdentityParams& id) {
  const Eigen::Index n = tmpl.domain.rows();
  Points3 p(n, 3);
  for (Eigen::Index v = 0; v < n; ++v) {
    const Vec2 w = warp(id, tmpl.domain(v, 0), tmpl.domain(v, 1));
    p.row(v) << id.rx * w.x(), id.ry * w.y(), height(id, w.x(), w.y());
  }
  return Mesh(tmpl.topology, std::move(p));
}

// ---------------------------------------------------------------- actuators

namespace {

enum Kind { kPull = 0, kFixed = 1, kNormal = 2, kSphincter = 3, kJaw = 4 };

struct ActuatorDef {
  Kind kind;
  Vec2 center;
  double radius;     // geodesic, mm
  double amplitude;  // mm (radians for the jaw)
  Vec2 attach;       // pull target
  Eigen::Vector3d direction;
};

const std::vector<ActuatorDef>& actuator_defs() {
  using V3 = Eigen::Vector3d;
  static const std::vector<ActuatorDef> defs{
      {kJaw, {0.0, -0.4}, 0, 0.22, {0, 0}, V3::Zero()},
      {kPull, {-0.32, -0.4}, 30, 9, {-0.62, 0.12}, V3::Zero()},   // smile L
      {kPull, {0.32, -0.4}, 30, 9, {0.62, 0.12}, V3::Zero()},     // smile R
      {kPull, {-0.3, -0.45}, 25, 7, {-0.45, -0.85}, V3::Zero()},  // depressor L
      {kPull, {0.3, -0.45}, 25, 7, {0.45, -0.85}, V3::Zero()},    // depressor R
      {kSphincter, {0.0, -0.4}, 32, 7, {0, 0}, V3::Zero()},       // pucker
      {kFixed, {0.0, -0.3}, 22, 5, {0, 0}, V3(0, 1, 0.2)},        // upper lip raise
      {kFixed, {-0.34, 0.46}, 30, 7, {0, 0}, V3(0, 1, 0)},        // brow raise L
      {kFixed, {0.34, 0.46}, 30, 7, {0, 0}, V3(0, 1, 0)},         // brow raise R
      {kPull, {-0.2, 0.44}, 22, 5, {0.0, 0.28}, V3::Zero()},      // brow lower L
      {kPull, {0.2, 0.44}, 22, 5, {0.0, 0.28}, V3::Zero()},       // brow lower R
      {kFixed, {-0.32, 0.28}, 12, 5, {0, 0}, V3(0, -1, 0.1)},     // lid close L
      {kFixed, {0.32, 0.28}, 12, 5, {0, 0}, V3(0, -1, 0.1)},      // lid close R
      {kNormal, {-0.44, -0.2}, 30, 8, {0, 0}, V3::Zero()},        // cheek L
      {kNormal, {0.44, -0.2}, 30, 8, {0, 0}, V3::Zero()},         // cheek R
      {kPull, {0.0, 0.08}, 18, 4, {0.0, 0.36}, V3::Zero()},       // nose wrinkle
  };
  return defs;
}

int nearest_domain_vertex(const FaceTemplate& tmpl, const Vec2& x) {
  Eigen::Index best = 0;
  (tmpl.domain.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

// Dijkstra over mesh edges from `source`, truncated at `radius`.
std::vector<std::pair<int, double>> geodesic_ball(const Mesh& mesh, int source, double radius) {
  const int n = mesh.vertex_count();
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  dist[static_cast<std::size_t>(source)] = 0.0;
  q.emplace(0.0, source);
  std::vector<std::pair<int, double>> out;
  while (!q.empty()) {
    const auto [d, v] = q.top();
    q.pop();
    if (d > dist[static_cast<std::size_t>(v)]) continue;
    out.emplace_back(v, d);
    for (int w : mesh.topology->neighbors(v)) {
      const double nd = d + (mesh.positions.row(v) - mesh.positions.row(w)).norm();
      if (nd < radius && nd < dist[static_cast<std::size_t>(w)]) {
        dist[static_cast<std::size_t>(w)] = nd;
        q.emplace(nd, w);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Points3 vertex_normals(const Mesh& m) {
  Points3 nrm = Points3::Zero(m.vertex_count(), 3);
  for (const auto& t : m.topology->triangles()) {
    const Eigen::RowVector3d a = m.positions.row(t[0]), b = m.positions.row(t[1]), c = m.positions.row(t[2]);
    const Eigen::RowVector3d f = (b - a).cross(c - a);
    for (int i : t) nrm.row(i) += f;
  }
  nrm.rowwise().normalize();
  return nrm;
}

}  // namespace

int actuator_count() { return static_cast<int>(actuator_defs().size()); }

ActuatorRig::ActuatorRig(const FaceTemplate& tmpl, const Mesh& neutral) : positions_(neutral.positions) {
  const Points3 normals = vertex_normals(neutral);
  const auto& defs = actuator_defs();
  const double top = neutral.positions.col(1).maxCoeff();
  const double upper_lip_y = neutral.positions(tmpl.landmarks.indices[51], 1);
  const double lower_lip_y = neutral.positions(tmpl.landmarks.indices[57], 1);
  const double mouth_y = 0.5 * (upper_lip_y + lower_lip_y);
  jaw_pivot_ << 0.0, mouth_y + 0.45 * (top - mouth_y), -0.6 * neutral.positions.col(2).maxCoeff();
  // the lower face follows the jaw, fading in between the mouth line and the lower lip
  jaw_mask_.resize(neutral.vertex_count());
  for (int v = 0; v < neutral.vertex_count(); ++v) {
    jaw_mask_[v] = smoothstep((mouth_y - neutral.positions(v, 1)) / std::max(1e-9, mouth_y - lower_lip_y));
  }
  for (const auto& def : defs) {
    Field f;
    f.kind = def.kind;
    f.amplitude = def.amplitude;
    if (def.kind == kJaw) {
      fields_.push_back(std::move(f));
      continue;
    }
    const int c = nearest_domain_vertex(tmpl, def.center);
    const Eigen::RowVector3d attach = neutral.positions.row(nearest_domain_vertex(tmpl, def.attach));
    const Eigen::RowVector3d center = neutral.positions.row(c);
    for (const auto& [v, d] : geodesic_ball(neutral, c, def.radius)) {
      f.vertices.push_back(v);
      f.falloff.push_back(0.5 * (1.0 + std::cos(std::numbers::pi * d / def.radius)));
      Eigen::RowVector3d dir;
      switch (def.kind) {
        case kPull: dir = attach - neutral.positions.row(v); break;
        case kFixed: dir = def.direction.transpose(); break;
        case kNormal: dir = normals.row(v); break;
        default: {
          Eigen::RowVector3d in = center - neutral.positions.row(v);
          in(2) = 0.0;
          const double len = in.norm();
          dir = Eigen::RowVector3d(0, 0, 0.8);
          if (len > 1e-9) dir += 0.6 * in / len;
        }
      }
      const double len = dir.norm();
      f.direction.push_back(len > 1e-12 ? Eigen::RowVector3d(dir / len) : Eigen::RowVector3d::Zero());
    }
    fields_.push_back(std::move(f));
  }
}

Points3 ActuatorRig::displacement(const Eigen::VectorXd& w) const {
  if (w.size() != static_cast<Eigen::Index>(fields_.size())) throw ShapeError("activation vector has the wrong size");
  Points3 d = Points3::Zero(positions_.rows(), 3);
  for (std::size_t a = 0; a < fields_.size(); ++a) {
    const double s = w[static_cast<Eigen::Index>(a)];
    if (s == 0.0) continue;
    const Field& f = fields_[a];
    if (f.kind == kJaw) {
      const Eigen::Matrix3d r = Eigen::AngleAxisd(s * f.amplitude, Eigen::Vector3d::UnitX()).toRotationMatrix();
      for (Eigen::Index v = 0; v < positions_.rows(); ++v) {
        if (jaw_mask_[v] == 0.0) continue;
        const Eigen::RowVector3d rel = positions_.row(v) - jaw_pivot_;
        d.row(v) += jaw_mask_[v] * (rel * r.transpose() - rel);
      }
      continue;
    }
    for (std::size_t i = 0; i < f.vertices.size(); ++i) {
      d.row(f.vertices[i]) += (s * f.amplitude * f.falloff[i]) * f.direction[i];
    }
  }
  return d;
}

Eigen::MatrixXd class_actuator_weights() {
  const int k = actuator_count();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(12, k);
  auto set = [&](int c, std::initializer_list<std::pair<int, double>> entries) {
    for (const auto& [a, v] : entries) w(c, a) = v;
  };
  set(0, {{1, 1.0}, {2, 1.0}, {6, 0.3}, {11, 0.2}, {12, 0.2}});         // smile
  set(1, {{0, 1.0}, {7, 0.8}, {8, 0.8}});                              // mouth open
  set(2, {{3, 1.0}, {4, 1.0}, {9, 0.6}, {10, 0.6}});                   // sad
  set(3, {{5, 1.0}, {13, -0.2}, {14, -0.2}});                          // pucker
  set(4, {{7, 1.0}, {8, 1.0}, {11, -0.3}, {12, -0.3}});                // brow raise
  set(5, {{13, 1.0}, {14, 1.0}, {0, 0.1}});                            // cheeks puff
  set(6, {{15, 1.0}, {6, 0.7}, {9, 0.5}, {10, 0.5}});                  // disgust
  set(7, {{1, 1.0}, {2, 1.0}, {0, 0.5}});                              // high smile
  set(8, {{1, 1.0}, {4, 0.5}});                                        // mouth side left
  set(9, {{2, 1.0}, {3, 0.5}});                                        // mouth side right
  set(10, {{6, 1.0}, {3, 0.6}, {4, 0.6}, {0, 0.2}});                   // bare teeth
  set(11, {{11, 1.0}, {12, 1.0}, {9, 0.3}, {10, 0.3}});                // eyes closed
  return w;
}

// ---------------------------------------------------------------- corpus

std::vector<double> make_envelope(int frames, double gamma) {
  if (frames < 2) throw InvalidInputError("envelope needs at least two frames");
  std::vector<double> e(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) e[static_cast<std::size_t>(t)] = smoothstep(std::pow(t / double(frames - 1), gamma));
  e.front() = 0.0;
  e.back() = 1.0;
  return e;
}

namespace {

std::uint64_t identity_seed(const SynthFaceSpec& spec, int identity) {
  return substream_seed(substream_seed(spec.seed, "corpus"), static_cast<std::uint64_t>(identity));
}

struct IdentityContext {
  Mesh neutral;
  ActuatorRig rig;
  Eigen::MatrixXd style;  // classes × actuators multiplicative perturbation
};

IdentityContext make_identity(const SynthFaceSpec& spec, const FaceTemplate& tmpl, std::uint64_t seed) {
  Mesh neutral = make_neutral(tmpl, sample_identity(seed));
  ActuatorRig rig(tmpl, neutral);
  Rng rng(substream_seed(seed, "style"));
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd style(12, actuator_count());
  for (Eigen::Index i = 0; i < style.size(); ++i) style.data()[i] = 1.0 + spec.identity_style * n(rng);
  return {std::move(neutral), std::move(rig), std::move(style)};
}

SynthSequence make_sequence(const SynthFaceSpec& spec, const IdentityContext& id, std::uint64_t id_seed, int label,
                            int repetition, int frames) {
  Rng rng(substream_seed(id_seed, static_cast<std::uint64_t>(label * 1000 + repetition)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::MatrixXd cw = class_actuator_weights();
  SynthSequence s;
  s.label = label;
  s.repetition = repetition;
  s.intensity = 0.6 + 0.6 * u(rng);
  const double gamma = std::exp(std::log(0.6) + (std::log(1.6) - std::log(0.6)) * u(rng));
  Eigen::VectorXd w(actuator_count());
  for (int a = 0; a < actuator_count(); ++a) {
    w[a] = s.intensity * cw(label, a) * id.style(label, a) + spec.jitter * n(rng);
  }
  s.envelope = make_envelope(frames, gamma);
  s.blendshape = id.rig.displacement(w);
  return s;
}

}  // namespace

Mesh SynthCorpus::frame_mesh(const SynthSequence& s, int t) const {
  return apply_displacement(neutral(s), frame_displacement(s, t));
}

DisplacementField SynthCorpus::frame_displacement(const SynthSequence& s, int t) const {
  if (t == 0) return DisplacementField{Points3::Zero(s.blendshape.rows(), 3)};
  return DisplacementField{s.envelope[static_cast<std::size_t>(t)] * s.blendshape};
}

LandmarkSequence SynthCorpus::landmark_sequence(const SynthSequence& s) const {
  LandmarkSequence seq;
  for (int t = 0; t < static_cast<int>(s.envelope.size()); ++t) {
    seq.frames.push_back(extract_landmarks(frame_mesh(s, t), face.landmarks));
  }
  return seq;
}

SynthCorpus generate_corpus(const SynthFaceSpec& spec) {
  spec.validate();
  SynthCorpus c;
  c.spec = spec;
  c.face = make_face_template(spec.resolution);
  for (int i = 0; i < spec.identities; ++i) {
    const std::uint64_t seed = identity_seed(spec, i);
    IdentityContext id = make_identity(spec, c.face, seed);
    for (int label = 0; label < spec.classes; ++label) {
      for (int r = 0; r < spec.sequences_per_class; ++r) {
        SynthSequence s = make_sequence(spec, id, seed, label, r, spec.frames);
        s.identity = i;
        c.sequences.push_back(std::move(s));
      }
    }
    c.neutrals.push_back(std::move(id.neutral));
  }
  return c;
}

SampledSequence sample_expression_sequence(const SynthFaceSpec& spec, std::uint64_t id_seed, int label, int frames) {
  if (label < 0 || label >= static_cast<int>(expression_class_names().size())) {
    throw InvalidInputError("class index out of range");
  }
  SynthCorpus c;
  c.spec = spec;
  c.face = make_face_template(spec.resolution);
  IdentityContext id = make_identity(spec, c.face, id_seed);
  SynthSequence s = make_sequence(spec, id, id_seed, label, 0, frames);
  c.neutrals.push_back(id.neutral);
  SampledSequence out;
  out.neutral = id.neutral;
  out.table = c.face.landmarks;
  for (int t = 0; t < frames; ++t) out.frames.push_back(c.frame_mesh(s, t));
  out.landmarks = c.landmark_sequence(s);
  return out;
}

// ---------------------------------------------------------------- export / ingest

std::string sequence_dir_name(const SynthCorpus& corpus, const SynthSequence& s) {
  (void)corpus;
  char id[32];
  std::snprintf(id, sizeof id, "id_%03d", s.identity);
  return std::string(id) + "/" + expression_class_names()[static_cast<std::size_t>(s.label)] + "/r" +
         std::to_string(s.repetition);
}

void export_corpus(const SynthCorpus& corpus, const fs::path& root, const ExportOptions& opts) {
  std::vector<std::size_t> subset = opts.subset;
  if (subset.empty()) {
    for (std::size_t i = 0; i < corpus.sequences.size(); ++i) subset.push_back(i);
  }
  fs::create_directories(root);
  write_landmark_indices(root / "landmarks.txt", corpus.face.landmarks);
  nlohmann::json meta;
  meta["spec"] = corpus.spec.to_json();
  meta["topology_hash"] = corpus.face.topology->hash();
  meta["vertex_count"] = corpus.face.topology->vertex_count();
  meta["landmark_count"] = corpus.face.landmarks.k();
  meta["classes"] = std::vector<std::string>(expression_class_names().begin(),
                                             expression_class_names().begin() + corpus.spec.classes);
  meta["sequences"] = nlohmann::json::array();
  for (std::size_t idx : subset) {
    if (idx >= corpus.sequences.size()) throw InvalidInputError("export subset index out of range");
    const SynthSequence& s = corpus.sequences[idx];
    const std::string rel = sequence_dir_name(corpus, s);
    const fs::path dir = root / rel;
    fs::create_directories(dir);
    write_landmark_indices(dir / "landmarks.txt", corpus.face.landmarks);
    for (int t = 0; t < static_cast<int>(s.envelope.size()); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.obj", t);
      write_obj(dir / name, corpus.frame_mesh(s, t));
    }
    meta["sequences"].push_back({{"dir", rel},
                                 {"identity", s.identity},
                                 {"label", s.label},
                                 {"repetition", s.repetition},
                                 {"frames", s.envelope.size()},
                                 {"intensity", s.intensity}});
  }
  write_file(root / "meta.json", meta.dump(2) + "\n");
}

IngestedSequence ingest_sequence_dir(const fs::path& dir, const fs::path& landmark_file) {
  if (!fs::is_directory(dir)) throw InvalidInputError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".obj" || ext == ".ply") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  if (files.empty()) throw InvalidInputError("no .obj or .ply frames in " + dir.string());
  const fs::path lm = landmark_file.empty() ? dir / "landmarks.txt" : landmark_file;
  if (!fs::exists(lm)) throw InvalidInputError("landmark index file " + lm.string() + " not found");

  IngestedSequence out;
  out.table = read_landmark_indices(lm);
  for (const auto& f : files) {
    Mesh m = read_mesh(f, out.frames.empty() ? nullptr : out.frames.front().topology);
    if (!out.frames.empty() && m.topology->hash() != out.frames.front().topology->hash()) {
      throw TopologyError("topology of " + f.string() + " differs from " + files.front().string());
    }
    if (out.frames.empty()) out.table.validate(m.vertex_count());
    out.landmarks.frames.push_back(extract_landmarks(m, out.table));
    out.frames.push_back(std::move(m));
  }
  return out;
}

}  // namespace s2d4d
