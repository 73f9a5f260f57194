#include "s2d4d/s2d_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "s2d4d/curve_manifold.hpp"
#include "s2d4d/errors.hpp"

namespace s2d4d {

// ---------------------------------------------------------------- config

nlohmann::json DecoderConfig::to_json() const {
  return {{"landmarks", landmarks}, {"channels", channels}, {"slope", slope}, {"upsample_first", upsample_first}};
}

DecoderConfig DecoderConfig::from_json(const nlohmann::json& j) {
  DecoderConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "landmarks") c.landmarks = value.get<int>();
      else if (key == "channels") c.channels = value.get<std::vector<int>>();
      else if (key == "slope") c.slope = value.get<double>();
      else if (key == "upsample_first") c.upsample_first = value.get<bool>();
      else throw InvalidInputError("unknown decoder config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("bad decoder config: ") + e.what());
  }
  if (c.landmarks < 1 || c.channels.empty() || c.channels.back() != 3 ||
      std::any_of(c.channels.begin(), c.channels.end(), [](int ch) { return ch < 1; })) {
    throw InvalidInputError("decoder config needs k >= 1 and positive channels ending in 3");
  }
  return c;
}

HierarchyOptions decoder_hierarchy_options(const DecoderConfig& cfg, int factor) {
  HierarchyOptions o;
  o.levels = static_cast<int>(cfg.channels.size());
  o.factor = factor;
  return o;
}

// ---------------------------------------------------------------- network

std::shared_ptr<const std::vector<int>> spiral_gather_index(const SpiralTable& spirals, int channels) {
  auto idx = std::make_shared<std::vector<int>>();
  idx->reserve(spirals.spirals.size() * static_cast<std::size_t>(spirals.length * channels));
  for (const auto& s : spirals.spirals) {
    for (int v : s) {
      for (int c = 0; c < channels; ++c) idx->push_back(v * channels + c);
    }
  }
  return idx;
}

ad::Var spiral_conv(const ad::Var& x, const std::shared_ptr<const std::vector<int>>& gather, int vertices,
                    const nn::Dense& layer) {
  const Eigen::Index batch = x.rows();
  ad::Var g = ad::gather_cols(x, gather);
  g = ad::reshape(g, batch * vertices, layer.in());
  ad::Var y = nn::forward(layer, g);
  return ad::reshape(y, batch, vertices * layer.out());
}

S2DDecoder::S2DDecoder(DecoderConfig cfg, std::shared_ptr<const SamplingHierarchy> hierarchy, Rng& rng)
    : cfg_(std::move(cfg)), hierarchy_(std::move(hierarchy)) {
  if (!hierarchy_) throw InvalidInputError("decoder needs a sampling hierarchy");
  if (hierarchy_->level_count() != static_cast<int>(cfg_.channels.size())) {
    throw ShapeError("hierarchy has " + std::to_string(hierarchy_->level_count()) + " levels but the decoder has " +
                     std::to_string(cfg_.channels.size()) + " spiral layers");
  }
  if (cfg_.channels.back() != 3) throw InvalidInputError("the last spiral layer must output 3 channels");
  const int levels = hierarchy_->level_count();
  fc_ = nn::make_dense(3 * cfg_.landmarks, static_cast<Eigen::Index>(hierarchy_->vertex_count(levels)) * cfg_.channels[0],
                       rng);
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const int level = cfg_.upsample_first ? levels - static_cast<int>(i) - 1 : levels - static_cast<int>(i);
    const int cin = cfg_.channels[i == 0 ? 0 : i - 1];
    const int s = hierarchy_->spirals[static_cast<std::size_t>(level)].length;
    convs_.push_back(nn::make_dense(static_cast<Eigen::Index>(s) * cin, cfg_.channels[i], rng));
  }
  build_plan();
}

void S2DDecoder::build_plan() {
  const int levels = hierarchy_->level_count();
  plan_.clear();
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    Layer l;
    const int from = levels - static_cast<int>(i);
    l.level = cfg_.upsample_first ? from - 1 : from;
    l.vertices = hierarchy_->vertex_count(l.level);
    l.in_channels = cfg_.channels[i == 0 ? 0 : i - 1];
    const auto& spirals = hierarchy_->spirals[static_cast<std::size_t>(l.level)];
    if (convs_[i].in() != static_cast<Eigen::Index>(spirals.length) * l.in_channels ||
        convs_[i].out() != cfg_.channels[i]) {
      throw ShapeError("spiral layer " + std::to_string(i) + " does not match the hierarchy");
    }
    l.gather = spiral_gather_index(spirals, l.in_channels);
    auto up = std::make_shared<const SparseTransfer>(hierarchy_->up[static_cast<std::size_t>(from - 1)]);
    (cfg_.upsample_first ? l.pre_up : l.up) = up;
    plan_.push_back(std::move(l));
  }
  if (fc_.out() != static_cast<Eigen::Index>(hierarchy_->vertex_count(levels)) * cfg_.channels[0] ||
      fc_.in() != 3 * cfg_.landmarks) {
    throw ShapeError("fully connected layer does not match the hierarchy");
  }
}

ad::Var S2DDecoder::forward(const ad::Var& d) const {
  if (d.cols() != input_dim()) {
    throw ShapeError("decoder expects " + std::to_string(input_dim()) + " inputs per row, got " +
                     std::to_string(d.cols()));
  }
  ad::Var h = nn::forward(fc_, d);
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    const Layer& l = plan_[i];
    if (l.pre_up) h = ad::transfer(h, l.pre_up, l.in_channels);
    h = spiral_conv(h, l.gather, l.vertices, convs_[i]);
    if (i + 1 < plan_.size()) h = ad::leaky_relu(h, cfg_.slope);
    if (l.up) h = ad::transfer(h, l.up, cfg_.channels[i]);
  }
  return h;
}

Matrix S2DDecoder::forward(const Matrix& d) const {
  ad::NoGradGuard guard;
  return forward(ad::constant(d)).value();
}

DisplacementField S2DDecoder::forward(const SparseDisplacement& d) const {
  if (d.landmark_count() != cfg_.landmarks) {
    throw ShapeError("expected " + std::to_string(cfg_.landmarks) + " landmarks, got " +
                     std::to_string(d.landmark_count()));
  }
  const Vector x = flatten(d.values);
  const Matrix y = forward(Matrix(x.transpose()));
  return DisplacementField{unflatten(y.row(0).transpose())};
}

std::vector<ad::Var> S2DDecoder::parameters() const {
  std::vector<ad::Var> p{fc_.weight, fc_.bias};
  for (const auto& c : convs_) {
    p.push_back(c.weight);
    p.push_back(c.bias);
  }
  return p;
}

std::size_t S2DDecoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.value().size());
  return n;
}

void S2DDecoder::store(Checkpoint& ck) const {
  ck.tensors["s2d.fc.weight"] = fc_.weight.value();
  ck.tensors["s2d.fc.bias"] = fc_.bias.value();
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    ck.tensors["s2d.conv." + std::to_string(i) + ".weight"] = convs_[i].weight.value();
    ck.tensors["s2d.conv." + std::to_string(i) + ".bias"] = convs_[i].bias.value();
  }
  const Mesh& ref = hierarchy_->levels.front();
  ck.tensors["s2d.reference.positions"] = ref.positions;
  const auto& tris = ref.topology->triangles();
  Matrix t(static_cast<Eigen::Index>(tris.size()), 3);
  for (std::size_t f = 0; f < tris.size(); ++f) {
    for (int c = 0; c < 3; ++c) t(static_cast<Eigen::Index>(f), c) = tris[f][static_cast<std::size_t>(c)];
  }
  ck.tensors["s2d.reference.triangles"] = std::move(t);
  std::vector<int> lengths;
  std::vector<int> sizes;
  for (std::size_t l = 0; l < hierarchy_->levels.size(); ++l) {
    lengths.push_back(hierarchy_->spirals[l].length);
    sizes.push_back(hierarchy_->vertex_count(static_cast<int>(l)));
  }
  ck.meta["s2d"] = {{"config", cfg_.to_json()},
                    {"topology_hash", ref.topology->hash()},
                    {"level_sizes", sizes},
                    {"spiral_lengths", lengths}};
}

S2DDecoder S2DDecoder::load(const Checkpoint& ck) {
  if (!ck.meta.contains("s2d")) throw FormatError("checkpoint holds no decoder");
  const auto& m = ck.meta["s2d"];
  S2DDecoder net;
  try {
    net.cfg_ = DecoderConfig::from_json(m.at("config"));
    const auto sizes = m.at("level_sizes").get<std::vector<int>>();
    const auto lengths = m.at("spiral_lengths").get<std::vector<int>>();
    if (sizes.size() != net.cfg_.channels.size() + 1 || lengths.size() != sizes.size()) {
      throw FormatError("decoder hierarchy metadata is inconsistent");
    }
    const Matrix& tm = ck.tensor("s2d.reference.triangles");
    std::vector<Triangle> tris(static_cast<std::size_t>(tm.rows()));
    for (Eigen::Index f = 0; f < tm.rows(); ++f) {
      for (int c = 0; c < 3; ++c) tris[static_cast<std::size_t>(f)][static_cast<std::size_t>(c)] = static_cast<int>(tm(f, c));
    }
    const Matrix& pos = ck.tensor("s2d.reference.positions");
    if (pos.cols() != 3) throw FormatError("reference positions must be N×3");
    Mesh ref(std::make_shared<const MeshTopology>(static_cast<int>(pos.rows()), std::move(tris)), Points3(pos));
    if (ref.topology->hash() != m.at("topology_hash").get<std::string>()) {
      throw FormatError("reference topology hash mismatch");
    }
    HierarchyOptions opts;
    opts.levels = static_cast<int>(net.cfg_.channels.size());
    opts.spiral_lengths = lengths;
    // Reproduce the recorded level sizes exactly (ceil division by the factor).
    opts.factor = std::max(1, static_cast<int>(std::lround(static_cast<double>(sizes[0]) / sizes[1])));
    auto h = std::make_shared<SamplingHierarchy>(build_hierarchy(ref, opts));
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      if (h->vertex_count(static_cast<int>(l)) != sizes[l]) throw FormatError("rebuilt hierarchy differs from the checkpoint");
    }
    net.hierarchy_ = std::move(h);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed decoder metadata: ") + e.what());
  }
  net.fc_ = nn::Dense{ad::parameter(ck.tensor("s2d.fc.weight")), ad::parameter(ck.tensor("s2d.fc.bias"))};
  for (std::size_t i = 0; i < net.cfg_.channels.size(); ++i) {
    const std::string p = "s2d.conv." + std::to_string(i);
    net.convs_.push_back(nn::Dense{ad::parameter(ck.tensor(p + ".weight")), ad::parameter(ck.tensor(p + ".bias"))});
  }
  try {
    net.build_plan();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint decoder: ") + e.what());
  }
  return net;
}

// ---------------------------------------------------------------- loss

double s2d_loss(const DisplacementField& pred, const DisplacementField& gt, const Mesh& neutral, const Mesh& gt_mesh,
                const VertexWeightTable& w, const S2DLossWeights& beta) {
  const Eigen::Index n = neutral.positions.rows();
  if (pred.values.rows() != n || gt.values.rows() != n || gt_mesh.positions.rows() != n || w.weights.size() != n) {
    throw ShapeError("s2d_loss: inconsistent vertex counts");
  }
  const double drift = (gt_mesh.positions - neutral.positions - gt.values).cwiseAbs().maxCoeff();
  if (!(drift <= 1e-9)) {
    throw InvalidInputError("s2d_loss: ground-truth mesh differs from neutral + displacement by " + std::to_string(drift));
  }
  return beta.beta1 * displacement_l1(pred, gt) +
         beta.beta2 * weighted_point_l1(apply_displacement(neutral, pred), gt_mesh, w);
}

// ---------------------------------------------------------------- dataset

std::string to_string(S2DLossMode m) {
  switch (m) {
    case S2DLossMode::DisplacementOnly: return "displacement";
    case S2DLossMode::Unweighted: return "unweighted";
    default: return "weighted";
  }
}

S2DLossMode parse_loss_mode(const std::string& s) {
  if (s == "displacement") return S2DLossMode::DisplacementOnly;
  if (s == "unweighted") return S2DLossMode::Unweighted;
  if (s == "weighted") return S2DLossMode::Weighted;
  throw InvalidInputError("unknown loss mode '" + s + "' (displacement, unweighted, weighted)");
}

int S2DDataset::add_neutral(const Mesh& neutral, const LandmarkIndexTable& table) {
  const Vector w = compute_vertex_weights(neutral, table).weights;
  if (weights.size() != 0 && weights.cols() != w.size()) throw ShapeError("neutral vertex count differs from the dataset");
  weights.conservativeResize(weights.rows() + 1, w.size());
  weights.row(weights.rows() - 1) = w.transpose();
  return static_cast<int>(weights.rows() - 1);
}

void S2DDataset::add_pattern(int weight_row, const Vector& landmark_row, const Vector& dense_row,
                             const std::vector<double>& coefficients) {
  if (weight_row < 0 || weight_row >= weights.rows()) throw InvalidInputError("unknown weight row");
  if (dense_row.size() != 3 * weights.cols()) throw ShapeError("dense pattern size differs from the vertex count");
  if (landmark.rows() > 0 && landmark.cols() != landmark_row.size()) throw ShapeError("landmark count differs");
  const Eigen::Index p = landmark.rows();
  landmark.conservativeResize(p + 1, landmark_row.size());
  dense.conservativeResize(p + 1, dense_row.size());
  landmark.row(p) = landmark_row.transpose();
  dense.row(p) = dense_row.transpose();
  this->weight_row.push_back(weight_row);
  for (double c : coefficients) pairs.emplace_back(static_cast<int>(p), c);
}

void S2DDataset::add_sequence(int row, const Mesh& neutral, const std::vector<Mesh>& frames,
                              const LandmarkIndexTable& table, int frame_stride) {
  if (frame_stride < 1) throw InvalidInputError("frame stride must be >= 1");
  if (row < 0 || row >= weights.rows()) throw InvalidInputError("unknown weight row");
  const LandmarkFrame z0 = extract_landmarks(neutral, table);
  std::vector<std::size_t> picked;
  for (std::size_t t = 0; t < frames.size(); t += static_cast<std::size_t>(frame_stride)) picked.push_back(t);
  const Eigen::Index p0 = landmark.rows();
  const Eigen::Index k3 = 3 * static_cast<Eigen::Index>(table.k());
  if (p0 > 0 && landmark.cols() != k3) throw ShapeError("landmark count differs");
  landmark.conservativeResize(p0 + static_cast<Eigen::Index>(picked.size()), k3);
  dense.conservativeResize(p0 + static_cast<Eigen::Index>(picked.size()), 3 * weights.cols());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const Mesh& f = frames[picked[i]];
    if (f.topology->hash() != neutral.topology->hash()) throw TopologyError("frame topology differs from the neutral");
    const Eigen::Index p = p0 + static_cast<Eigen::Index>(i);
    landmark.row(p) = flatten(extract_landmarks(f, table).points - z0.points).transpose();
    dense.row(p) = flatten(f.positions - neutral.positions).transpose();
    weight_row.push_back(row);
    pairs.emplace_back(static_cast<int>(p), 1.0);
  }
}

Matrix S2DDataset::inputs(const std::vector<std::size_t>& idx) const {
  Matrix x(static_cast<Eigen::Index>(idx.size()), landmark.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& [p, c] = pairs[idx[i]];
    x.row(static_cast<Eigen::Index>(i)) = c * landmark.row(p);
  }
  return x;
}

Matrix S2DDataset::targets(const std::vector<std::size_t>& idx) const {
  Matrix y(static_cast<Eigen::Index>(idx.size()), dense.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& [p, c] = pairs[idx[i]];
    y.row(static_cast<Eigen::Index>(i)) = c * dense.row(p);
  }
  return y;
}

// ---------------------------------------------------------------- training

nlohmann::json S2DTrainConfig::to_json() const {
  return {{"beta1", beta.beta1}, {"beta2", beta.beta2}, {"lr", lr},     {"batch", batch},
          {"epochs", epochs},    {"seed", seed},        {"mode", to_string(mode)}};
}

S2DTrainConfig S2DTrainConfig::from_json(const nlohmann::json& j) {
  S2DTrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "beta1") c.beta.beta1 = value.get<double>();
      else if (key == "beta2") c.beta.beta2 = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "batch") c.batch = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "mode") c.mode = parse_loss_mode(value.get<std::string>());
      else throw InvalidInputError("unknown S2D training key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("bad S2D training config: ") + e.what());
  }
  if (!(c.lr > 0) || c.batch < 1 || c.epochs < 1 || c.beta.beta1 < 0 || c.beta.beta2 < 0) {
    throw InvalidInputError("S2D training config values must be positive");
  }
  return c;
}

std::vector<double> pair_vertex_errors(const S2DDecoder& net, const S2DDataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  const std::size_t chunk = 256;
  for (std::size_t b = 0; b < data.size(); b += chunk) {
    std::vector<std::size_t> idx(std::min(chunk, data.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    const Matrix pred = net.forward(data.inputs(idx));
    const Matrix diff = pred - data.targets(idx);
    const Eigen::Index n = diff.cols() / 3;
    for (Eigen::Index r = 0; r < diff.rows(); ++r) {
      double s = 0.0;
      for (Eigen::Index v = 0; v < n; ++v) s += diff.row(r).segment(3 * v, 3).norm();
      out.push_back(s / static_cast<double>(n));
    }
  }
  return out;
}

double mean_vertex_error(const S2DDecoder& net, const S2DDataset& data) {
  const auto e = pair_vertex_errors(net, data);
  if (e.empty()) return 0.0;
  return std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
}

namespace {

// Per-coordinate loss coefficients. L_pr compares neutral + pred with
// neutral + gt, i.e. the same difference as L_dr, so both terms reduce to a
// weighted L1 of pred - gt with weight beta1 + beta2 * w_i.
Matrix loss_coefficients(const S2DDataset& data, const std::vector<std::size_t>& idx, const S2DTrainConfig& cfg) {
  const Eigen::Index n = data.weights.cols();
  Matrix c(static_cast<Eigen::Index>(idx.size()), 3 * n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int row = data.weight_row[static_cast<std::size_t>(data.pairs[idx[i]].first)];
    for (Eigen::Index v = 0; v < n; ++v) {
      double w = 0.0;
      switch (cfg.mode) {
        case S2DLossMode::DisplacementOnly: w = 0.0; break;
        case S2DLossMode::Unweighted: w = 1.0; break;
        case S2DLossMode::Weighted: w = data.weights(row, v); break;
      }
      c.row(static_cast<Eigen::Index>(i)).segment(3 * v, 3).setConstant(cfg.beta.beta1 + cfg.beta.beta2 * w);
    }
  }
  return c;
}

}  // namespace

S2DTrainResult train_s2d(S2DDecoder& net, const S2DDataset& train, const S2DDataset& validation,
                         const S2DTrainConfig& cfg) {
  if (train.size() == 0) throw InvalidInputError("empty training set");
  if (train.vertex_count() != net.vertex_count() || train.landmark.cols() != net.input_dim()) {
    throw TopologyError("training data does not match the decoder topology");
  }
  if (validation.size() > 0 &&
      (validation.vertex_count() != net.vertex_count() || validation.landmark.cols() != net.input_dim())) {
    throw TopologyError("validation data does not match the decoder topology");
  }
  std::vector<ad::Var> params = net.parameters();
  ad::AdamState adam = ad::make_adam_state(params);
  ad::AdamOptions opts;
  opts.lr = cfg.lr;
  Rng rng = make_rng(cfg.seed, "s2d-batches");

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  S2DTrainResult result;
  result.best_validation_error = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best;
  const double n = static_cast<double>(train.vertex_count());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), b + static_cast<std::size_t>(cfg.batch))));
      const ad::Var pred = net.forward(ad::constant(train.inputs(idx)));
      const ad::Var err = ad::abs(ad::sub(pred, ad::constant(train.targets(idx))));
      const ad::Var loss =
          ad::scale(ad::sum(ad::mul(err, ad::constant(loss_coefficients(train, idx, cfg)))), 1.0 / (n * idx.size()));
      const double value = loss.item();
      if (!std::isfinite(value)) throw DivergenceError("S2D loss became non-finite at epoch " + std::to_string(epoch));
      ad::adam_step(params, ad::gradient(loss, params), adam, opts);
      total += value;
      ++batches;
    }
    S2DEpochLog row;
    row.epoch = epoch;
    row.train_loss = total / batches;
    row.validation_error = validation.size() > 0 ? mean_vertex_error(net, validation) : row.train_loss;
    result.log.push_back(row);
    if (row.validation_error < result.best_validation_error) {
      result.best_validation_error = row.validation_error;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : params) best.push_back(p.value());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = best[i];
  return result;
}

std::string format_s2d_log_csv(const S2DTrainResult& result) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,train_loss,validation_error\n";
  for (const auto& r : result.log) os << r.epoch << ',' << r.train_loss << ',' << r.validation_error << '\n';
  return os.str();
}

// ---------------------------------------------------------------- applications

Mesh generate_expressive_mesh(const S2DDecoder& net, const Mesh& neutral, const SparseDisplacement& d) {
  if (neutral.vertex_count() != net.vertex_count()) throw TopologyError("neutral mesh does not match the decoder");
  return apply_displacement(neutral, net.forward(d));
}

std::vector<Mesh> generate_4d(const S2DDecoder& net, const Mesh& neutral, const LandmarkSequence& seq,
                              const LandmarkIndexTable& table) {
  if (seq.k() != static_cast<Eigen::Index>(table.k())) throw ShapeError("sequence and landmark table disagree on k");
  const LandmarkFrame z0 = extract_landmarks(neutral, table);
  std::vector<Mesh> out;
  out.reserve(seq.length());
  // frame by frame, so a frame's output never depends on the batch it came in
  for (const auto& f : seq.frames) out.push_back(generate_expressive_mesh(net, neutral, SparseDisplacement{f.points - z0.points}));
  return out;
}

LandmarkSequence transfer_landmarks(const LandmarkSequence& source, const LandmarkFrame& target_neutral) {
  if (source.k() != target_neutral.k()) throw ShapeError("source and target landmark counts differ");
  const SpherePoint p = srvf_normalize(srvf_encode(source));
  return srvf_decode(p, target_neutral, p.scale);
}

std::vector<Mesh> transfer(const S2DDecoder& net, const LandmarkSequence& source, const Mesh& target_neutral,
                           const LandmarkIndexTable& table) {
  const LandmarkSequence moved = transfer_landmarks(source, extract_landmarks(target_neutral, table));
  return generate_4d(net, target_neutral, moved, table);
}

Mesh neutralize(const S2DDecoder& net, const Mesh& expressive, const LandmarkFrame& neutral_template,
                const LandmarkIndexTable& table) {
  if (neutral_template.k() != static_cast<Eigen::Index>(table.k())) throw ShapeError("template and table disagree on k");
  const LandmarkFrame z = extract_landmarks(expressive, table);
  return generate_expressive_mesh(net, expressive, SparseDisplacement{neutral_template.points - z.points});
}

}  // namespace s2d4d
