#include "s2d4d/nn.hpp"

#include "s2d4d/errors.hpp"

namespace s2d4d::nn {

Dense make_dense(Eigen::Index in, Eigen::Index out, Rng& rng) {
  return Dense{ad::parameter(ad::glorot_uniform(in, out, rng)), ad::parameter(Matrix::Zero(1, out))};
}

ad::Var forward(const Dense& layer, const ad::Var& x) {
  return ad::add_row(ad::matmul(x, layer.weight), layer.bias);
}

std::vector<ad::Var> Mlp::parameters() const {
  std::vector<ad::Var> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

Mlp make_mlp(const std::vector<Eigen::Index>& sizes, Rng& rng, double slope) {
  if (sizes.size() < 2) throw InvalidInputError("an MLP needs at least an input and an output size");
  Mlp net;
  net.slope = slope;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) net.layers.push_back(make_dense(sizes[i], sizes[i + 1], rng));
  return net;
}

ad::Var forward(const Mlp& net, const ad::Var& x) {
  if (x.cols() != net.in()) {
    throw ShapeError("network expects " + std::to_string(net.in()) + " inputs, got " + std::to_string(x.cols()));
  }
  ad::Var h = x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    h = forward(net.layers[i], h);
    if (i + 1 < net.layers.size()) h = ad::leaky_relu(h, net.slope);
  }
  return h;
}

void store(const Mlp& net, const std::string& prefix, Checkpoint& ck) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    ck.tensors[prefix + "." + std::to_string(i) + ".weight"] = net.layers[i].weight.value();
    ck.tensors[prefix + "." + std::to_string(i) + ".bias"] = net.layers[i].bias.value();
  }
}

Mlp load_mlp(const Checkpoint& ck, const std::string& prefix, double slope) {
  Mlp net;
  net.slope = slope;
  for (std::size_t i = 0;; ++i) {
    const std::string w = prefix + "." + std::to_string(i) + ".weight";
    if (!ck.has(w)) break;
    Dense d{ad::parameter(ck.tensor(w)), ad::parameter(ck.tensor(prefix + "." + std::to_string(i) + ".bias"))};
    if (d.bias.rows() != 1 || d.bias.cols() != d.weight.cols()) throw FormatError("bias shape mismatch in " + w);
    if (!net.layers.empty() && net.layers.back().out() != d.in()) throw FormatError("layer shapes do not chain at " + w);
    net.layers.push_back(std::move(d));
  }
  if (net.layers.empty()) throw FormatError("checkpoint has no network '" + prefix + "'");
  return net;
}

}  // namespace s2d4d::nn
