#pragma once

#include <string>
#include <vector>

#include "s2d4d/autodiff.hpp"
#include "s2d4d/checkpoint.hpp"

// Fully connected building blocks shared by the networks.

namespace s2d4d::nn {

struct Dense {
  ad::Var weight;  // in × out
  ad::Var bias;    // 1 × out

  Eigen::Index in() const { return weight.rows(); }
  Eigen::Index out() const { return weight.cols(); }
};

/// Glorot-uniform weights, zero bias.
Dense make_dense(Eigen::Index in, Eigen::Index out, Rng& rng);
ad::Var forward(const Dense& layer, const ad::Var& x);

/// Stack of dense layers; leaky rectifier after every layer but the last.
struct Mlp {
  std::vector<Dense> layers;
  double slope = 0.2;

  Eigen::Index in() const { return layers.front().in(); }
  Eigen::Index out() const { return layers.back().out(); }
  std::vector<ad::Var> parameters() const;
};

/// sizes = {in, hidden..., out}
Mlp make_mlp(const std::vector<Eigen::Index>& sizes, Rng& rng, double slope = 0.2);
ad::Var forward(const Mlp& net, const ad::Var& x);

/// Tensors named <prefix>.<i>.weight / <prefix>.<i>.bias.
void store(const Mlp& net, const std::string& prefix, Checkpoint& ck);
Mlp load_mlp(const Checkpoint& ck, const std::string& prefix, double slope = 0.2);

}  // namespace s2d4d::nn
