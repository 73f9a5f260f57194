#include "s2d4d/autodiff.hpp"

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "s2d4d/errors.hpp"

namespace s2d4d::ad {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}

Var make(Matrix value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (g_grad_enabled && any) {
    n->requires_grad = true;
    for (auto& in : inputs) n->inputs.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

Var leaf(Matrix value, bool requires_grad, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->op = op;
  return Var(std::move(n));
}

}  // namespace

double Var::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() on a " + shape_str(value()) + " tensor");
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) { return leaf(std::move(value), false, "constant"); }
Var scalar(double x) { return constant(Matrix::Constant(1, 1, x)); }
Var parameter(Matrix value) { return leaf(std::move(value), true, "parameter"); }
Var variable(Matrix value) { return leaf(std::move(value), true, "variable"); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a, b}, [](const Var& g) { return std::vector<Var>{g, g}; }, "add");
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a, b}, [](const Var& g) { return std::vector<Var>{g, neg(g)}; }, "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a, b},
              [a, b](const Var& g) { return std::vector<Var>{mul(g, b), mul(g, a)}; }, "mul");
}

Var neg(const Var& a) {
  return make(-a.value(), {a}, [](const Var& g) { return std::vector<Var>{neg(g)}; }, "neg");
}

Var scale(const Var& a, double s) {
  return make(a.value() * s, {a}, [s](const Var& g) { return std::vector<Var>{scale(g, s)}; }, "scale");
}

Var add_scalar(const Var& a, double s) {
  return make(a.value().array() + s, {a}, [](const Var& g) { return std::vector<Var>{g}; }, "add_scalar");
}

Var add_row(const Var& a, const Var& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("add_row: bias must be 1x" + std::to_string(a.cols()));
  Matrix v = a.value();
  v.rowwise() += b.value().row(0);
  return make(std::move(v), {a, b}, [](const Var& g) { return std::vector<Var>{g, col_sum(g)}; }, "add_row");
}

Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: need " + std::to_string(a.rows()) + "x1");
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  return make(std::move(v), {a, col},
              [a, col](const Var& g) { return std::vector<Var>{mul_col(g, col), row_sum(mul(g, a))}; }, "mul_col");
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: need 1x" + std::to_string(a.cols()));
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return make(std::move(v), {a, row},
              [a, row](const Var& g) { return std::vector<Var>{mul_row(g, row), col_sum(mul(g, a))}; }, "mul_row");
}

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
  const Eigen::Index inner_a = ta ? a.rows() : a.cols();
  const Eigen::Index inner_b = tb ? b.cols() : b.rows();
  if (inner_a != inner_b) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_str(a.value()) + (ta ? "^T" : "") + " * " +
                     shape_str(b.value()) + (tb ? "^T" : "") + ")");
  }
  Matrix v(ta ? a.cols() : a.rows(), tb ? b.rows() : b.cols());
  if (!ta && !tb) v.noalias() = a.value() * b.value();
  else if (ta && !tb) v.noalias() = a.value().transpose() * b.value();
  else if (!ta && tb) v.noalias() = a.value() * b.value().transpose();
  else v.noalias() = a.value().transpose() * b.value().transpose();
  return make(std::move(v), {a, b},
              [a, b, ta, tb](const Var& g) {
                Var da = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
                Var db = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
                return std::vector<Var>{da, db};
              },
              "matmul");
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a}, [](const Var& g) { return std::vector<Var>{transpose(g)}; }, "transpose");
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.value()) + " as " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return make(std::move(v), {a}, [r0, c0](const Var& g) { return std::vector<Var>{reshape(g, r0, c0)}; }, "reshape");
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return make(std::move(v), {a, b},
              [ca, cb](const Var& g) { return std::vector<Var>{slice_cols(g, 0, ca), slice_cols(g, ca, cb)}; },
              "concat_cols");
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) throw ShapeError("slice_cols out of range");
  const Eigen::Index total = a.cols();
  return make(a.value().middleCols(begin, count), {a},
              [begin, total](const Var& g) { return std::vector<Var>{pad_cols(g, begin, total)}; }, "slice_cols");
}

Var pad_cols(const Var& a, Eigen::Index begin, Eigen::Index total) {
  if (begin < 0 || begin + a.cols() > total) throw ShapeError("pad_cols out of range");
  Matrix v = Matrix::Zero(a.rows(), total);
  v.middleCols(begin, a.cols()) = a.value();
  const Eigen::Index count = a.cols();
  return make(std::move(v), {a}, [begin, count](const Var& g) { return std::vector<Var>{slice_cols(g, begin, count)}; },
              "pad_cols");
}

Var leaky_relu(const Var& a, double slope) {
  Matrix mask = (a.value().array() > 0.0).select(Matrix::Ones(a.rows(), a.cols()), slope);
  Matrix v = a.value().cwiseProduct(mask);
  // piecewise linear: the mask is constant, second derivatives vanish
  auto m = std::make_shared<Matrix>(std::move(mask));
  return make(std::move(v), {a}, [m](const Var& g) { return std::vector<Var>{mul(g, constant(*m))}; }, "leaky_relu");
}

Var tanh(const Var& a) {
  return make(a.value().array().tanh(), {a},
              [a](const Var& g) { return std::vector<Var>{mul(g, add_scalar(neg(square(tanh(a))), 1.0))}; }, "tanh");
}

Var pow(const Var& a, double exponent) {
  Matrix v = exponent == 2.0 ? Matrix(a.value().array().square()) : Matrix(a.value().array().pow(exponent));
  return make(std::move(v), {a},
              [a, exponent](const Var& g) {
                if (exponent == 1.0) return std::vector<Var>{g};
                return std::vector<Var>{mul(g, scale(pow(a, exponent - 1.0), exponent))};
              },
              "pow");
}

Var square(const Var& a) { return pow(a, 2.0); }
Var sqrt(const Var& a) { return pow(a, 0.5); }

Var abs(const Var& a) {
  auto sign = std::make_shared<Matrix>(a.value().unaryExpr([](double x) { return static_cast<double>((x > 0) - (x < 0)); }));
  return make(a.value().cwiseAbs(), {a}, [sign](const Var& g) { return std::vector<Var>{mul(g, constant(*sign))}; }, "abs");
}

Var sum(const Var& a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  return make(Matrix::Constant(1, 1, a.value().sum()), {a},
              [r, c](const Var& g) { return std::vector<Var>{broadcast_rows(broadcast_cols(g, c), r)}; }, "sum");
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum(const Var& a) {
  const Eigen::Index c = a.cols();
  return make(a.value().rowwise().sum(), {a}, [c](const Var& g) { return std::vector<Var>{broadcast_cols(g, c)}; },
              "row_sum");
}

Var col_sum(const Var& a) {
  const Eigen::Index r = a.rows();
  return make(a.value().colwise().sum(), {a}, [r](const Var& g) { return std::vector<Var>{broadcast_rows(g, r)}; },
              "col_sum");
}

Var broadcast_cols(const Var& a, Eigen::Index cols) {
  if (a.cols() != 1) throw ShapeError("broadcast_cols expects a column");
  Matrix v = a.value().col(0).replicate(1, cols);
  return make(std::move(v), {a}, [](const Var& g) { return std::vector<Var>{row_sum(g)}; }, "broadcast_cols");
}

Var broadcast_rows(const Var& a, Eigen::Index rows) {
  if (a.rows() != 1) throw ShapeError("broadcast_rows expects a row");
  Matrix v = a.value().row(0).replicate(rows, 1);
  return make(std::move(v), {a}, [](const Var& g) { return std::vector<Var>{col_sum(g)}; }, "broadcast_rows");
}

Var l1_norm(const Var& a) { return sum(abs(a)); }
Var l2_norm(const Var& a) { return sqrt(sum(square(a))); }

Var gather_cols(const Var& a, std::shared_ptr<const std::vector<int>> index) {
  const Eigen::Index n = static_cast<Eigen::Index>(index->size());
  Matrix v(a.rows(), n);
  const auto& idx = *index;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (idx[static_cast<std::size_t>(j)] < 0 || idx[static_cast<std::size_t>(j)] >= a.cols()) {
      throw ShapeError("gather_cols: index out of range");
    }
  }
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double* src = a.value().row(r).data();
    double* dst = v.row(r).data();
    for (Eigen::Index j = 0; j < n; ++j) dst[j] = src[idx[static_cast<std::size_t>(j)]];
  }
  const Eigen::Index cols = a.cols();
  return make(std::move(v), {a}, [index, cols](const Var& g) { return std::vector<Var>{scatter_cols(g, index, cols)}; },
              "gather_cols");
}

Var scatter_cols(const Var& a, std::shared_ptr<const std::vector<int>> index, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(index->size()) != a.cols()) throw ShapeError("scatter_cols: index size mismatch");
  Matrix v = Matrix::Zero(a.rows(), cols);
  const auto& idx = *index;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double* src = a.value().row(r).data();
    double* dst = v.row(r).data();
    for (Eigen::Index j = 0; j < a.cols(); ++j) dst[idx[static_cast<std::size_t>(j)]] += src[j];
  }
  return make(std::move(v), {a}, [index](const Var& g) { return std::vector<Var>{gather_cols(g, index)}; },
              "scatter_cols");
}

Var transfer(const Var& a, std::shared_ptr<const SparseTransfer> op, Eigen::Index channels, bool transposed) {
  const Eigen::Index in_vertices = transposed ? op->rows : op->cols;
  const Eigen::Index out_vertices = transposed ? op->cols : op->rows;
  if (a.cols() != in_vertices * channels) {
    throw ShapeError("transfer: expected " + std::to_string(in_vertices * channels) + " columns, got " +
                     std::to_string(a.cols()));
  }
  Matrix v = Matrix::Zero(a.rows(), out_vertices * channels);
  for (Eigen::Index b = 0; b < a.rows(); ++b) {
    const double* src = a.value().row(b).data();
    double* dst = v.row(b).data();
    for (int r = 0; r < op->rows; ++r) {
      for (const auto& [c, w] : op->entries[static_cast<std::size_t>(r)]) {
        const int from = transposed ? r : c;
        const int to = transposed ? c : r;
        const double* s = src + static_cast<Eigen::Index>(from) * channels;
        double* d = dst + static_cast<Eigen::Index>(to) * channels;
        for (Eigen::Index ch = 0; ch < channels; ++ch) d[ch] += w * s[ch];
      }
    }
  }
  return make(std::move(v), {a},
              [op, channels, transposed](const Var& g) { return std::vector<Var>{transfer(g, op, channels, !transposed)}; },
              "transfer");
}

std::vector<Var> gradient(const Var& output, const std::vector<Var>& wrt, bool create_graph) {
  if (!output.defined() || output.rows() != 1 || output.cols() != 1) {
    throw InvalidInputError("gradient: output must be a scalar");
  }
  for (const auto& w : wrt) {
    if (!w.requires_grad()) throw InvalidInputError("gradient: input is detached from the graph");
  }

  // reverse topological order over nodes that require gradients
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  if (output.requires_grad()) {
    std::vector<std::pair<Node*, std::size_t>> stack{{output.node().get(), 0}};
    seen.insert(output.node().get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->inputs.size()) {
        Node* child = n->inputs[i++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<Node*, Var> grads;
  {
    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();
    if (output.requires_grad()) grads[output.node().get()] = constant(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      const auto g = grads.find(n);
      if (g == grads.end() || !n->backward) continue;
      const std::vector<Var> in_grads = n->backward(g->second);
      for (std::size_t i = 0; i < n->inputs.size(); ++i) {
        Node* in = n->inputs[i].get();
        if (!in->requires_grad || !in_grads[i].defined()) continue;
        auto slot = grads.find(in);
        if (slot == grads.end()) grads.emplace(in, in_grads[i]);
        else slot->second = add(slot->second, in_grads[i]);
      }
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    const auto g = grads.find(w.node().get());
    out.push_back(g == grads.end() ? constant(Matrix::Zero(w.rows(), w.cols())) : g->second);
  }
  return out;
}

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

AdamState make_adam_state(const std::vector<Var>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_step(std::vector<Var>& params, const std::vector<Matrix>& grads, AdamState& state, const AdamOptions& o) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step: parameter / gradient / state counts differ");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    Matrix& p = params[i].mutable_value();
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].rows() != p.rows() || state.m[i].cols() != p.cols()) {
      throw ShapeError("adam_step: gradient shape does not match parameter " + std::to_string(i));
    }
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * g;
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * g.cwiseAbs2();
    p.array() -= o.lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + o.eps);
  }
}

void adam_step(std::vector<Var>& params, const std::vector<Var>& grads, AdamState& state, const AdamOptions& o) {
  std::vector<Matrix> g;
  g.reserve(grads.size());
  for (const auto& v : grads) g.push_back(v.value());
  adam_step(params, g, state, o);
}

}  // namespace s2d4d::ad
