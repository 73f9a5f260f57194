#include "s2d4d/pca_baseline.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "s2d4d/errors.hpp"

namespace s2d4d {

Vector PcaModel::explained_variance() const {
  Vector out(eigenvalues.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    acc += eigenvalues[i];
    out[i] = total_variance > 0 ? acc / total_variance : 1.0;
  }
  return out;
}

void PcaModel::store(Checkpoint& ck, const std::string& prefix) const {
  ck.tensors[prefix + ".mean"] = Matrix(mean.transpose());
  ck.tensors[prefix + ".components"] = components;
  ck.tensors[prefix + ".eigenvalues"] = Matrix(eigenvalues.transpose());
  ck.meta[prefix] = {{"components", component_count()}, {"vertices", vertex_count()}, {"total_variance", total_variance}};
}

PcaModel PcaModel::load(const Checkpoint& ck, const std::string& prefix) {
  PcaModel m;
  m.mean = ck.tensor(prefix + ".mean").row(0).transpose();
  m.components = ck.tensor(prefix + ".components");
  m.eigenvalues = ck.tensor(prefix + ".eigenvalues").row(0).transpose();
  if (m.components.cols() != m.mean.size() || m.eigenvalues.size() != m.components.rows() || m.mean.size() % 3 != 0) {
    throw FormatError("PCA tensors have inconsistent shapes");
  }
  m.total_variance = ck.meta.contains(prefix) ? ck.meta[prefix].value("total_variance", 0.0) : 0.0;
  return m;
}

PcaModel build_pca(const Matrix& samples, int n_components) {
  const Eigen::Index m = samples.rows();
  if (n_components < 1) throw InvalidInputError("PCA needs at least one component");
  if (m < 1) throw InvalidInputError("PCA needs samples");
  if (n_components > samples.cols()) {
    throw InvalidInputError("PCA with " + std::to_string(n_components) + " components exceeds the dimension " +
                            std::to_string(samples.cols()));
  }
  PcaModel model;
  model.mean = samples.colwise().mean().transpose();
  const Matrix x = samples.rowwise() - model.mean.transpose();
  const double denom = m > 1 ? static_cast<double>(m - 1) : 1.0;
  model.total_variance = x.squaredNorm() / denom;
  const Eigen::Index d = x.cols();
  if (m <= d) {
    // Gram trick: eigenvectors u of X X^T give components X^T u / sqrt(lambda).
    const Matrix gram = x * x.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    model.components.resize(n_components, d);
    model.eigenvalues.resize(n_components);
    model.components.setZero();
    model.eigenvalues.setZero();
    for (int i = 0; i < std::min<Eigen::Index>(n_components, m); ++i) {
      const Eigen::Index col = m - 1 - i;
      const double lambda = std::max(es.eigenvalues()[col], 0.0);
      Vector c = x.transpose() * es.eigenvectors().col(col);
      const double norm = c.norm();
      if (norm > 1e-12 * std::max(1.0, std::sqrt(model.total_variance))) {
        c /= norm;
      } else {
        c.setZero();
      }
      model.components.row(i) = c.transpose();
      model.eigenvalues[i] = lambda / denom;
    }
  } else {
    const Matrix cov = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    model.components.resize(n_components, d);
    model.eigenvalues.resize(n_components);
    for (int i = 0; i < n_components; ++i) {
      const Eigen::Index col = d - 1 - i;
      model.components.row(i) = es.eigenvectors().col(col).transpose();
      model.eigenvalues[i] = std::max(es.eigenvalues()[col], 0.0) / denom;
    }
  }
  // Components beyond the data rank are completed to an orthonormal set.
  for (int i = 0; i < n_components; ++i) {
    if (model.components.row(i).squaredNorm() > 0.5) continue;
    for (Eigen::Index axis = 0; axis < d; ++axis) {
      Vector c = Vector::Unit(d, axis);
      for (int j = 0; j < n_components; ++j) {
        if (j != i) c -= model.components.row(j).dot(c) * model.components.row(j).transpose();
      }
      if (c.norm() > 0.5) {
        model.components.row(i) = c.normalized().transpose();
        break;
      }
    }
  }
  return model;
}

PcaModel build_pca(const std::vector<DisplacementField>& displacements, int n_components) {
  if (displacements.empty()) throw InvalidInputError("PCA needs samples");
  Matrix x(static_cast<Eigen::Index>(displacements.size()), displacements.front().values.size());
  for (std::size_t i = 0; i < displacements.size(); ++i) {
    if (displacements[i].values.size() != x.cols()) throw ShapeError("displacement fields differ in size");
    x.row(static_cast<Eigen::Index>(i)) = flatten(displacements[i].values).transpose();
  }
  return build_pca(x, n_components);
}

// ---------------------------------------------------------------- fitting

PcaLandmarkFitter::PcaLandmarkFitter(const PcaModel& model, const LandmarkIndexTable& table, const PcaFitOptions& opts)
    : model_(&model) {
  table.validate(model.vertex_count());
  if (opts.relative_ridge < 0) throw InvalidInputError("ridge must be >= 0");
  const Eigen::Index k3 = 3 * static_cast<Eigen::Index>(table.k());
  const int n = model.component_count();
  Eigen::MatrixXd a(k3, n);
  mean_landmarks_.resize(k3);
  for (std::size_t l = 0; l < table.k(); ++l) {
    for (int c = 0; c < 3; ++c) {
      const Eigen::Index src = 3 * table.indices[l] + c;
      const Eigen::Index dst = 3 * static_cast<Eigen::Index>(l) + c;
      a.row(dst) = model.components.col(src).transpose();
      mean_landmarks_[dst] = model.mean[src];
    }
  }
  const Eigen::MatrixXd ata = a.transpose() * a;
  if (opts.relative_ridge > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ata, Eigen::EigenvaluesOnly);
    ridge_ = opts.relative_ridge * es.eigenvalues().maxCoeff();
    const Eigen::MatrixXd reg = ata + ridge_ * Eigen::MatrixXd::Identity(n, n);
    solve_ = reg.ldlt().solve(a.transpose());
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    pinv_ = cod.rank() < n;
    solve_ = cod.pseudoInverse();
  }
}

Vector PcaLandmarkFitter::coefficients(const Points3& landmark_displacement) const {
  const Vector d = flatten(landmark_displacement);
  if (d.size() != mean_landmarks_.size()) throw ShapeError("landmark displacement has the wrong size");
  return solve_ * (d - mean_landmarks_);
}

Matrix PcaLandmarkFitter::predict(const Matrix& landmark_displacements) const {
  if (landmark_displacements.cols() != mean_landmarks_.size()) throw ShapeError("landmark displacements have the wrong size");
  const Matrix coeffs = (landmark_displacements.rowwise() - mean_landmarks_.transpose()) * solve_.transpose();
  return (coeffs * model_->components).rowwise() + model_->mean.transpose();
}

PcaFit fit_landmarks(const PcaModel& model, const Mesh& neutral, const LandmarkFrame& target,
                     const LandmarkIndexTable& table, const PcaFitOptions& opts) {
  if (neutral.vertex_count() != model.vertex_count()) throw TopologyError("neutral mesh does not match the PCA model");
  if (target.k() != static_cast<Eigen::Index>(table.k())) throw ShapeError("target and table disagree on k");
  const PcaLandmarkFitter fitter(model, table, opts);
  PcaFit fit;
  fit.coefficients = fitter.coefficients(target.points - extract_landmarks(neutral, table).points);
  const Vector dense = model.mean + model.components.transpose() * fit.coefficients;
  fit.fitted = apply_displacement(neutral, DisplacementField{unflatten(dense)});
  fit.pseudo_inverse = fitter.used_pseudo_inverse();
  fit.ridge = fitter.ridge();
  return fit;
}

// ---------------------------------------------------------------- comparison

std::vector<double> vertex_errors(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() || predictions.cols() % 3 != 0) {
    throw ShapeError("prediction and target batches differ in shape");
  }
  const Eigen::Index n = predictions.cols() / 3;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(predictions.rows() * n));
  for (Eigen::Index r = 0; r < predictions.rows(); ++r) {
    for (Eigen::Index v = 0; v < n; ++v) {
      out.push_back((predictions.row(r).segment(3 * v, 3) - targets.row(r).segment(3 * v, 3)).norm());
    }
  }
  return out;
}

std::vector<double> default_thresholds(double max_mm, int steps) {
  std::vector<double> t;
  for (int i = 0; i <= steps; ++i) t.push_back(max_mm * i / steps);
  return t;
}

MethodReport summarize_errors(const std::string& method, const std::string& split, const std::vector<double>& errors,
                              const std::vector<double>& thresholds) {
  MethodReport r;
  r.method = method;
  r.split = split;
  r.error = error_stats(Eigen::Map<const Vector>(errors.data(), static_cast<Eigen::Index>(errors.size())));
  r.curve = cumulative_error_curve(errors, thresholds);
  return r;
}

std::string ComparisonReport::csv() const {
  std::ostringstream os;
  os.precision(8);
  os << "method,split,mean_mm,std_mm\n";
  for (const auto& r : rows) os << r.method << ',' << r.split << ',' << r.error.mean << ',' << r.error.stddev << '\n';
  return os.str();
}

std::string ComparisonReport::text() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "Reconstruction error (mm), mean +- std per vertex\n";
  for (const auto& r : rows) {
    os << "  " << r.method << std::string(r.method.size() < 10 ? 10 - r.method.size() : 1, ' ') << r.split << "  "
       << r.error.mean << " +- " << r.error.stddev << '\n';
  }
  return os.str();
}

std::string ComparisonReport::curves_csv() const {
  std::ostringstream os;
  os.precision(8);
  os << "threshold_mm";
  for (const auto& r : rows) os << ',' << r.method;
  os << '\n';
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    os << thresholds[i];
    for (const auto& r : rows) os << ',' << r.curve[i];
    os << '\n';
  }
  return os.str();
}

ComparisonReport evaluate_comparison(const S2DDataset& test, const std::string& split, const S2DDecoder* decoder,
                                     const std::vector<const PcaModel*>& models, const LandmarkIndexTable& table,
                                     const PcaFitOptions& opts) {
  ComparisonReport report;
  report.thresholds = default_thresholds();
  std::vector<std::size_t> idx(test.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Matrix inputs = test.inputs(idx);
  const Matrix targets = test.targets(idx);
  if (decoder) {
    Matrix pred(targets.rows(), targets.cols());
    for (Eigen::Index b = 0; b < inputs.rows(); b += 256) {
      const Eigen::Index n = std::min<Eigen::Index>(256, inputs.rows() - b);
      pred.middleRows(b, n) = decoder->forward(Matrix(inputs.middleRows(b, n)));
    }
    report.rows.push_back(summarize_errors("ours", split, vertex_errors(pred, targets), report.thresholds));
  }
  for (const PcaModel* m : models) {
    const PcaLandmarkFitter fitter(*m, table, opts);
    report.rows.push_back(summarize_errors("pca-" + std::to_string(m->component_count()), split,
                                           vertex_errors(fitter.predict(inputs), targets), report.thresholds));
  }
  return report;
}

}  // namespace s2d4d
