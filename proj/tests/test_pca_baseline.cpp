#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "s2d4d/errors.hpp"
#include "s2d4d/pca_baseline.hpp"
#include "test_support.hpp"

using namespace s2d4d;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Rank-r samples around a nonzero mean, D = 3 * vertices.
Matrix low_rank_samples(int m, int vertices, int r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const Matrix basis = Matrix::NullaryExpr(r, 3 * vertices, [&](Eigen::Index, Eigen::Index) { return n(rng); });
  const Matrix coeffs = Matrix::NullaryExpr(m, r, [&](Eigen::Index, Eigen::Index) { return n(rng); });
  const Matrix offset = Matrix::Constant(1, 3 * vertices, 0.7);
  return (coeffs * basis).rowwise() + offset.row(0);
}

void check_orthonormal(const Matrix& c) {
  const Matrix g = c * c.transpose();
  CHECK((g - Matrix::Identity(c.rows(), c.rows())).cwiseAbs().maxCoeff() < 1e-9);
}

}  // namespace

TEST_CASE("pca on low-rank data in both regimes") {
  for (int m : {12, 80}) {  // Gram (m <= D) and covariance (m > D) paths
    const Matrix x = low_rank_samples(m, 20, 4, 3);
    const PcaModel model = build_pca(x, 6);
    REQUIRE(model.component_count() == 6);
    REQUIRE(model.vertex_count() == 20);
    check_orthonormal(model.components);
    for (int i = 1; i < 6; ++i) CHECK(model.eigenvalues[i] <= model.eigenvalues[i - 1] + 1e-12);
    CHECK(model.eigenvalues[4] < 1e-9 * model.eigenvalues[0]);
    const Vector ev = model.explained_variance();
    CHECK_THAT(ev[3], WithinAbs(1.0, 1e-9));
    // exact reconstruction from 4 components
    const Matrix centered = x.rowwise() - model.mean.transpose();
    const Matrix recon = (centered * model.components.transpose()) * model.components;
    CHECK((recon - centered).cwiseAbs().maxCoeff() < 1e-9);
    // eigenvalues match the sample covariance
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered.transpose() * centered / (m - 1));
    CHECK_THAT(model.eigenvalues[0], WithinRel(es.eigenvalues()[es.eigenvalues().size() - 1], 1e-9));
    CHECK_THAT(model.total_variance, WithinRel(es.eigenvalues().sum(), 1e-9));
  }
}

TEST_CASE("more components than samples completes the basis") {
  const Matrix x = low_rank_samples(5, 10, 5, 8);
  const PcaModel model = build_pca(x, 12);
  check_orthonormal(model.components);
  for (int i = 4; i < 12; ++i) CHECK(model.eigenvalues[i] < 1e-9);
  CHECK_THROWS_AS(build_pca(x, 31), InvalidInputError);
  CHECK_THROWS_AS(build_pca(x, 0), InvalidInputError);
  CHECK_THROWS_AS(build_pca(Matrix(0, 30), 2), InvalidInputError);
}

TEST_CASE("landmark fitting") {
  const Matrix x = low_rank_samples(40, 30, 3, 5);
  const PcaModel model = build_pca(x, 3);
  const LandmarkIndexTable table{{0, 4, 9, 17, 22, 29}};
  const Mesh neutral = s2d4d::testing::grid_mesh(6, 5, 0.2);
  const Vector truth = model.mean + model.components.transpose() * Vector::Constant(3, 1.3);
  const Mesh target_mesh = apply_displacement(neutral, DisplacementField{unflatten(truth)});
  const LandmarkFrame target = extract_landmarks(target_mesh, table);

  PcaFitOptions exact;
  exact.relative_ridge = 0.0;
  const PcaFit fit = fit_landmarks(model, neutral, target, table, exact);
  CHECK_FALSE(fit.pseudo_inverse);
  CHECK(fit.ridge == 0.0);
  CHECK((fit.coefficients - Vector::Constant(3, 1.3)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((fit.fitted.positions - target_mesh.positions).cwiseAbs().maxCoeff() < 1e-9);

  // ridge is relative to the largest eigenvalue of A^T A
  const PcaLandmarkFitter fitter(model, table);
  Matrix a(18, 3);
  for (int l = 0; l < 6; ++l) {
    for (int c = 0; c < 3; ++c) a.row(3 * l + c) = model.components.col(3 * table.indices[l] + c).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.transpose() * a);
  CHECK_THAT(fitter.ridge(), WithinRel(1e-4 * es.eigenvalues().maxCoeff(), 1e-12));
  const PcaFit ridged = fit_landmarks(model, neutral, target, table);
  CHECK((ridged.coefficients - Vector::Constant(3, 1.3)).norm() < 1e-2);
  CHECK(ridged.coefficients.norm() < fit.coefficients.norm());

  // batch prediction agrees with single fits
  const Matrix batch = flatten(target.points - extract_landmarks(neutral, table).points).transpose();
  const Vector dense = flatten(ridged.fitted.positions - neutral.positions);
  CHECK((fitter.predict(batch).row(0).transpose() - dense).cwiseAbs().maxCoeff() < 1e-9);

  // more components than landmark coordinates: rank deficient
  const PcaModel big = build_pca(low_rank_samples(40, 30, 25, 6), 25);
  const PcaFit pinv = fit_landmarks(big, neutral, target, table, exact);
  CHECK(pinv.pseudo_inverse);
  CHECK(pinv.coefficients.allFinite());
  CHECK_THROWS_AS(fit_landmarks(model, s2d4d::testing::grid_mesh(4, 4), target, table), TopologyError);
  CHECK_THROWS_AS(PcaLandmarkFitter(model, LandmarkIndexTable{{0, 30}}), InvalidInputError);
}

TEST_CASE("pca checkpoint roundtrip") {
  const PcaModel model = build_pca(low_rank_samples(20, 8, 3, 1), 5);
  Checkpoint ck;
  model.store(ck);
  const PcaModel back = PcaModel::load(parse_checkpoint(serialize_checkpoint(ck), "mem"));
  CHECK(back.components == model.components);
  CHECK(back.mean == model.mean);
  CHECK(back.eigenvalues == model.eigenvalues);
  CHECK(back.total_variance == model.total_variance);
  Checkpoint broken = ck;
  broken.tensors["pca.mean"] = Matrix::Zero(1, 5);
  CHECK_THROWS_AS(PcaModel::load(broken), FormatError);
}

TEST_CASE("comparison report") {
  const std::vector<double> errs = vertex_errors(Matrix::Zero(1, 6), (Matrix(1, 6) << 3, 4, 0, 0, 0, 1).finished());
  REQUIRE(errs.size() == 2u);
  CHECK(errs[0] == 5.0);
  CHECK(errs[1] == 1.0);
  CHECK_THROWS_AS(vertex_errors(Matrix::Zero(1, 6), Matrix::Zero(2, 6)), ShapeError);

  const auto t = default_thresholds(10.0, 100);
  REQUIRE(t.size() == 101u);
  CHECK(t.back() == 10.0);

  ComparisonReport r;
  r.thresholds = {0.0, 2.0, 6.0};
  r.rows.push_back(summarize_errors("ours", "test", errs, r.thresholds));
  r.rows.push_back(summarize_errors("pca-204", "test", {2.0, 4.0}, r.thresholds));
  const std::string csv = r.csv();
  CHECK(csv.rfind("method,split,mean_mm,std_mm\n", 0) == 0);
  CHECK(csv.find("ours,test,3,") != std::string::npos);
  CHECK(csv.find("pca-204,test,3,") != std::string::npos);
  CHECK(r.curves_csv().rfind("threshold_mm,ours,pca-204\n", 0) == 0);
  CHECK(r.rows[0].curve == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(r.text().find("pca-204") != std::string::npos);
}
