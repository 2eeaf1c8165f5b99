#include "activemon/projection.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "activemon/error.hpp"
#include "activemon/textio.hpp"

namespace activemon {

Projection fit_pca(const Eigen::MatrixXd& vectors, double variance_target) {
  const Eigen::Index dim = vectors.rows();
  const Eigen::Index n = vectors.cols();
  if (n < 2) throw Error(ErrorCode::TooFewPoints, "PCA needs at least 2 vectors, got " + std::to_string(n));
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "variance_target must lie in (0,1]");
  }

  Projection proj;
  proj.mean = vectors.rowwise().mean();
  const Eigen::MatrixXd centered = vectors.colwise() - proj.mean;
  const Eigen::MatrixXd cov = (centered * centered.transpose()) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::DegenerateData, "eigendecomposition failed");

  // Eigen sorts ascending; walk from the top.
  std::vector<double> values(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < dim; ++i) values[static_cast<std::size_t>(i)] = std::max(0.0, solver.eigenvalues()(dim - 1 - i));
  double total = 0.0;
  for (double v : values) total += v;
  if (total <= 0.0) throw Error(ErrorCode::DegenerateData, "all vectors are identical");

  Eigen::Index k = dim;
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    cumulative += values[static_cast<std::size_t>(i)];
    if (cumulative / total >= variance_target) {
      k = i + 1;
      break;
    }
  }

  proj.components.resize(k, dim);
  proj.explained_variance.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd axis = solver.eigenvectors().col(dim - 1 - i);
    Eigen::Index pivot = 0;
    for (Eigen::Index j = 1; j < dim; ++j) {
      if (std::abs(axis(j)) > std::abs(axis(pivot))) pivot = j;
    }
    if (axis(pivot) < 0.0) axis = -axis;
    proj.components.row(i) = axis.transpose();
    proj.explained_variance(i) = values[static_cast<std::size_t>(i)];
  }
  return proj;
}

Projection fit_pca(const std::vector<Eigen::VectorXd>& vectors, double variance_target) {
  if (vectors.empty()) throw Error(ErrorCode::TooFewPoints, "PCA needs at least 2 vectors, got 0");
  Eigen::MatrixXd m(vectors.front().size(), static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != m.rows()) throw Error(ErrorCode::ShapeMismatch, "vectors differ in dimension");
    m.col(static_cast<Eigen::Index>(i)) = vectors[i];
  }
  return fit_pca(m, variance_target);
}

Eigen::VectorXd transform(const Projection& proj, const Eigen::VectorXd& v) {
  if (v.size() != proj.mean.size()) {
    throw Error(ErrorCode::ShapeMismatch, "vector has dimension " + std::to_string(v.size()) + ", projection expects " +
                                              std::to_string(proj.mean.size()));
  }
  return proj.components * (v - proj.mean);
}

Projection identity_projection(std::size_t dim) {
  if (dim == 0) throw Error(ErrorCode::ShapeMismatch, "identity projection needs dim > 0");
  const auto d = static_cast<Eigen::Index>(dim);
  Projection proj;
  proj.mean = Eigen::VectorXd::Zero(d);
  proj.components = Eigen::MatrixXd::Identity(d, d);
  proj.explained_variance = Eigen::VectorXd::Zero(d);
  return proj;
}

void write_projection(textio::Writer& w, const Projection& proj) {
  w.vector("mean", proj.mean);
  w.matrix("components", proj.components);
  w.vector("explained_variance", proj.explained_variance);
}

Projection read_projection(textio::Reader& r) {
  Projection proj;
  proj.mean = r.vector("mean");
  proj.components = r.matrix("components");
  proj.explained_variance = r.vector("explained_variance");
  if (proj.components.cols() != proj.mean.size() || proj.explained_variance.size() != proj.components.rows()) {
    r.fail("projection shapes disagree");
  }
  return proj;
}

}  // namespace activemon
