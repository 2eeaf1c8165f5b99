#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "activemon/textio.hpp"

namespace activemon {

// Linear map p = components * (v - mean) onto the leading principal axes.
struct Projection {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // k x dim, orthonormal rows
  Eigen::VectorXd explained_variance;

  std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(components.rows()); }

  bool operator==(const Projection& o) const {
    return mean == o.mean && components == o.components && explained_variance == o.explained_variance;
  }
};

// Fits PCA over the columns of `vectors` (dim x n). Keeps the smallest k whose
// cumulative explained-variance ratio reaches variance_target. Each component
// is signed so that its largest-magnitude entry is positive.
Projection fit_pca(const Eigen::MatrixXd& vectors, double variance_target = 0.99);
Projection fit_pca(const std::vector<Eigen::VectorXd>& vectors, double variance_target = 0.99);

Eigen::VectorXd transform(const Projection& proj, const Eigen::VectorXd& v);

Projection identity_projection(std::size_t dim);

void write_projection(textio::Writer& w, const Projection& proj);
Projection read_projection(textio::Reader& r);

}  // namespace activemon
