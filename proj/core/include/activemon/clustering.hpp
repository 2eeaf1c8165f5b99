#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "activemon/data.hpp"

namespace activemon {

// Points are the columns of a (dim x n) matrix throughout this module.

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Eigen::MatrixXd centers;  // dim x k
  double sse = 0.0;
  // SSE after the initial assignment and after every Lloyd iteration.
  std::vector<double> sse_history;
  std::size_t iterations = 0;
};

inline constexpr std::size_t kMaxLloydIterations = 300;

// k-means++ seeding followed by Lloyd iterations until the assignment is a
// fixpoint (or kMaxLloydIterations). Empty clusters are re-seeded at the
// point farthest from its center.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed);

// Lloyd iterations from the given initial centers (dim x k).
KMeansResult kmeans_from(const Eigen::MatrixXd& points, Eigen::MatrixXd initial_centers);

double sum_of_squares(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignments,
                      const Eigen::MatrixXd& centers);

// Mean silhouette coefficient; singleton clusters contribute 0.
double silhouette_score(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignments);

struct ClusteringOptions {
  std::size_t k_max = 5;
  std::uint64_t seed = 0;
  // Silhouette is evaluated on a seeded subsample when a class has more
  // points than this.
  std::size_t silhouette_sample = 1000;
};

// k in [1, min(k_max, n)] maximizing the mean silhouette; k = 1 scores 0 and
// ties go to the smaller k.
std::size_t choose_k(const Eigen::MatrixXd& points, const ClusteringOptions& options);
inline std::size_t choose_k(const Eigen::MatrixXd& points, std::size_t k_max, std::uint64_t seed) {
  return choose_k(points, ClusteringOptions{k_max, seed});
}

struct Cluster {
  Eigen::VectorXd center;    // midpoint of the member bounding box
  Eigen::VectorXd radius;    // box half-widths, clamped to the radius floor
  Eigen::VectorXd centroid;  // k-means mean, used to warm-start refits
  std::size_t member_count = 0;

  bool operator==(const Cluster& o) const {
    return center == o.center && radius == o.radius && centroid == o.centroid && member_count == o.member_count;
  }
};

struct ClassClusterSet {
  ClassId label = 0;
  std::vector<Cluster> clusters;

  bool operator==(const ClassClusterSet&) const = default;
};

// Per-dimension floor max(1e-6, 1e-6 * spread) over all columns of `points`.
Eigen::VectorXd radius_floor_for(const Eigen::MatrixXd& points);

ClassClusterSet build_class_clusters(const Eigen::MatrixXd& points, ClassId label, const ClusteringOptions& options,
                                     const Eigen::VectorXd& radius_floor);

// Re-clusters with the previous cluster count, starting Lloyd from the
// previous centroids.
ClassClusterSet refit_class_clusters(const Eigen::MatrixXd& points, const ClassClusterSet& previous,
                                     const Eigen::VectorXd& radius_floor);

// Box construction for a fixed assignment.
ClassClusterSet boxes_from_assignment(const Eigen::MatrixXd& points, ClassId label, const KMeansResult& clustering,
                                      const Eigen::VectorXd& radius_floor);

}  // namespace activemon
