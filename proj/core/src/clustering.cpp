#include "activemon/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "activemon/error.hpp"

namespace activemon {

namespace {

// Nearest center per point, lowest index on ties. Returns the SSE.
double assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers, std::vector<std::size_t>& out) {
  double sse = 0.0;
  out.resize(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centers.cols(); ++c) {
      const double d = (points.col(i) - centers.col(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::size_t>(c);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
    sse += best_d;
  }
  return sse;
}

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& points, std::size_t k, std::mt19937_64& rng) {
  const Eigen::Index n = points.cols();
  Eigen::MatrixXd centers(points.rows(), static_cast<Eigen::Index>(k));
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.col(0) = points.col(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (points.col(i) - centers.col(0)).squaredNorm();

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double run = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        run += d2[static_cast<std::size_t>(i)];
        if (run > target && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.col(static_cast<Eigen::Index>(c)) = points.col(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (points.col(i) - points.col(pick)).squaredNorm());
    }
  }
  return centers;
}

// One pass of single-point moves (Hartigan): a point changes cluster when
// that lowers the SSE once both means are updated. `centers` must hold the
// means of `assignments`. Returns whether anything moved.
bool single_moves(const Eigen::MatrixXd& points, std::vector<std::size_t>& assignments, Eigen::MatrixXd& centers) {
  const Eigen::Index k = centers.cols();
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (auto a : assignments) counts[a] += 1.0;
  bool moved = false;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const std::size_t a = assignments[static_cast<std::size_t>(i)];
    if (counts[a] < 2.0) continue;
    const auto ca = static_cast<Eigen::Index>(a);
    const double leave = counts[a] / (counts[a] - 1.0) * (points.col(i) - centers.col(ca)).squaredNorm();
    std::size_t best = a;
    double best_join = leave;
    for (Eigen::Index b = 0; b < k; ++b) {
      if (b == ca) continue;
      const double nb = counts[static_cast<std::size_t>(b)];
      const double join = nb / (nb + 1.0) * (points.col(i) - centers.col(b)).squaredNorm();
      if (join < best_join * (1.0 - 1e-12)) {
        best_join = join;
        best = static_cast<std::size_t>(b);
      }
    }
    if (best == a) continue;
    const auto cb = static_cast<Eigen::Index>(best);
    centers.col(ca) = (centers.col(ca) * counts[a] - points.col(i)) / (counts[a] - 1.0);
    centers.col(cb) = (centers.col(cb) * counts[best] + points.col(i)) / (counts[best] + 1.0);
    counts[a] -= 1.0;
    counts[best] += 1.0;
    assignments[static_cast<std::size_t>(i)] = best;
    moved = true;
  }
  return moved;
}

KMeansResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centers) {
  const Eigen::Index n = points.cols();
  const Eigen::Index k = centers.cols();
  KMeansResult r;
  r.sse = assign(points, centers, r.assignments);
  r.sse_history.push_back(r.sse);

  std::vector<std::size_t> next;
  for (;;) {
  while (r.iterations < kMaxLloydIterations) {
    ++r.iterations;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t a = r.assignments[static_cast<std::size_t>(i)];
      sums.col(static_cast<Eigen::Index>(a)) += points.col(i);
      ++counts[a];
    }
    // Distance of each point to its current center, for re-seeding.
    std::vector<double> own(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      own[static_cast<std::size_t>(i)] =
          (points.col(i) - centers.col(static_cast<Eigen::Index>(r.assignments[static_cast<std::size_t>(i)]))).squaredNorm();
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        const auto far = static_cast<Eigen::Index>(std::max_element(own.begin(), own.end()) - own.begin());
        centers.col(c) = points.col(far);
        own[static_cast<std::size_t>(far)] = -1.0;
      }
    }
    const double sse = assign(points, centers, next);
    r.sse_history.push_back(sse);
    r.sse = sse;
    if (next == r.assignments) break;
    r.assignments.swap(next);
  }
  if (r.iterations >= kMaxLloydIterations || !single_moves(points, r.assignments, centers)) break;
  r.sse = sum_of_squares(points, r.assignments, centers);
  r.sse_history.push_back(r.sse);
  }
  r.centers = std::move(centers);
  return r;
}

double distance(const Eigen::MatrixXd& points, Eigen::Index a, Eigen::Index b) {
  return (points.col(a) - points.col(b)).norm();
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.cols());
  if (k < 1 || k > n) {
    throw Error(ErrorCode::TooFewPoints, "k = " + std::to_string(k) + " with " + std::to_string(n) + " points");
  }
  std::mt19937_64 rng(seed);
  return lloyd(points, plus_plus_seeds(points, k, rng));
}

KMeansResult kmeans_from(const Eigen::MatrixXd& points, Eigen::MatrixXd initial_centers) {
  if (initial_centers.cols() < 1 || initial_centers.cols() > points.cols()) {
    throw Error(ErrorCode::TooFewPoints, "k = " + std::to_string(initial_centers.cols()) + " with " +
                                             std::to_string(points.cols()) + " points");
  }
  if (initial_centers.rows() != points.rows()) throw Error(ErrorCode::ShapeMismatch, "center dimension mismatch");
  return lloyd(points, std::move(initial_centers));
}

double sum_of_squares(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignments,
                      const Eigen::MatrixXd& centers) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    sse += (points.col(i) - centers.col(static_cast<Eigen::Index>(assignments[static_cast<std::size_t>(i)]))).squaredNorm();
  }
  return sse;
}

double silhouette_score(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignments) {
  const Eigen::Index n = points.cols();
  if (n == 0) return 0.0;
  const std::size_t k = *std::max_element(assignments.begin(), assignments.end()) + 1;
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assignments) ++sizes[a];

  double total = 0.0;
  std::vector<double> sums(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t own = assignments[static_cast<std::size_t>(i)];
    if (sizes[own] <= 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) sums[assignments[static_cast<std::size_t>(j)]] += distance(points, i, j);
    }
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

namespace {

struct Selection {
  std::size_t k = 1;
  KMeansResult clustering;
};

Selection select_clustering(const Eigen::MatrixXd& points, const ClusteringOptions& options) {
  const auto n = static_cast<std::size_t>(points.cols());
  if (n == 0) throw Error(ErrorCode::TooFewPoints, "cannot cluster an empty point set");
  const std::size_t k_limit = std::max<std::size_t>(1, std::min(options.k_max, n));

  // Silhouette subsample (fixed across k so scores are comparable).
  std::vector<Eigen::Index> sample(n);
  std::iota(sample.begin(), sample.end(), Eigen::Index{0});
  if (n > options.silhouette_sample && options.silhouette_sample > 0) {
    std::mt19937_64 rng(options.seed ^ 0x5113u);
    std::shuffle(sample.begin(), sample.end(), rng);
    sample.resize(options.silhouette_sample);
    std::sort(sample.begin(), sample.end());
  }
  Eigen::MatrixXd sample_points(points.rows(), static_cast<Eigen::Index>(sample.size()));
  for (std::size_t i = 0; i < sample.size(); ++i) sample_points.col(static_cast<Eigen::Index>(i)) = points.col(sample[i]);

  Selection best;
  best.clustering = kmeans(points, 1, options.seed);
  double best_score = 0.0;
  for (std::size_t k = 2; k <= k_limit; ++k) {
    KMeansResult r = kmeans(points, k, options.seed);
    std::vector<std::size_t> sample_assign(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) sample_assign[i] = r.assignments[static_cast<std::size_t>(sample[i])];
    const double score = silhouette_score(sample_points, sample_assign);
    if (score > best_score) {
      best_score = score;
      best.k = k;
      best.clustering = std::move(r);
    }
  }
  return best;
}

}  // namespace

std::size_t choose_k(const Eigen::MatrixXd& points, const ClusteringOptions& options) {
  return select_clustering(points, options).k;
}

Eigen::VectorXd radius_floor_for(const Eigen::MatrixXd& points) {
  Eigen::VectorXd floor = Eigen::VectorXd::Constant(points.rows(), 1e-6);
  if (points.cols() == 0) return floor;
  const Eigen::VectorXd spread = points.rowwise().maxCoeff() - points.rowwise().minCoeff();
  return floor.cwiseMax(1e-6 * spread);
}

ClassClusterSet boxes_from_assignment(const Eigen::MatrixXd& points, ClassId label, const KMeansResult& clustering,
                                      const Eigen::VectorXd& radius_floor) {
  const Eigen::Index dim = points.rows();
  if (radius_floor.size() != dim) throw Error(ErrorCode::ShapeMismatch, "radius floor dimension mismatch");
  const auto k = static_cast<std::size_t>(clustering.centers.cols());
  ClassClusterSet set;
  set.label = label;
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = -lo;
    std::size_t members = 0;
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      if (clustering.assignments[static_cast<std::size_t>(i)] != c) continue;
      lo = lo.cwiseMin(points.col(i));
      hi = hi.cwiseMax(points.col(i));
      ++members;
    }
    if (members == 0) continue;
    Cluster cluster;
    cluster.center = (lo + hi) / 2.0;
    // Radius measured exactly as the distance function measures it, so every
    // member sits at normalized distance <= 1.
    cluster.radius = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      if (clustering.assignments[static_cast<std::size_t>(i)] != c) continue;
      cluster.radius = cluster.radius.cwiseMax((cluster.center - points.col(i)).cwiseAbs());
    }
    cluster.radius = cluster.radius.cwiseMax(radius_floor);
    cluster.centroid = clustering.centers.col(static_cast<Eigen::Index>(c));
    cluster.member_count = members;
    set.clusters.push_back(std::move(cluster));
  }
  return set;
}

ClassClusterSet build_class_clusters(const Eigen::MatrixXd& points, ClassId label, const ClusteringOptions& options,
                                     const Eigen::VectorXd& radius_floor) {
  const Selection s = select_clustering(points, options);
  return boxes_from_assignment(points, label, s.clustering, radius_floor);
}

ClassClusterSet refit_class_clusters(const Eigen::MatrixXd& points, const ClassClusterSet& previous,
                                     const Eigen::VectorXd& radius_floor) {
  if (points.cols() == 0) throw Error(ErrorCode::TooFewPoints, "cannot refit clusters on an empty point set");
  const auto k = static_cast<Eigen::Index>(std::min<std::size_t>(previous.clusters.size(), static_cast<std::size_t>(points.cols())));
  Eigen::MatrixXd init(points.rows(), k);
  for (Eigen::Index c = 0; c < k; ++c) init.col(c) = previous.clusters[static_cast<std::size_t>(c)].centroid;
  return boxes_from_assignment(points, previous.label, kmeans_from(points, std::move(init)), radius_floor);
}

}  // namespace activemon
