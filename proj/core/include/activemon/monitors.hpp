#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string_view>

#include <Eigen/Dense>

#include "activemon/clustering.hpp"
#include "activemon/network.hpp"
#include "activemon/projection.hpp"
#include "activemon/textio.hpp"

namespace activemon {

enum class Strategy { quantitative, box, softmax, random };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct Verdict {
  bool warning = false;
  // d+ for the quantitative monitor, the top softmax score for the softmax
  // monitor; absent otherwise.
  std::optional<double> confidence;
};

struct MonitorStats {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::map<ClassId, std::size_t> tp_by_class;  // keyed by predicted class
  std::map<ClassId, std::size_t> fp_by_class;

  // correct == true when the authority label differs from the prediction.
  void record(ClassId predicted, bool correct);
  std::optional<double> precision() const;
  bool operator==(const MonitorStats&) const = default;
};

struct MonitorOptions {
  bool use_pca = true;
  double variance_target = 0.99;
  ClusteringOptions clustering;
};

// Cluster-box behavioural model with one distance threshold per class.
struct QuantitativeMonitor {
  Projection projection;
  std::map<ClassId, ClassClusterSet> class_models;
  std::map<ClassId, double> thresholds;
  Eigen::VectorXd radius_floor;
  MonitorOptions options;

  bool knows(ClassId c) const { return class_models.count(c) != 0; }
  std::set<ClassId> classes() const;
  bool operator==(const QuantitativeMonitor&) const;
};

// Feature-layer valuations grouped by class; each matrix is (feature_dim x n).
using FeaturesByClass = std::map<ClassId, Eigen::MatrixXd>;

// Joint projection over all classes, one cluster set per class, thresholds 1.
QuantitativeMonitor build_quantitative_monitor(const FeaturesByClass& features, const MonitorOptions& options);

// max_i |c_i - p_i| / r_i
double distance_to_cluster(const Eigen::VectorXd& projected, const Cluster& cluster);
// Minimum over the class's clusters; `projected` is already in monitor space.
double distance_to_class(const Eigen::VectorXd& projected, ClassId label, const QuantitativeMonitor& monitor);

Eigen::VectorXd project(const QuantitativeMonitor& monitor, const Eigen::VectorXd& features);

// Warning iff d+(p, y) > d*(y).
Verdict verdict_quantitative(const QuantitativeMonitor& monitor, const Eigen::VectorXd& features, ClassId predicted);
// Warning iff the point is outside every box of the class (d+ > 1).
Verdict verdict_box(const QuantitativeMonitor& monitor, const Eigen::VectorXd& features, ClassId predicted);
// Warning iff the top softmax score falls strictly below the threshold.
Verdict verdict_softmax(const Eigen::VectorXd& softmax, double threshold = 0.9);
Verdict verdict_random(double rate, std::mt19937_64& rng);

// d* + (d+ - d*) * n* / s_samples
double updated_threshold(double current, double observed, double n_star, std::size_t s_samples);

QuantitativeMonitor adapt_threshold(const QuantitativeMonitor& monitor, ClassId label, double observed,
                                    std::size_t s_samples, double n_star);

// Re-clusters `label` on its full current data (raw feature valuations),
// warm-started from the existing centroids. Projection and thresholds stay.
QuantitativeMonitor adapt_centers(const QuantitativeMonitor& monitor, ClassId label,
                                  const Eigen::MatrixXd& class_features);

// Rebuilds the monitor over `features` (old and new classes, valuations of
// the retrained network) with a re-fitted projection. Existing classes keep
// their thresholds; the classes in `added` start at 1.
QuantitativeMonitor extend_monitor(const QuantitativeMonitor& monitor, const FeaturesByClass& features,
                                   const std::set<ClassId>& added);

void write_monitor(textio::Writer& w, const QuantitativeMonitor& monitor);
QuantitativeMonitor read_monitor(textio::Reader& r);

}  // namespace activemon
