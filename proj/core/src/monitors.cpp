#include "activemon/monitors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "activemon/error.hpp"

namespace activemon {

namespace {

constexpr const char* kMonitorMagic = "activemon-monitor";
constexpr int kMonitorVersion = 1;

const ClassClusterSet& model_for(const QuantitativeMonitor& monitor, ClassId label) {
  auto it = monitor.class_models.find(label);
  if (it == monitor.class_models.end()) {
    throw Error(ErrorCode::UnknownClass, "class " + std::to_string(label) + " is not known to the monitor");
  }
  return it->second;
}

// Column by column through transform() so that boxes are built from exactly
// the values verdicts see at run time.
Eigen::MatrixXd project_all(const Projection& proj, const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out(proj.components.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.cols(); ++i) out.col(i) = transform(proj, features.col(i));
  return out;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::quantitative: return "quantitative";
    case Strategy::box: return "box";
    case Strategy::softmax: return "softmax";
    case Strategy::random: return "random";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "quantitative") return Strategy::quantitative;
  if (name == "box") return Strategy::box;
  if (name == "softmax") return Strategy::softmax;
  if (name == "random") return Strategy::random;
  throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

void MonitorStats::record(ClassId predicted, bool correct) {
  if (correct) {
    ++tp;
    ++tp_by_class[predicted];
  } else {
    ++fp;
    ++fp_by_class[predicted];
  }
}

std::optional<double> MonitorStats::precision() const {
  if (tp + fp == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

std::set<ClassId> QuantitativeMonitor::classes() const {
  std::set<ClassId> out;
  for (const auto& [c, m] : class_models) out.insert(c);
  return out;
}

bool QuantitativeMonitor::operator==(const QuantitativeMonitor& o) const {
  return projection == o.projection && class_models == o.class_models && thresholds == o.thresholds &&
         radius_floor == o.radius_floor;
}

QuantitativeMonitor build_quantitative_monitor(const FeaturesByClass& features, const MonitorOptions& options) {
  if (features.empty()) throw Error(ErrorCode::EmptyDataset, "no class valuations to build a monitor from");
  Eigen::Index dim = -1;
  Eigen::Index total = 0;
  for (const auto& [c, f] : features) {
    if (f.cols() == 0) throw Error(ErrorCode::EmptyDataset, "class " + std::to_string(c) + " has no valuations");
    if (dim >= 0 && f.rows() != dim) throw Error(ErrorCode::ShapeMismatch, "valuation dimensions differ");
    dim = f.rows();
    total += f.cols();
  }
  Eigen::MatrixXd all(dim, total);
  Eigen::Index at = 0;
  for (const auto& [c, f] : features) {
    all.middleCols(at, f.cols()) = f;
    at += f.cols();
  }

  QuantitativeMonitor monitor;
  monitor.options = options;
  monitor.projection = options.use_pca && total >= 2 ? fit_pca(all, options.variance_target)
                                                     : identity_projection(static_cast<std::size_t>(dim));
  monitor.radius_floor = radius_floor_for(project_all(monitor.projection, all));
  for (const auto& [c, f] : features) {
    monitor.class_models[c] =
        build_class_clusters(project_all(monitor.projection, f), c, options.clustering, monitor.radius_floor);
    monitor.thresholds[c] = 1.0;
  }
  return monitor;
}

double distance_to_cluster(const Eigen::VectorXd& projected, const Cluster& cluster) {
  if (projected.size() != cluster.center.size() || cluster.radius.size() != cluster.center.size()) {
    throw Error(ErrorCode::ShapeMismatch, "point has dimension " + std::to_string(projected.size()) +
                                              ", cluster has " + std::to_string(cluster.center.size()));
  }
  double d = 0.0;
  for (Eigen::Index i = 0; i < projected.size(); ++i) {
    d = std::max(d, std::abs(cluster.center(i) - projected(i)) / cluster.radius(i));
  }
  return d;
}

double distance_to_class(const Eigen::VectorXd& projected, ClassId label, const QuantitativeMonitor& monitor) {
  const auto& model = model_for(monitor, label);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cluster : model.clusters) best = std::min(best, distance_to_cluster(projected, cluster));
  return best;
}

Eigen::VectorXd project(const QuantitativeMonitor& monitor, const Eigen::VectorXd& features) {
  return transform(monitor.projection, features);
}

Verdict verdict_quantitative(const QuantitativeMonitor& monitor, const Eigen::VectorXd& features, ClassId predicted) {
  const double d = distance_to_class(project(monitor, features), predicted, monitor);
  return {d > monitor.thresholds.at(predicted), d};
}

Verdict verdict_box(const QuantitativeMonitor& monitor, const Eigen::VectorXd& features, ClassId predicted) {
  const double d = distance_to_class(project(monitor, features), predicted, monitor);
  return {d > 1.0, std::nullopt};
}

Verdict verdict_softmax(const Eigen::VectorXd& softmax, double threshold) {
  const double top = softmax.maxCoeff();
  return {top < threshold, top};
}

Verdict verdict_random(double rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng) < rate, std::nullopt};
}

double updated_threshold(double current, double observed, double n_star, std::size_t s_samples) {
  return current + (observed - current) * (n_star / static_cast<double>(s_samples));
}

QuantitativeMonitor adapt_threshold(const QuantitativeMonitor& monitor, ClassId label, double observed,
                                    std::size_t s_samples, double n_star) {
  model_for(monitor, label);
  const double current = monitor.thresholds.at(label);
  if (!(observed > current)) {
    throw Error(ErrorCode::NotAWarningCase, "observed distance " + std::to_string(observed) +
                                                " does not exceed threshold " + std::to_string(current));
  }
  if (s_samples == 0) throw Error(ErrorCode::NotAWarningCase, "no collected samples for class " + std::to_string(label));
  QuantitativeMonitor out = monitor;
  out.thresholds[label] = updated_threshold(current, observed, n_star, s_samples);
  return out;
}

QuantitativeMonitor adapt_centers(const QuantitativeMonitor& monitor, ClassId label,
                                  const Eigen::MatrixXd& class_features) {
  const auto& model = model_for(monitor, label);
  if (class_features.cols() == 0) throw Error(ErrorCode::EmptyDataset, "no data for class " + std::to_string(label));
  QuantitativeMonitor out = monitor;
  out.class_models[label] =
      refit_class_clusters(project_all(monitor.projection, class_features), model, monitor.radius_floor);
  return out;
}

QuantitativeMonitor extend_monitor(const QuantitativeMonitor& monitor, const FeaturesByClass& features,
                                   const std::set<ClassId>& added) {
  for (ClassId c : added) {
    if (monitor.knows(c)) throw Error(ErrorCode::ClassAlreadyKnown, "class " + std::to_string(c) + " is already known");
    if (!features.count(c)) throw Error(ErrorCode::EmptyDataset, "no valuations for new class " + std::to_string(c));
  }
  for (const auto& [c, m] : monitor.class_models) {
    if (!features.count(c)) throw Error(ErrorCode::EmptyDataset, "no valuations for known class " + std::to_string(c));
  }
  QuantitativeMonitor out = build_quantitative_monitor(features, monitor.options);
  for (const auto& [c, t] : monitor.thresholds) out.thresholds[c] = t;
  return out;
}

void write_monitor(textio::Writer& w, const QuantitativeMonitor& monitor) {
  w.integer(kMonitorMagic, kMonitorVersion);
  const auto& o = monitor.options;
  w.integer("use_pca", o.use_pca ? 1 : 0);
  w.real("variance_target", o.variance_target);
  w.unsigned_integer("k_max", o.clustering.k_max);
  w.unsigned_integer("cluster_seed", o.clustering.seed);
  w.unsigned_integer("silhouette_sample", o.clustering.silhouette_sample);
  write_projection(w, monitor.projection);
  w.vector("radius_floor", monitor.radius_floor);
  w.unsigned_integer("classes", monitor.class_models.size());
  for (const auto& [c, model] : monitor.class_models) {
    w.unsigned_integer("class", c);
    w.real("threshold", monitor.thresholds.at(c));
    w.unsigned_integer("clusters", model.clusters.size());
    for (const auto& cl : model.clusters) {
      w.unsigned_integer("members", cl.member_count);
      w.vector("center", cl.center);
      w.vector("radius", cl.radius);
      w.vector("centroid", cl.centroid);
    }
  }
  w.line("end-monitor", "");
}

QuantitativeMonitor read_monitor(textio::Reader& r) {
  const auto version = r.integer(kMonitorMagic);
  if (version != kMonitorVersion) throw Error(ErrorCode::VersionMismatch, "monitor format version " + std::to_string(version));
  QuantitativeMonitor m;
  m.options.use_pca = r.integer("use_pca") != 0;
  m.options.variance_target = r.real("variance_target");
  m.options.clustering.k_max = r.unsigned_integer("k_max");
  m.options.clustering.seed = r.unsigned_integer("cluster_seed");
  m.options.clustering.silhouette_sample = r.unsigned_integer("silhouette_sample");
  m.projection = read_projection(r);
  m.radius_floor = r.vector("radius_floor");
  const auto n_classes = r.unsigned_integer("classes");
  for (std::uint64_t i = 0; i < n_classes; ++i) {
    const auto c = static_cast<ClassId>(r.unsigned_integer("class"));
    m.thresholds[c] = r.real("threshold");
    ClassClusterSet set;
    set.label = c;
    const auto n_clusters = r.unsigned_integer("clusters");
    for (std::uint64_t j = 0; j < n_clusters; ++j) {
      Cluster cl;
      cl.member_count = r.unsigned_integer("members");
      cl.center = r.vector("center");
      cl.radius = r.vector("radius");
      cl.centroid = r.vector("centroid");
      if (cl.center.size() != m.projection.components.rows() || cl.radius.size() != cl.center.size()) {
        r.fail("cluster dimension disagrees with the projection");
      }
      set.clusters.push_back(std::move(cl));
    }
    m.class_models[c] = std::move(set);
  }
  r.expect("end-monitor");
  return m;
}

}  // namespace activemon
