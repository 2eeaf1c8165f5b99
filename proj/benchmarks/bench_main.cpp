#include <random>

#include <benchmark/benchmark.h>

#include "activemon/clustering.hpp"
#include "activemon/framework.hpp"
#include "activemon/monitors.hpp"
#include "activemon/network.hpp"

using namespace activemon;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

void BM_DistanceToCluster(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  Cluster c;
  c.center = Eigen::VectorXd::Zero(d);
  c.radius = Eigen::VectorXd::Ones(d);
  c.centroid = c.center;
  const Eigen::VectorXd p = random_matrix(d, 1, 1).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(distance_to_cluster(p, c));
}
BENCHMARK(BM_DistanceToCluster)->Arg(2)->Arg(40)->Arg(128);

QuantitativeMonitor bench_monitor(Eigen::Index dim) {
  FeaturesByClass f;
  for (ClassId c = 0; c < 5; ++c) f[c] = random_matrix(dim, 300, c).array() + static_cast<double>(c) * 3.0;
  return build_quantitative_monitor(f, MonitorOptions{});
}

void BM_VerdictQuantitative(benchmark::State& state) {
  const auto dim = static_cast<Eigen::Index>(state.range(0));
  const QuantitativeMonitor m = bench_monitor(dim);
  const Eigen::VectorXd x = random_matrix(dim, 1, 99).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(verdict_quantitative(m, x, 2).warning);
}
BENCHMARK(BM_VerdictQuantitative)->Arg(16)->Arg(40);

void BM_KMeans(benchmark::State& state) {
  const Eigen::MatrixXd pts = random_matrix(10, state.range(0), 5);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(pts, 4, 1).sse);
}
BENCHMARK(BM_KMeans)->Arg(200)->Arg(2000);

void BM_BuildMonitor(benchmark::State& state) {
  FeaturesByClass f;
  for (ClassId c = 0; c < 5; ++c) f[c] = random_matrix(40, state.range(0), c).array() + static_cast<double>(c);
  for (auto _ : state) benchmark::DoNotOptimize(build_quantitative_monitor(f, MonitorOptions{}).thresholds.size());
}
BENCHMARK(BM_BuildMonitor)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_Classify(benchmark::State& state) {
  const Network net = Network::initialize(NetworkArch{784, {128, 40}, 1, 10}, 1);
  std::vector<double> x(784, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(net.classify(x).label);
}
BENCHMARK(BM_Classify);

}  // namespace

BENCHMARK_MAIN();
