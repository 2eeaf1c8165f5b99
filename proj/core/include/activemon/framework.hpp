#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "activemon/config.hpp"
#include "activemon/data.hpp"
#include "activemon/monitors.hpp"
#include "activemon/network.hpp"
#include "activemon/scenario.hpp"

namespace activemon {

struct Hyperparameters {
  double tau_star = 0.0;
  std::size_t n_star = 1;
  double kappa_star = 0.9;
  double budget_fraction = 0.05;
  std::size_t budget = 0;
  std::size_t batch_size = 128;
  double n_star_fraction = 0.05;

  bool operator==(const Hyperparameters&) const = default;
};

// n* = round(fraction * |X| / |Y|) (at least 1), tau* = tau_factor * the
// original model's held-out accuracy, budget = ceil(p * |stream|).
Hyperparameters derive_hyperparameters(const RunConfig& config, std::size_t train_size, std::size_t known_count,
                                       double original_accuracy, std::size_t stream_size);

struct RunStats {
  std::optional<double> s_network;
  std::map<ClassId, std::size_t> s_samples;  // authority labels per class (original ids)
  MonitorStats total;   // whole run
  MonitorStats window;  // since the last adaptation; s_monitor
  std::size_t queries_used = 0;
  std::size_t budget = 0;
  std::size_t warnings = 0;
  std::size_t unlabeled_warnings = 0;
  std::size_t timeouts = 0;

  std::optional<double> s_monitor() const { return window.precision(); }
  bool operator==(const RunStats&) const = default;
};

enum class Decision { Continue, AdaptMonitor, AdaptModel };
enum class Mode { Monitoring, AdaptingMonitor, AdaptingModel };

std::string_view to_string(Decision d);
std::string_view to_string(Mode m);

// Classes outside `known` whose authority sample count reached n*.
std::set<ClassId> classes_ready(const RunStats& stats, std::size_t n_star, const std::set<ClassId>& known);

Decision evaluate(const RunStats& stats, const Hyperparameters& hp, const std::set<ClassId>& known,
                  bool last_answer_fp);

struct Event {
  std::uint64_t seq = 0;
  std::uint64_t timestamp = 0;  // stream position of the input being processed
  std::string kind;
  std::vector<std::pair<std::string, std::string>> payload;

  std::string field(std::string_view key) const;  // empty when absent
  std::string to_line() const;  // seq,timestamp,kind,k=v;k=v
  static Event parse(std::string_view line);
  bool operator==(const Event&) const = default;
};

struct MetricsRow {
  std::size_t batch_index = 0;
  std::size_t inputs_seen = 0;
  std::size_t queries_used = 0;
  std::size_t known_classes = 0;
  std::optional<double> monitor_precision;  // cumulative
  std::optional<double> network_precision;  // s_network
  std::string event;                         // adaptation kinds in the batch, '|'-joined

  std::string to_csv() const;
  static MetricsRow parse(std::string_view line);
  bool operator==(const MetricsRow&) const = default;
};

inline constexpr const char* kMetricsHeader =
    "batch_index,inputs_seen,queries_used,known_classes,monitor_precision,network_precision,event";
inline constexpr const char* kEventsHeader = "seq,timestamp,kind,payload";

struct AuthorityQuery {
  std::uint64_t id = 0;
  std::size_t stream_index = 0;
  const InputSample* input = nullptr;
  ClassId predicted = 0;  // original class id
  std::optional<double> confidence;
};

class Authority {
 public:
  virtual ~Authority() = default;
  // The true class in the original vocabulary, or nullopt on timeout.
  virtual std::optional<ClassId> ask(const AuthorityQuery& query) = 0;
};

// Answers from the ground-truth labels of the stream.
class OracleAuthority : public Authority {
 public:
  explicit OracleAuthority(const Dataset& stream) : stream_(stream) {}
  std::optional<ClassId> ask(const AuthorityQuery& query) override {
    return stream_.samples.at(query.stream_index).label;
  }

 private:
  const Dataset& stream_;
};

// Mutable state of a run; everything here goes into snapshots.
struct SessionState {
  Network original_network;
  Network network;
  std::vector<ClassId> output_classes;  // network output index -> original class id
  QuantitativeMonitor monitor;
  std::vector<LabeledSample> collected;  // authority-labeled samples in X, original labels
  std::vector<LabeledSample> eval_pool;  // held out for s_network
  Hyperparameters hp;
  RunStats stats;
  std::size_t cursor = 0;
  std::size_t batch_index = 0;
  std::uint64_t next_query_id = 1;
  std::size_t monitor_adaptations = 0;
  std::size_t model_adaptations = 0;
  std::mt19937_64 rng;
  Mode mode = Mode::Monitoring;
  std::vector<Event> events;
  std::vector<MetricsRow> metrics;
  std::vector<std::string> batch_events;  // adaptation kinds since the last metrics row
};

struct StepResult {
  std::size_t stream_index = 0;
  ClassId predicted = 0;  // original id, emitted to the caller
  Verdict verdict;
  std::optional<ClassId> answer;
  Decision decision = Decision::Continue;
};

class Session {
 public:
  // Trains the original network from the scenario (or loads config.network_path).
  static Session create(const RunConfig& config);
  static Session create(const RunConfig& config, std::shared_ptr<const Scenario> scenario);
  // Starts from an already trained original network (shared across strategies).
  Session(RunConfig config, std::shared_ptr<const Scenario> scenario, Network original);
  // Reassembles a session from restored state.
  Session(RunConfig config, std::shared_ptr<const Scenario> scenario, SessionState state);

  StepResult step(Authority& authority);
  // Steps to the end of the current batch and appends its metrics row.
  MetricsRow run_batch(Authority& authority);
  // True once the inputs of the open batch are all processed.
  bool batch_complete() const;
  MetricsRow close_batch();
  void run(Authority& authority, const std::function<void(const MetricsRow&)>& on_row = {});

  bool finished() const { return state_.cursor >= scenario_->order.size(); }
  std::size_t stream_size() const { return scenario_->order.size(); }

  void log_control(const std::string& action);

  const RunConfig& config() const { return config_; }
  const Scenario& scenario() const { return *scenario_; }
  std::shared_ptr<const Scenario> scenario_ptr() const { return scenario_; }
  const SessionState& state() const { return state_; }
  std::set<ClassId> known_classes() const;

  // Accuracy of the current network on the whole stream (original labels).
  double stream_accuracy() const;

 private:
  void log(std::string kind, std::vector<std::pair<std::string, std::string>> payload);
  void adapt_monitor_stage(ClassId label, double distance);
  void adapt_model_stage();
  void refresh_s_network();

  RunConfig config_;
  std::shared_ptr<const Scenario> scenario_;
  SessionState state_;
};

// The classes' valuation matrices of every sample in `samples` (original
// labels) that `net` classifies correctly. Classes without a single correct
// sample fall back to all of their samples.
FeaturesByClass member_features(const Network& net, const std::vector<ClassId>& output_classes,
                                const std::vector<const LabeledSample*>& samples);

// Every class cycled up to the size of the largest one, used for run-time
// retraining where novel classes have only n* samples.
Dataset balance_classes(const Dataset& d);

MonitorOptions monitor_options(const RunConfig& config);
TrainConfig initial_train_config(const RunConfig& config);
NetworkArch initial_arch(const RunConfig& config, const Scenario& scenario);
Network train_original(const RunConfig& config, const Scenario& scenario);

struct RunSummary {
  Strategy strategy = Strategy::quantitative;
  std::uint64_t seed = 0;
  std::optional<double> monitor_precision;
  std::size_t learned_classes = 0;  // classes added at run time
  double network_accuracy = 0.0;    // final network on the stream
  std::size_t queries_used = 0;
  std::size_t budget = 0;
};

RunSummary summarize_session(const Session& s);

struct StrategyRun {
  Strategy strategy = Strategy::quantitative;
  std::vector<MetricsRow> metrics;
  std::vector<Event> events;
  RunSummary summary;
  std::uint64_t stream_hash = 0;
};

// Every strategy in config.strategies on one scenario and one trained network.
std::vector<StrategyRun> compare_strategies(const RunConfig& config);

}  // namespace activemon
