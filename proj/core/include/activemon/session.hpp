#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "activemon/framework.hpp"

namespace activemon {

inline constexpr int kSnapshotVersion = 1;

// Atomic (temp file + rename). Throws IoError, or MidAdaptation when the
// session is inside an adaptation stage; the session is never modified.
void save_snapshot(const Session& session, const std::filesystem::path& path);
// Throws IoError, VersionMismatch or CorruptSnapshot.
Session restore_snapshot(const std::filesystem::path& path);

void write_snapshot(std::ostream& out, const Session& session);
Session read_snapshot(std::istream& in);

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
void write_event_log(const std::vector<Event>& events, const std::filesystem::path& path);
std::vector<Event> read_event_log(const std::filesystem::path& path);

// One finished run as stored in a runs file.
struct RunRecord {
  std::string strategy;
  std::uint64_t seed = 0;
  std::optional<double> monitor_precision;
  std::size_t learned_classes = 0;
  double network_accuracy = 0.0;
  std::size_t queries_used = 0;
  std::size_t budget = 0;
};

RunRecord to_record(const RunSummary& s);

inline constexpr const char* kRunsHeader =
    "strategy,seed,monitor_precision,learned_classes,network_accuracy,queries_used,budget";
void write_runs_csv(const std::vector<RunRecord>& runs, const std::filesystem::path& path);
std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for one value
  std::size_t n = 0;
};
MeanStd mean_std(const std::vector<double>& values);

struct StrategySummary {
  std::string strategy;
  std::size_t runs = 0;
  MeanStd monitor_precision;  // over runs with a defined precision
  std::size_t max_learned_classes = 0;
  MeanStd network_accuracy;
};

// Grouped by strategy name, sorted by name.
std::vector<StrategySummary> summarize(const std::vector<RunRecord>& runs);
std::string format_summary_table(const std::vector<StrategySummary>& summary);
std::string format_summary_csv(const std::vector<StrategySummary>& summary);

}  // namespace activemon
