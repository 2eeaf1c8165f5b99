#include "activemon/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "activemon/error.hpp"
#include "activemon/textio.hpp"

namespace activemon {

namespace {

constexpr const char* kSnapshotMagic = "activemon-snapshot";

void write_counts(textio::Writer& w, std::string_view key, const std::map<ClassId, std::size_t>& m) {
  std::string v = std::to_string(m.size());
  for (const auto& [c, n] : m) v += " " + std::to_string(c) + " " + std::to_string(n);
  w.line(key, v);
}

std::map<ClassId, std::size_t> read_counts(textio::Reader& r, std::string_view key) {
  const auto t = r.expect(key);
  if (t.empty()) r.fail("missing count");
  const auto n = textio::parse_uint(t[0]);
  if (t.size() != 1 + 2 * n) r.fail("bad class count list");
  std::map<ClassId, std::size_t> m;
  for (std::uint64_t i = 0; i < n; ++i) {
    m[static_cast<ClassId>(textio::parse_uint(t[1 + 2 * i]))] = textio::parse_uint(t[2 + 2 * i]);
  }
  return m;
}

void write_optional(textio::Writer& w, std::string_view key, const std::optional<double>& v) {
  w.line(key, v ? textio::format_real(*v) : "none");
}

std::optional<double> read_optional(textio::Reader& r, std::string_view key) {
  const auto t = r.expect(key);
  if (t.size() != 1) r.fail("expected one value after " + std::string(key));
  if (t[0] == "none") return std::nullopt;
  return textio::parse_real(t[0]);
}

void write_monitor_stats(textio::Writer& w, std::string_view prefix, const MonitorStats& s) {
  const std::string p(prefix);
  w.unsigned_integer(p + "_tp", s.tp);
  w.unsigned_integer(p + "_fp", s.fp);
  write_counts(w, p + "_tp_by_class", s.tp_by_class);
  write_counts(w, p + "_fp_by_class", s.fp_by_class);
}

MonitorStats read_monitor_stats(textio::Reader& r, std::string_view prefix) {
  const std::string p(prefix);
  MonitorStats s;
  s.tp = r.unsigned_integer(p + "_tp");
  s.fp = r.unsigned_integer(p + "_fp");
  s.tp_by_class = read_counts(r, p + "_tp_by_class");
  s.fp_by_class = read_counts(r, p + "_fp_by_class");
  return s;
}

void write_samples(textio::Writer& w, std::string_view key, const std::vector<LabeledSample>& samples) {
  w.unsigned_integer(key, samples.size());
  for (const auto& s : samples) {
    w.line("sample", std::to_string(s.label) + " " + std::to_string(s.input.width) + " " +
                         std::to_string(s.input.height) + " " + std::to_string(s.input.channels));
    w.reals("pixels", s.input.pixels);
  }
}

std::vector<LabeledSample> read_samples(textio::Reader& r, std::string_view key) {
  const auto n = r.unsigned_integer(key);
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto t = r.expect("sample");
    if (t.size() != 4) r.fail("sample needs label width height channels");
    LabeledSample s;
    s.label = static_cast<ClassId>(textio::parse_uint(t[0]));
    s.input.width = static_cast<std::uint32_t>(textio::parse_uint(t[1]));
    s.input.height = static_cast<std::uint32_t>(textio::parse_uint(t[2]));
    s.input.channels = static_cast<std::uint32_t>(textio::parse_uint(t[3]));
    s.input.pixels = r.reals("pixels");
    out.push_back(std::move(s));
  }
  return out;
}

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(sep) : "") + v[i];
  return out;
}

Mode parse_mode(textio::Reader& r, const std::string& s) {
  if (s == "monitoring") return Mode::Monitoring;
  if (s == "adapting_monitor") return Mode::AdaptingMonitor;
  if (s == "adapting_model") return Mode::AdaptingModel;
  r.fail("unknown mode '" + s + "'");
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

void write_text_atomically(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::IoError, "write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot move snapshot into " + path.string());
  }
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

// ---- snapshots --------------------------------------------------------------

void write_snapshot(std::ostream& out, const Session& session) {
  const SessionState& st = session.state();
  if (st.mode != Mode::Monitoring) throw Error(ErrorCode::MidAdaptation, "cannot snapshot during an adaptation");
  textio::Writer w(out);
  w.integer(kSnapshotMagic, kSnapshotVersion);
  const auto& fields = config_fields();
  w.unsigned_integer("config", fields.size());
  for (const auto& f : fields) w.line("cfg", std::string(f.name) + " = " + f.get(session.config()));

  const auto& src = session.scenario().train_source;
  std::string refs = std::to_string(src.size());
  for (std::size_t i : src) refs += " " + std::to_string(i);
  w.line("train_source", refs);
  w.unsigned_integer("stream_hash", stream_hash(session.scenario().order));

  write_network(w, st.original_network);
  write_network(w, st.network);
  std::string classes = std::to_string(st.output_classes.size());
  for (ClassId c : st.output_classes) classes += " " + std::to_string(c);
  w.line("output_classes", classes);
  write_monitor(w, st.monitor);

  const Hyperparameters& hp = st.hp;
  w.real("tau_star", hp.tau_star);
  w.unsigned_integer("n_star", hp.n_star);
  w.real("kappa_star", hp.kappa_star);
  w.real("budget_fraction", hp.budget_fraction);
  w.unsigned_integer("budget", hp.budget);
  w.unsigned_integer("batch_size", hp.batch_size);
  w.real("n_star_fraction", hp.n_star_fraction);

  const RunStats& s = st.stats;
  write_optional(w, "s_network", s.s_network);
  write_counts(w, "s_samples", s.s_samples);
  write_monitor_stats(w, "total", s.total);
  write_monitor_stats(w, "window", s.window);
  w.unsigned_integer("queries_used", s.queries_used);
  w.unsigned_integer("stats_budget", s.budget);
  w.unsigned_integer("warnings", s.warnings);
  w.unsigned_integer("unlabeled_warnings", s.unlabeled_warnings);
  w.unsigned_integer("timeouts", s.timeouts);

  w.unsigned_integer("cursor", st.cursor);
  w.unsigned_integer("batch_index", st.batch_index);
  w.unsigned_integer("next_query_id", st.next_query_id);
  w.unsigned_integer("monitor_adaptations", st.monitor_adaptations);
  w.unsigned_integer("model_adaptations", st.model_adaptations);
  std::ostringstream rng;
  rng << st.rng;
  w.line("rng", rng.str());
  w.line("mode", to_string(st.mode));

  write_samples(w, "collected", st.collected);
  write_samples(w, "eval_pool", st.eval_pool);
  w.unsigned_integer("events", st.events.size());
  for (const auto& e : st.events) w.line("event", e.to_line());
  w.unsigned_integer("metrics", st.metrics.size());
  for (const auto& m : st.metrics) w.line("row", m.to_csv());
  w.line("batch_events", join(st.batch_events, "|"));
  w.line("end-snapshot", "");
}

Session read_snapshot(std::istream& in) {
  textio::Reader r(in);
  const auto version = r.integer(kSnapshotMagic);
  if (version != kSnapshotVersion) {
    throw Error(ErrorCode::VersionMismatch, "snapshot version " + std::to_string(version) + ", expected " +
                                                std::to_string(kSnapshotVersion));
  }
  RunConfig config;
  const auto n_cfg = r.unsigned_integer("config");
  for (std::uint64_t i = 0; i < n_cfg; ++i) {
    const std::string kv = r.rest_of("cfg");
    const auto eq = kv.find(" = ");
    if (eq == std::string::npos) r.fail("config line without ' = '");
    try {
      config.set(kv.substr(0, eq), kv.substr(eq + 3));
    } catch (const Error& e) {
      r.fail(e.what());
    }
  }
  const auto refs = r.expect("train_source");
  if (refs.empty() || refs.size() != 1 + textio::parse_uint(refs[0])) r.fail("bad train_source");
  const auto hash = r.unsigned_integer("stream_hash");

  auto scenario = std::make_shared<const Scenario>(prepare_scenario(config));
  if (scenario->train_source.size() + 1 != refs.size()) r.fail("train_source does not match the regenerated data");
  for (std::size_t i = 0; i < scenario->train_source.size(); ++i) {
    if (scenario->train_source[i] != textio::parse_uint(refs[i + 1])) {
      r.fail("train_source does not match the regenerated data");
    }
  }
  if (stream_hash(scenario->order) != hash) r.fail("stream order does not match the regenerated data");

  SessionState st;
  st.original_network = read_network(r);
  st.network = read_network(r);
  const auto oc = r.expect("output_classes");
  if (oc.empty() || oc.size() != 1 + textio::parse_uint(oc[0])) r.fail("bad output_classes");
  for (std::size_t i = 1; i < oc.size(); ++i) st.output_classes.push_back(static_cast<ClassId>(textio::parse_uint(oc[i])));
  if (st.output_classes.size() != st.network.arch().num_classes) r.fail("output_classes disagree with the network");
  st.monitor = read_monitor(r);

  st.hp.tau_star = r.real("tau_star");
  st.hp.n_star = r.unsigned_integer("n_star");
  st.hp.kappa_star = r.real("kappa_star");
  st.hp.budget_fraction = r.real("budget_fraction");
  st.hp.budget = r.unsigned_integer("budget");
  st.hp.batch_size = r.unsigned_integer("batch_size");
  st.hp.n_star_fraction = r.real("n_star_fraction");

  RunStats& s = st.stats;
  s.s_network = read_optional(r, "s_network");
  s.s_samples = read_counts(r, "s_samples");
  s.total = read_monitor_stats(r, "total");
  s.window = read_monitor_stats(r, "window");
  s.queries_used = r.unsigned_integer("queries_used");
  s.budget = r.unsigned_integer("stats_budget");
  s.warnings = r.unsigned_integer("warnings");
  s.unlabeled_warnings = r.unsigned_integer("unlabeled_warnings");
  s.timeouts = r.unsigned_integer("timeouts");

  st.cursor = r.unsigned_integer("cursor");
  if (st.cursor > scenario->order.size()) r.fail("cursor beyond the stream");
  st.batch_index = r.unsigned_integer("batch_index");
  st.next_query_id = r.unsigned_integer("next_query_id");
  st.monitor_adaptations = r.unsigned_integer("monitor_adaptations");
  st.model_adaptations = r.unsigned_integer("model_adaptations");
  {
    std::istringstream rng(r.rest_of("rng"));
    rng >> st.rng;
    if (!rng) r.fail("bad generator state");
  }
  st.mode = parse_mode(r, r.rest_of("mode"));

  st.collected = read_samples(r, "collected");
  st.eval_pool = read_samples(r, "eval_pool");
  try {
    const auto n_events = r.unsigned_integer("events");
    for (std::uint64_t i = 0; i < n_events; ++i) st.events.push_back(Event::parse(r.rest_of("event")));
    const auto n_rows = r.unsigned_integer("metrics");
    for (std::uint64_t i = 0; i < n_rows; ++i) st.metrics.push_back(MetricsRow::parse(r.rest_of("row")));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptSnapshot) throw;
    r.fail(e.what());
  }
  const std::string be = r.rest_of("batch_events");
  std::size_t start = 0;
  while (!be.empty() && start <= be.size()) {
    const auto bar = be.find('|', start);
    st.batch_events.push_back(be.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  r.expect("end-snapshot");
  return Session(std::move(config), std::move(scenario), std::move(st));
}

void save_snapshot(const Session& session, const std::filesystem::path& path) {
  std::ostringstream out;
  write_snapshot(out, session);
  write_text_atomically(path, out.str());
}

Session restore_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open snapshot " + path.string());
  return read_snapshot(in);
}

// ---- logs -------------------------------------------------------------------

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::string text = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) text += r.to_csv() + "\n";
  write_text_atomically(path, text);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kMetricsHeader) {
    throw Error(ErrorCode::ParseError, path.string() + ": missing metrics header");
  }
  std::vector<MetricsRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) rows.push_back(MetricsRow::parse(lines[i]));
  return rows;
}

void write_event_log(const std::vector<Event>& events, const std::filesystem::path& path) {
  std::string text = std::string(kEventsHeader) + "\n";
  for (const auto& e : events) text += e.to_line() + "\n";
  write_text_atomically(path, text);
}

std::vector<Event> read_event_log(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kEventsHeader) {
    throw Error(ErrorCode::ParseError, path.string() + ": missing event log header");
  }
  std::vector<Event> events;
  for (std::size_t i = 1; i < lines.size(); ++i) events.push_back(Event::parse(lines[i]));
  return events;
}

// ---- summaries --------------------------------------------------------------

RunRecord to_record(const RunSummary& s) {
  return {std::string(to_string(s.strategy)), s.seed, s.monitor_precision, s.learned_classes,
          s.network_accuracy, s.queries_used, s.budget};
}

void write_runs_csv(const std::vector<RunRecord>& runs, const std::filesystem::path& path) {
  std::string text = std::string(kRunsHeader) + "\n";
  for (const auto& r : runs) {
    text += r.strategy + "," + std::to_string(r.seed) + "," +
            (r.monitor_precision ? textio::format_real(*r.monitor_precision) : "") + "," +
            std::to_string(r.learned_classes) + "," + textio::format_real(r.network_accuracy) + "," +
            std::to_string(r.queries_used) + "," + std::to_string(r.budget) + "\n";
  }
  write_text_atomically(path, text);
}

std::vector<RunRecord> read_runs_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kRunsHeader) {
    throw Error(ErrorCode::ParseError, path.string() + ": missing runs header");
  }
  std::vector<RunRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> f;
    std::stringstream ss(lines[i]);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (lines[i].back() == ',') f.emplace_back();
    if (f.size() != 7) throw Error(ErrorCode::ParseError, path.string() + ": row " + std::to_string(i) + " needs 7 fields");
    try {
      RunRecord r;
      r.strategy = f[0];
      r.seed = textio::parse_uint(f[1]);
      if (!f[2].empty()) r.monitor_precision = textio::parse_real(f[2]);
      r.learned_classes = textio::parse_uint(f[3]);
      r.network_accuracy = textio::parse_real(f[4]);
      r.queries_used = textio::parse_uint(f[5]);
      r.budget = textio::parse_uint(f[6]);
      out.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, path.string() + ": row " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  m.n = values.size();
  if (values.empty()) return m;
  // Sorted summation keeps the result independent of run order.
  std::vector<double> v = values;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

std::vector<StrategySummary> summarize(const std::vector<RunRecord>& runs) {
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : runs) groups[r.strategy].push_back(&r);
  std::vector<StrategySummary> out;
  for (const auto& [name, rs] : groups) {
    StrategySummary s;
    s.strategy = name;
    s.runs = rs.size();
    std::vector<double> precision, accuracy;
    for (const auto* r : rs) {
      if (r->monitor_precision) precision.push_back(*r->monitor_precision);
      accuracy.push_back(r->network_accuracy);
      s.max_learned_classes = std::max(s.max_learned_classes, r->learned_classes);
    }
    s.monitor_precision = mean_std(precision);
    s.network_accuracy = mean_std(accuracy);
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_summary_table(const std::vector<StrategySummary>& summary) {
  std::string out = "# mean +- sample standard deviation (n-1) over runs; learned = highest count\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %5s %22s %8s %22s\n", "strategy", "runs", "monitor precision", "learned",
                "network accuracy");
  out += buf;
  for (const auto& s : summary) {
    const std::string prec = s.monitor_precision.n == 0 ? "-"
                                                        : fixed(s.monitor_precision.mean, 4) + " +- " +
                                                              fixed(s.monitor_precision.stddev, 4);
    const std::string acc = fixed(s.network_accuracy.mean, 4) + " +- " + fixed(s.network_accuracy.stddev, 4);
    std::snprintf(buf, sizeof buf, "%-14s %5zu %22s %8zu %22s\n", s.strategy.c_str(), s.runs, prec.c_str(),
                  s.max_learned_classes, acc.c_str());
    out += buf;
  }
  return out;
}

std::string format_summary_csv(const std::vector<StrategySummary>& summary) {
  std::string out =
      "strategy,runs,precision_mean,precision_std,learned_classes_max,accuracy_mean,accuracy_std\n";
  for (const auto& s : summary) {
    out += s.strategy + "," + std::to_string(s.runs) + "," +
           (s.monitor_precision.n ? fixed(s.monitor_precision.mean, 6) : "") + "," +
           (s.monitor_precision.n ? fixed(s.monitor_precision.stddev, 6) : "") + "," +
           std::to_string(s.max_learned_classes) + "," + fixed(s.network_accuracy.mean, 6) + "," +
           fixed(s.network_accuracy.stddev, 6) + "\n";
  }
  return out;
}

}  // namespace activemon
