#include "activemon/framework.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "activemon/error.hpp"
#include "activemon/textio.hpp"

namespace activemon {

namespace {

constexpr std::uint64_t kRandomMonitorSalt = 0x6A09E667F3BCC908ULL;
constexpr std::uint64_t kRetrainSeedStride = 1000003ULL;

std::string num(double v) { return textio::format_real(v); }
std::string num(std::size_t v) { return std::to_string(v); }

std::string join_classes(const std::vector<ClassId>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "/" : "") + std::to_string(v[i]);
  return out;
}

std::string optional_real(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string fixed6(const std::optional<double>& v) {
  if (!v) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

using LabeledRef = std::pair<const InputSample*, ClassId>;

}  // namespace

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Continue: return "continue";
    case Decision::AdaptMonitor: return "adapt_monitor";
    case Decision::AdaptModel: return "adapt_model";
  }
  return "unknown";
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Monitoring: return "monitoring";
    case Mode::AdaptingMonitor: return "adapting_monitor";
    case Mode::AdaptingModel: return "adapting_model";
  }
  return "unknown";
}

Hyperparameters derive_hyperparameters(const RunConfig& config, std::size_t train_size, std::size_t known_count,
                                       double original_accuracy, std::size_t stream_size) {
  if (known_count == 0) throw Error(ErrorCode::EmptyKnownSet, "no known classes");
  Hyperparameters hp;
  hp.n_star_fraction = config.n_star_fraction;
  const double per_class = static_cast<double>(train_size) / static_cast<double>(known_count);
  hp.n_star = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.n_star_fraction * per_class)));
  hp.tau_star = config.tau_factor * original_accuracy;
  hp.kappa_star = config.kappa_star;
  hp.budget_fraction = config.p;
  // The epsilon keeps decimal fractions such as 0.05 * 1200 from rounding up.
  hp.budget = static_cast<std::size_t>(std::ceil(config.p * static_cast<double>(stream_size) - 1e-9));
  hp.batch_size = config.batch_size;
  return hp;
}

std::set<ClassId> classes_ready(const RunStats& stats, std::size_t n_star, const std::set<ClassId>& known) {
  std::set<ClassId> out;
  for (const auto& [c, n] : stats.s_samples) {
    if (!known.count(c) && n >= n_star) out.insert(c);
  }
  return out;
}

Decision evaluate(const RunStats& stats, const Hyperparameters& hp, const std::set<ClassId>& known,
                  bool last_answer_fp) {
  if (!classes_ready(stats, hp.n_star, known).empty()) return Decision::AdaptModel;
  if (stats.s_network && *stats.s_network < hp.tau_star) return Decision::AdaptModel;
  const auto s_monitor = stats.s_monitor();
  if (last_answer_fp && s_monitor && *s_monitor < hp.kappa_star) return Decision::AdaptMonitor;
  return Decision::Continue;
}

// ---- events / metrics -------------------------------------------------------

std::string Event::field(std::string_view key) const {
  for (const auto& [k, v] : payload) {
    if (k == key) return v;
  }
  return {};
}

std::string Event::to_line() const {
  std::string out = std::to_string(seq) + "," + std::to_string(timestamp) + "," + kind + ",";
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (i) out += ';';
    out += payload[i].first + "=" + payload[i].second;
  }
  return out;
}

Event Event::parse(std::string_view line) {
  const auto parts = split(line, ',');
  if (parts.size() != 4) throw Error(ErrorCode::ParseError, "event line needs 4 fields: " + std::string(line));
  Event e;
  e.seq = textio::parse_uint(parts[0]);
  e.timestamp = textio::parse_uint(parts[1]);
  e.kind = std::string(parts[2]);
  if (!parts[3].empty()) {
    for (auto kv : split(parts[3], ';')) {
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) throw Error(ErrorCode::ParseError, "payload entry without '=': " + std::string(kv));
      e.payload.emplace_back(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
  }
  return e;
}

std::string MetricsRow::to_csv() const {
  return std::to_string(batch_index) + "," + std::to_string(inputs_seen) + "," + std::to_string(queries_used) + "," +
         std::to_string(known_classes) + "," + fixed6(monitor_precision) + "," + fixed6(network_precision) + "," +
         event;
}

MetricsRow MetricsRow::parse(std::string_view line) {
  const auto parts = split(line, ',');
  if (parts.size() != 7) throw Error(ErrorCode::ParseError, "metrics row needs 7 fields: " + std::string(line));
  MetricsRow r;
  r.batch_index = textio::parse_uint(parts[0]);
  r.inputs_seen = textio::parse_uint(parts[1]);
  r.queries_used = textio::parse_uint(parts[2]);
  r.known_classes = textio::parse_uint(parts[3]);
  if (!parts[4].empty()) r.monitor_precision = textio::parse_real(parts[4]);
  if (!parts[5].empty()) r.network_precision = textio::parse_real(parts[5]);
  r.event = std::string(parts[6]);
  return r;
}

// ---- construction -----------------------------------------------------------

MonitorOptions monitor_options(const RunConfig& config) {
  MonitorOptions o;
  o.use_pca = config.use_pca;
  o.variance_target = config.variance_target;
  o.clustering.k_max = config.k_max;
  o.clustering.seed = config.seed;
  o.clustering.silhouette_sample = config.silhouette_sample;
  return o;
}

TrainConfig initial_train_config(const RunConfig& config) {
  return {config.epochs_init, config.train_batch, config.learning_rate, config.seed};
}

NetworkArch initial_arch(const RunConfig& config, const Scenario& scenario) {
  return {scenario.train.input_dim(), config.hidden, config.feature_layer, scenario.initial_classes.size()};
}

Network train_original(const RunConfig& config, const Scenario& scenario) {
  const NetworkArch arch = initial_arch(config, scenario);
  if (!config.network_path.empty()) {
    std::ifstream in(config.network_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open network " + config.network_path);
    Network net = load_network(in);
    if (net.arch() != arch) {
      throw Error(ErrorCode::InvalidConfig, "network " + config.network_path + " does not match the configured architecture");
    }
    return net;
  }
  return train(arch, scenario.train, initial_train_config(config)).network;
}

FeaturesByClass member_features(const Network& net, const std::vector<ClassId>& output_classes,
                                const std::vector<LabeledRef>& samples) {
  std::map<ClassId, std::vector<Eigen::VectorXd>> correct, all;
  std::set<ClassId> outputs(output_classes.begin(), output_classes.end());
  for (const auto& [input, label] : samples) {
    if (!outputs.count(label)) continue;
    Prediction p = net.classify(*input);
    if (output_classes[p.label] == label) correct[label].push_back(p.features);
    all[label].push_back(std::move(p.features));
  }
  FeaturesByClass out;
  for (const auto& [c, vs] : all) {
    const auto& use = correct.count(c) ? correct.at(c) : vs;
    Eigen::MatrixXd m(use.front().size(), static_cast<Eigen::Index>(use.size()));
    for (std::size_t i = 0; i < use.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = use[i];
    out.emplace(c, std::move(m));
  }
  return out;
}

FeaturesByClass member_features(const Network& net, const std::vector<ClassId>& output_classes,
                                const std::vector<const LabeledSample*>& samples) {
  std::vector<LabeledRef> refs;
  refs.reserve(samples.size());
  for (const auto* s : samples) refs.emplace_back(&s->input, s->label);
  return member_features(net, output_classes, refs);
}

namespace {

// All of X: the initial training set (relabelled to original ids) and the
// collected run-time samples, optionally restricted to one class.
std::vector<LabeledRef> x_samples(const Scenario& sc, const SessionState& st, std::optional<ClassId> only = {}) {
  std::vector<LabeledRef> out;
  for (const auto& s : sc.train.samples) {
    const ClassId y = sc.initial_classes[s.label];
    if (!only || *only == y) out.emplace_back(&s.input, y);
  }
  for (const auto& s : st.collected) {
    if (!only || *only == s.label) out.emplace_back(&s.input, s.label);
  }
  return out;
}

}  // namespace

Dataset balance_classes(const Dataset& d) {
  std::vector<std::vector<std::size_t>> by_class(d.num_classes());
  for (std::size_t i = 0; i < d.size(); ++i) by_class.at(d.samples[i].label).push_back(i);
  std::size_t largest = 0;
  for (const auto& v : by_class) largest = std::max(largest, v.size());
  Dataset out;
  out.class_names = d.class_names;
  out.samples.reserve(largest * by_class.size());
  for (const auto& v : by_class) {
    for (std::size_t j = 0; j < largest && !v.empty(); ++j) out.samples.push_back(d.samples[v[j % v.size()]]);
  }
  return out;
}

Session Session::create(const RunConfig& config) {
  return create(config, std::make_shared<const Scenario>(prepare_scenario(config)));
}

Session Session::create(const RunConfig& config, std::shared_ptr<const Scenario> scenario) {
  Network original = train_original(config, *scenario);
  return Session(config, std::move(scenario), std::move(original));
}

Session::Session(RunConfig config, std::shared_ptr<const Scenario> scenario, Network original)
    : config_(std::move(config)), scenario_(std::move(scenario)) {
  config_.validate();
  const Scenario& sc = *scenario_;
  if (original.arch().num_classes != sc.initial_classes.size()) {
    throw Error(ErrorCode::ShapeMismatch, "network has " + std::to_string(original.arch().num_classes) +
                                              " outputs for " + std::to_string(sc.initial_classes.size()) + " classes");
  }
  state_.original_network = original;
  state_.network = std::move(original);
  state_.output_classes = sc.initial_classes;
  const double accuracy =
      sc.test.empty() ? test_accuracy(state_.network, sc.train) : test_accuracy(state_.network, sc.test);
  state_.hp = derive_hyperparameters(config_, sc.train.size(), sc.initial_classes.size(), accuracy, sc.order.size());
  state_.stats.budget = state_.hp.budget;
  state_.rng.seed(config_.seed ^ kRandomMonitorSalt);
  state_.monitor = build_quantitative_monitor(
      member_features(state_.network, state_.output_classes, x_samples(sc, state_)), monitor_options(config_));
  log("session_start", {{"strategy", std::string(to_string(config_.strategy))},
                        {"seed", std::to_string(config_.seed)},
                        {"stream", num(sc.order.size())},
                        {"stream_hash", std::to_string(stream_hash(sc.order))},
                        {"budget", num(state_.hp.budget)},
                        {"n_star", num(state_.hp.n_star)},
                        {"tau_star", num(state_.hp.tau_star)},
                        {"kappa_star", num(state_.hp.kappa_star)},
                        {"original_accuracy", num(accuracy)},
                        {"classes", join_classes(state_.output_classes)}});
}

Session::Session(RunConfig config, std::shared_ptr<const Scenario> scenario, SessionState state)
    : config_(std::move(config)), scenario_(std::move(scenario)), state_(std::move(state)) {}

std::set<ClassId> Session::known_classes() const {
  return {state_.output_classes.begin(), state_.output_classes.end()};
}

void Session::log(std::string kind, std::vector<std::pair<std::string, std::string>> payload) {
  Event e;
  e.seq = state_.events.size();
  e.timestamp = state_.cursor;
  e.kind = std::move(kind);
  e.payload = std::move(payload);
  state_.events.push_back(std::move(e));
}

void Session::log_control(const std::string& action) { log("control", {{"action", action}}); }

void Session::refresh_s_network() {
  const auto known = known_classes();
  std::size_t n = 0, correct = 0;
  for (const auto& s : state_.eval_pool) {
    if (!known.count(s.label)) continue;
    ++n;
    if (state_.output_classes[state_.network.classify(s.input).label] == s.label) ++correct;
  }
  if (n >= config_.min_eval_pool) {
    state_.stats.s_network = static_cast<double>(correct) / static_cast<double>(n);
  } else {
    state_.stats.s_network.reset();
  }
}

StepResult Session::step(Authority& authority) {
  if (finished()) throw Error(ErrorCode::StreamExhausted, "all " + std::to_string(stream_size()) + " inputs processed");
  if (state_.mode != Mode::Monitoring) throw Error(ErrorCode::MidAdaptation, "session is adapting");
  const Scenario& sc = *scenario_;
  StepResult r;
  r.stream_index = sc.order.order[state_.cursor];
  const LabeledSample& sample = sc.stream.samples[r.stream_index];

  const Prediction pred = state_.network.classify(sample.input);
  const ClassId y = state_.output_classes[pred.label];
  r.predicted = y;
  switch (config_.strategy) {
    case Strategy::quantitative: r.verdict = verdict_quantitative(state_.monitor, pred.features, y); break;
    case Strategy::box: r.verdict = verdict_box(state_.monitor, pred.features, y); break;
    case Strategy::softmax: r.verdict = verdict_softmax(pred.softmax, config_.softmax_threshold); break;
    case Strategy::random: r.verdict = verdict_random(config_.random_rate, state_.rng); break;
  }

  if (r.verdict.warning) {
    RunStats& stats = state_.stats;
    const std::string input = num(r.stream_index);
    ++stats.warnings;
    log("warning", {{"input", input}, {"predicted", std::to_string(y)}, {"confidence", optional_real(r.verdict.confidence)}});
    if (stats.queries_used >= stats.budget) {
      ++stats.unlabeled_warnings;
      log("unlabeled_warning", {{"input", input}, {"predicted", std::to_string(y)}});
    } else {
      AuthorityQuery q{state_.next_query_id++, r.stream_index, &sample.input, y, r.verdict.confidence};
      log("query", {{"id", std::to_string(q.id)},
                    {"input", input},
                    {"predicted", std::to_string(y)},
                    {"confidence", optional_real(q.confidence)}});
      r.answer = authority.ask(q);
      if (!r.answer) {
        ++stats.timeouts;
        log("query_timeout", {{"id", std::to_string(q.id)}, {"input", input}});
      } else {
        const ClassId truth = *r.answer;
        if (truth >= sc.vocabulary_size()) {
          throw Error(ErrorCode::UnknownClass, "authority answered class " + std::to_string(truth) +
                                                   " outside the vocabulary");
        }
        ++stats.queries_used;
        const bool correct_warning = truth != y;
        stats.total.record(y, correct_warning);
        stats.window.record(y, correct_warning);
        log("answer", {{"id", std::to_string(q.id)},
                       {"input", input},
                       {"label", std::to_string(truth)},
                       {"outcome", correct_warning ? "tp" : "fp"}});

        const auto known = known_classes();
        const std::size_t count = ++stats.s_samples[truth];
        if (known.count(truth) && count % config_.eval_every == 0) {
          state_.eval_pool.push_back({sample.input, truth});
          refresh_s_network();
        } else {
          state_.collected.push_back({sample.input, truth});
        }

        r.decision = evaluate(stats, state_.hp, known, !correct_warning);
        // Only the quantitative monitor adapts in case A.
        if (r.decision == Decision::AdaptMonitor && config_.strategy != Strategy::quantitative) {
          r.decision = Decision::Continue;
        }
        if (r.decision == Decision::AdaptModel) {
          adapt_model_stage();
        } else if (r.decision == Decision::AdaptMonitor) {
          adapt_monitor_stage(y, *r.verdict.confidence);
        }
      }
    }
  }
  ++state_.cursor;
  return r;
}

void Session::adapt_monitor_stage(ClassId label, double distance) {
  state_.mode = Mode::AdaptingMonitor;
  const Scenario& sc = *scenario_;
  const auto members = x_samples(sc, state_, label);
  const FeaturesByClass feats = member_features(state_.network, state_.output_classes, members);
  const double old_threshold = state_.monitor.thresholds.at(label);
  QuantitativeMonitor next = adapt_centers(state_.monitor, label, feats.at(label));
  // Samples of the class in X, initial training data included.
  const std::size_t s = members.size();
  if (config_.dynamic_threshold) {
    next = adapt_threshold(next, label, distance, s, static_cast<double>(state_.hp.n_star));
  }
  state_.monitor = std::move(next);
  state_.stats.window = {};
  ++state_.monitor_adaptations;
  log("adapt_monitor", {{"class", std::to_string(label)},
                        {"distance", num(distance)},
                        {"old_threshold", num(old_threshold)},
                        {"new_threshold", num(state_.monitor.thresholds.at(label))},
                        {"s_samples", num(s)},
                        {"n_star", num(state_.hp.n_star)}});
  state_.batch_events.push_back("adapt_monitor");
  state_.mode = Mode::Monitoring;
}

void Session::adapt_model_stage() {
  state_.mode = Mode::AdaptingModel;
  const Scenario& sc = *scenario_;
  const auto known = known_classes();
  const auto ready = classes_ready(state_.stats, state_.hp.n_star, known);
  const auto s_network = state_.stats.s_network;
  const bool b2 = s_network && *s_network < state_.hp.tau_star;
  if (ready.empty() && !b2) {
    state_.mode = Mode::Monitoring;
    throw Error(ErrorCode::InsufficientData, "no class reached n* and s_network is not below tau*");
  }

  state_.collected.insert(state_.collected.end(), state_.eval_pool.begin(), state_.eval_pool.end());
  state_.eval_pool.clear();

  std::vector<ClassId> classes = state_.output_classes;
  classes.insert(classes.end(), ready.begin(), ready.end());
  std::map<ClassId, ClassId> dense;
  for (std::size_t i = 0; i < classes.size(); ++i) dense[classes[i]] = static_cast<ClassId>(i);

  Dataset data;
  for (ClassId c : classes) data.class_names.push_back(sc.class_names[c]);
  for (const auto& [input, label] : x_samples(sc, state_)) {
    auto it = dense.find(label);
    if (it != dense.end()) data.samples.push_back({*input, it->second});
  }

  data = balance_classes(data);

  ++state_.model_adaptations;
  TrainConfig cfg{config_.epochs_run, config_.train_batch, config_.learning_rate,
                  config_.seed + kRetrainSeedStride * state_.model_adaptations};
  TrainResult result = ready.empty() ? retrain_head(state_.network, data, cfg)
                                     : transfer_extend(state_.network, classes.size(), data, cfg);
  state_.network = std::move(result.network);
  state_.output_classes = classes;

  const FeaturesByClass feats = member_features(state_.network, state_.output_classes, x_samples(sc, state_));
  state_.monitor = extend_monitor(state_.monitor, feats, ready);
  state_.stats.window = {};
  state_.stats.s_network.reset();

  std::vector<ClassId> learned(ready.begin(), ready.end());
  log("adapt_model", {{"trigger", ready.empty() ? "b2" : "b1"},
                      {"learned", join_classes(learned)},
                      {"classes", join_classes(state_.output_classes)},
                      {"s_network", optional_real(s_network)},
                      {"train_samples", num(data.size())},
                      {"train_accuracy", num(result.train_accuracy)}});
  state_.batch_events.push_back("adapt_model");
  state_.mode = Mode::Monitoring;
}

bool Session::batch_complete() const {
  const std::size_t bs = state_.hp.batch_size;
  return state_.cursor > state_.batch_index * bs && (state_.cursor % bs == 0 || finished());
}

MetricsRow Session::close_batch() {
  if (!batch_complete()) throw Error(ErrorCode::MidAdaptation, "the current batch is not complete");
  MetricsRow row;
  row.batch_index = state_.batch_index++;
  row.inputs_seen = state_.cursor;
  row.queries_used = state_.stats.queries_used;
  row.known_classes = state_.output_classes.size();
  row.monitor_precision = state_.stats.total.precision();
  row.network_precision = state_.stats.s_network;
  for (std::size_t i = 0; i < state_.batch_events.size(); ++i) row.event += (i ? "|" : "") + state_.batch_events[i];
  state_.batch_events.clear();
  state_.metrics.push_back(row);
  return row;
}

MetricsRow Session::run_batch(Authority& authority) {
  if (!batch_complete() && finished()) {
    throw Error(ErrorCode::StreamExhausted, "all " + std::to_string(stream_size()) + " inputs processed");
  }
  while (!batch_complete()) step(authority);
  return close_batch();
}

void Session::run(Authority& authority, const std::function<void(const MetricsRow&)>& on_row) {
  while (!finished() || batch_complete()) {
    const MetricsRow row = run_batch(authority);
    if (on_row) on_row(row);
  }
}

double Session::stream_accuracy() const {
  const Dataset& stream = scenario_->stream;
  if (stream.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : stream.samples) {
    if (state_.output_classes[state_.network.classify(s.input).label] == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(stream.size());
}

RunSummary summarize_session(const Session& s) {
  RunSummary r;
  r.strategy = s.config().strategy;
  r.seed = s.config().seed;
  r.monitor_precision = s.state().stats.total.precision();
  r.learned_classes = s.state().output_classes.size() - s.scenario().initial_classes.size();
  r.network_accuracy = s.stream_accuracy();
  r.queries_used = s.state().stats.queries_used;
  r.budget = s.state().stats.budget;
  return r;
}

std::vector<StrategyRun> compare_strategies(const RunConfig& config) {
  if (config.strategies.empty()) throw Error(ErrorCode::InvalidConfig, "no strategies to compare");
  auto scenario = std::make_shared<const Scenario>(prepare_scenario(config));
  const Network original = train_original(config, *scenario);
  std::vector<StrategyRun> runs;
  for (Strategy strategy : config.strategies) {
    RunConfig c = config;
    c.strategy = strategy;
    Session session(c, scenario, original);
    OracleAuthority oracle(scenario->stream);
    session.run(oracle);
    StrategyRun r;
    r.strategy = strategy;
    r.metrics = session.state().metrics;
    r.events = session.state().events;
    r.summary = summarize_session(session);
    r.stream_hash = stream_hash(scenario->order);
    runs.push_back(std::move(r));
  }
  return runs;
}

}  // namespace activemon
