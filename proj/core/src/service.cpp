#include "activemon/service.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "activemon/error.hpp"

namespace activemon {

namespace {

using json = nlohmann::json;

Reply error_reply(int status, std::string_view code, const std::string& message) {
  return {status, json{{"error", code}, {"message", message}}.dump()};
}

struct PendingQuery {
  std::uint64_t id = 0;
  std::size_t stream_index = 0;
  InputSample input;
  ClassId predicted = 0;
  std::optional<double> confidence;
  std::size_t enqueued_at_input = 0;
  std::int64_t enqueued_ms = 0;
};

enum class LabelStatus { ok, unknown_query, already_answered, expired };

// Blocks the runner inside ask() until a label arrives through submit().
class InteractiveAuthority : public Authority {
 public:
  InteractiveAuthority(std::size_t timeout_ms, std::function<void()> on_wait)
      : timeout_ms_(timeout_ms), on_wait_(std::move(on_wait)), start_(std::chrono::steady_clock::now()) {}

  std::optional<ClassId> ask(const AuthorityQuery& q) override {
    std::unique_lock lk(m_);
    PendingQuery p;
    p.id = q.id;
    p.stream_index = q.stream_index;
    p.input = *q.input;
    p.predicted = q.predicted;
    p.confidence = q.confidence;
    p.enqueued_at_input = cursor_;
    p.enqueued_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
    queue_.push_back(std::move(p));
    waiting_ = true;
    lk.unlock();
    if (on_wait_) on_wait_();
    lk.lock();
    auto ready = [&] { return cancelled_ || answers_.count(q.id); };
    if (timeout_ms_ == 0) {
      cv_.wait(lk, ready);
    } else {
      cv_.wait_for(lk, std::chrono::milliseconds(timeout_ms_), ready);
    }
    waiting_ = false;
    std::optional<ClassId> out;
    if (auto it = answers_.find(q.id); it != answers_.end()) {
      out = it->second;
      answers_.erase(it);
    } else {
      expired_.insert(q.id);
    }
    std::erase_if(queue_, [&](const PendingQuery& e) { return e.id == q.id; });
    return out;
  }

  LabelStatus submit(std::uint64_t id, ClassId label) {
    std::lock_guard lk(m_);
    if (answered_.count(id)) return LabelStatus::already_answered;
    if (expired_.count(id)) return LabelStatus::expired;
    auto it = std::find_if(queue_.begin(), queue_.end(), [&](const PendingQuery& e) { return e.id == id; });
    if (it == queue_.end()) return LabelStatus::unknown_query;
    queue_.erase(it);
    answered_.insert(id);
    answers_[id] = label;
    cv_.notify_all();
    return LabelStatus::ok;
  }

  void cancel() {
    std::lock_guard lk(m_);
    cancelled_ = true;
    cv_.notify_all();
  }

  void set_cursor(std::size_t c) {
    std::lock_guard lk(m_);
    cursor_ = c;
  }

  std::vector<PendingQuery> queue() const {
    std::lock_guard lk(m_);
    return {queue_.begin(), queue_.end()};
  }

  bool waiting() const {
    std::lock_guard lk(m_);
    return waiting_ && !queue_.empty();
  }

 private:
  mutable std::mutex m_;
  std::condition_variable cv_;
  std::deque<PendingQuery> queue_;
  std::map<std::uint64_t, ClassId> answers_;
  std::set<std::uint64_t> answered_;
  std::set<std::uint64_t> expired_;
  bool cancelled_ = false;
  bool waiting_ = false;
  std::size_t cursor_ = 0;
  std::size_t timeout_ms_;
  std::function<void()> on_wait_;
  std::chrono::steady_clock::time_point start_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json counts_json(const std::map<ClassId, std::size_t>& m) {
  json out = json::object();
  for (const auto& [c, n] : m) out[std::to_string(c)] = n;
  return out;
}

json state_json(const Session& s) {
  const SessionState& st = s.state();
  const RunStats& stats = st.stats;
  json thresholds = json::object();
  for (const auto& [c, t] : st.monitor.thresholds) thresholds[std::to_string(c)] = t;
  return {
      {"strategy", to_string(s.config().strategy)},
      {"mode", to_string(st.mode)},
      {"known_classes", st.output_classes},
      {"class_names", s.scenario().class_names},
      {"cursor", st.cursor},
      {"stream_size", s.stream_size()},
      {"batch_size", st.hp.batch_size},
      {"batch_index", st.batch_index},
      {"budget", stats.budget},
      {"queries_used", stats.queries_used},
      {"hyperparameters",
       {{"n_star", st.hp.n_star}, {"tau_star", st.hp.tau_star}, {"kappa_star", st.hp.kappa_star}, {"p", st.hp.budget_fraction}}},
      {"stats",
       {{"s_network", optional_json(stats.s_network)},
        {"s_monitor", optional_json(stats.s_monitor())},
        {"monitor_precision", optional_json(stats.total.precision())},
        {"s_samples", counts_json(stats.s_samples)},
        {"tp", stats.total.tp},
        {"fp", stats.total.fp},
        {"warnings", stats.warnings},
        {"unlabeled_warnings", stats.unlabeled_warnings},
        {"timeouts", stats.timeouts}}},
      {"thresholds", thresholds},
      {"monitor_adaptations", st.monitor_adaptations},
      {"model_adaptations", st.model_adaptations},
      {"events", st.events.size()},
  };
}

enum class RunnerStatus { working, waiting_label, paused, finished, stopped, failed };

std::string_view to_string(RunnerStatus s) {
  switch (s) {
    case RunnerStatus::working: return "working";
    case RunnerStatus::waiting_label: return "waiting_label";
    case RunnerStatus::paused: return "paused";
    case RunnerStatus::finished: return "finished";
    case RunnerStatus::stopped: return "stopped";
    case RunnerStatus::failed: return "failed";
  }
  return "unknown";
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;

  mutable std::mutex m;
  mutable std::condition_variable cv;  // commands, state and rows
  std::optional<Session> session;
  std::unique_ptr<InteractiveAuthority> interactive;
  std::unique_ptr<OracleAuthority> oracle;
  std::size_t vocabulary = 0;

  // guarded by m
  std::deque<std::string> commands;
  bool paused = false;
  bool stepping = false;
  bool stop_requested = false;
  bool done = false;
  bool working = false;
  std::string failure;
  json published;
  std::vector<std::string> rows;

  std::thread runner;
  httplib::Server http;
  std::thread http_thread;
  bool stopped = false;

  Authority& authority() {
    if (interactive) return *interactive;
    return *oracle;
  }

  RunnerStatus status_locked() const {
    if (!failure.empty()) return RunnerStatus::failed;
    if (stop_requested) return RunnerStatus::stopped;
    if (done) return RunnerStatus::finished;
    if (interactive && interactive->waiting()) return RunnerStatus::waiting_label;
    if (working) return RunnerStatus::working;
    if (paused && !stepping) return RunnerStatus::paused;
    return RunnerStatus::working;
  }

  bool should_run_locked() const { return !done && failure.empty() && (!paused || stepping); }

  void publish_locked() {
    published = state_json(*session);
    if (interactive) interactive->set_cursor(session->state().cursor);
  }

  void run_loop() {
    for (;;) {
      std::unique_lock lk(m);
      working = false;
      cv.notify_all();
      cv.wait(lk, [&] { return stop_requested || !commands.empty() || should_run_locked(); });
      if (stop_requested) break;
      while (!commands.empty()) {
        session->log_control(commands.front());
        commands.pop_front();
      }
      publish_locked();
      if (!should_run_locked()) continue;
      working = true;
      lk.unlock();

      std::optional<std::string> row;
      std::string error;
      try {
        if (!session->batch_complete()) session->step(authority());
        if (session->batch_complete()) row = session->close_batch().to_csv();
      } catch (const std::exception& e) {
        error = e.what();
      }

      lk.lock();
      if (!error.empty()) failure = error;
      if (row) {
        rows.push_back(*row);
        stepping = false;
      }
      done = session->finished() && !session->batch_complete();
      publish_locked();
    }
    std::lock_guard lk(m);
    working = false;
    cv.notify_all();
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  impl_->paused = impl_->options.start_paused;
}

Service::~Service() { stop(); }

void Service::load(Session session) {
  auto& I = *impl_;
  std::lock_guard lk(I.m);
  if (I.session) throw Error(ErrorCode::InvalidConfig, "a session is already loaded");
  I.vocabulary = session.scenario().vocabulary_size();
  I.session.emplace(std::move(session));
  if (I.options.authority == AuthorityMode::interactive) {
    I.interactive = std::make_unique<InteractiveAuthority>(I.options.timeout_ms, [&I] {
      std::lock_guard g(I.m);
      I.cv.notify_all();
    });
  } else {
    I.oracle = std::make_unique<OracleAuthority>(I.session->scenario().stream);
  }
  for (const auto& r : I.session->state().metrics) I.rows.push_back(r.to_csv());
  I.done = I.session->finished() && !I.session->batch_complete();
  I.publish_locked();
  I.runner = std::thread([&I] { I.run_loop(); });
}

bool Service::loaded() const {
  std::lock_guard lk(impl_->m);
  return impl_->session.has_value();
}

Reply Service::get_state() const {
  const auto& I = *impl_;
  std::lock_guard lk(I.m);
  if (!I.session) return error_reply(503, "NoSession", "no session loaded");
  json out = I.published;
  out["paused"] = I.paused;
  out["stepping"] = I.stepping;
  out["finished"] = I.done;
  out["runner"] = to_string(I.status_locked());
  out["queue_length"] = I.interactive ? I.interactive->queue().size() : 0;
  out["authority"] = I.interactive ? "interactive" : "oracle";
  if (!I.failure.empty()) out["failure"] = I.failure;
  return {200, out.dump()};
}

Reply Service::get_queue() const {
  const auto& I = *impl_;
  json out = json::array();
  std::vector<std::string> names;
  {
    std::lock_guard lk(I.m);
    if (!I.session || !I.interactive) return {200, out.dump()};
    names = I.session->scenario().class_names;
  }
  for (const auto& q : I.interactive->queue()) {
    json e{{"query_id", q.id},
           {"input_index", q.stream_index},
           {"width", q.input.width},
           {"height", q.input.height},
           {"channels", q.input.channels},
           {"pixels", q.input.pixels},
           {"predicted", q.predicted},
           {"predicted_name", q.predicted < names.size() ? names[q.predicted] : std::to_string(q.predicted)},
           {"enqueued_at_input", q.enqueued_at_input},
           {"enqueued_ms", q.enqueued_ms}};
    if (q.confidence) e["confidence"] = *q.confidence;
    out.push_back(std::move(e));
  }
  return {200, out.dump()};
}

Reply Service::post_label(const std::string& body) {
  auto& I = *impl_;
  std::size_t vocabulary = 0;
  {
    std::lock_guard lk(I.m);
    if (!I.session) return error_reply(503, "NoSession", "no session loaded");
    if (!I.interactive) return error_reply(409, "OracleMode", "the session is answered by the oracle");
    vocabulary = I.vocabulary;
  }
  json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object() || !req.contains("query_id") || !req.contains("class_id") ||
      !req["query_id"].is_number_unsigned() || !req["class_id"].is_number_integer()) {
    return error_reply(400, "BadRequest", "expected {\"query_id\": <id>, \"class_id\": <class>}");
  }
  const auto id = req["query_id"].get<std::uint64_t>();
  const auto cls = req["class_id"].get<std::int64_t>();
  if (cls < 0 || static_cast<std::size_t>(cls) >= vocabulary) {
    return error_reply(422, "InvalidClass", "class " + std::to_string(cls) + " is outside the vocabulary");
  }
  switch (I.interactive->submit(id, static_cast<ClassId>(cls))) {
    case LabelStatus::ok: return {200, json{{"ok", true}, {"query_id", id}}.dump()};
    case LabelStatus::unknown_query: return error_reply(404, "UnknownQuery", "no pending query " + std::to_string(id));
    case LabelStatus::already_answered:
      return error_reply(409, "AlreadyAnswered", "query " + std::to_string(id) + " was already answered");
    case LabelStatus::expired: return error_reply(409, "Expired", "query " + std::to_string(id) + " timed out");
  }
  return error_reply(500, "Internal", "unreachable");
}

Reply Service::post_control(const std::string& body) {
  auto& I = *impl_;
  json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object() || !req.contains("action") || !req["action"].is_string()) {
    return error_reply(400, "BadRequest", "expected {\"action\": \"pause\" | \"resume\" | \"step_batch\"}");
  }
  const std::string action = req["action"];
  std::lock_guard lk(I.m);
  if (!I.session) return error_reply(503, "NoSession", "no session loaded");
  if (action == "pause") {
    if (I.paused) return error_reply(409, "InvalidTransition", "already paused");
    if (I.done) return error_reply(409, "InvalidTransition", "the run is finished");
    I.paused = true;
  } else if (action == "resume") {
    if (!I.paused) return error_reply(409, "InvalidTransition", "not paused");
    I.paused = false;
  } else if (action == "step_batch") {
    if (!I.paused) return error_reply(409, "InvalidTransition", "step_batch needs a paused session");
    if (I.done) return error_reply(409, "InvalidTransition", "the run is finished");
    if (I.stepping) return error_reply(409, "InvalidTransition", "a batch step is in progress");
    I.stepping = true;
  } else {
    return error_reply(400, "BadRequest", "unknown action '" + action + "'");
  }
  I.commands.push_back(action);
  I.cv.notify_all();
  return {200, json{{"ok", true}, {"action", action}, {"paused", I.paused}}.dump()};
}

std::vector<std::string> Service::metric_rows(std::size_t from, std::chrono::milliseconds wait) const {
  const auto& I = *impl_;
  std::unique_lock lk(I.m);
  I.cv.wait_for(lk, wait, [&] { return I.rows.size() > from || I.done || I.stop_requested || !I.failure.empty(); });
  if (from >= I.rows.size()) return {};
  return {I.rows.begin() + static_cast<std::ptrdiff_t>(from), I.rows.end()};
}

bool Service::finished() const {
  std::lock_guard lk(impl_->m);
  return impl_->done;
}

bool Service::wait_finished(std::chrono::milliseconds timeout) const {
  const auto& I = *impl_;
  std::unique_lock lk(I.m);
  return I.cv.wait_for(lk, timeout, [&] { return I.done || !I.failure.empty(); }) && I.done;
}

bool Service::wait_idle(std::chrono::milliseconds timeout) const {
  const auto& I = *impl_;
  std::unique_lock lk(I.m);
  return I.cv.wait_for(lk, timeout, [&] {
    const auto s = I.status_locked();
    return I.commands.empty() && s != RunnerStatus::working;
  });
}

int Service::listen(const std::string& host, int port) {
  auto& I = *impl_;
  const std::string origin = I.options.cors_origin;
  I.http.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  I.http.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  I.http.Get("/state", [this, send](const httplib::Request&, httplib::Response& res) { send(res, get_state()); });
  I.http.Get("/queue", [this, send](const httplib::Request&, httplib::Response& res) { send(res, get_queue()); });
  I.http.Post("/label",
              [this, send](const httplib::Request& req, httplib::Response& res) { send(res, post_label(req.body)); });
  I.http.Post("/control",
              [this, send](const httplib::Request& req, httplib::Response& res) { send(res, post_control(req.body)); });
  I.http.Get("/metrics/stream", [this](const httplib::Request&, httplib::Response& res) {
    auto next = std::make_shared<std::size_t>(0);
    res.set_chunked_content_provider("text/csv", [this, next](std::size_t, httplib::DataSink& sink) {
      for (const auto& r : metric_rows(*next, std::chrono::milliseconds(200))) {
        const std::string line = r + "\n";
        if (!sink.write(line.data(), line.size())) return false;
        ++*next;
      }
      bool over = false;
      {
        std::lock_guard lk(impl_->m);
        over = (impl_->done || impl_->stop_requested || !impl_->failure.empty()) && *next >= impl_->rows.size();
      }
      if (over) sink.done();
      return true;
    });
  });
  const int bound = port == 0 ? I.http.bind_to_any_port(host) : (I.http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  I.http_thread = std::thread([&I] { I.http.listen_after_bind(); });
  I.http.wait_until_ready();
  return bound;
}

void Service::stop() {
  auto& I = *impl_;
  {
    std::lock_guard lk(I.m);
    if (I.stopped) return;
    I.stopped = true;
    I.stop_requested = true;
    I.cv.notify_all();
  }
  if (I.interactive) I.interactive->cancel();
  if (I.runner.joinable()) I.runner.join();
  if (I.http.is_running()) I.http.stop();
  if (I.http_thread.joinable()) I.http_thread.join();
}

const Session* Service::session() const {
  std::lock_guard lk(impl_->m);
  return impl_->session ? &*impl_->session : nullptr;
}

}  // namespace activemon
