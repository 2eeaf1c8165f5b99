#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "activemon/framework.hpp"

namespace activemon {

enum class AuthorityMode { interactive, oracle };

struct ServiceOptions {
  AuthorityMode authority = AuthorityMode::interactive;
  bool start_paused = false;
  std::size_t timeout_ms = 0;  // interactive answers; 0 = wait forever
  std::string cors_origin = "*";
};

// JSON body plus HTTP status.
struct Reply {
  int status = 200;
  std::string body;
};

// Owns one session and a runner thread that is the only code touching it.
// Handlers talk to the runner through a command channel and read published
// copies of its state.
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void load(Session session);
  bool loaded() const;

  Reply get_state() const;
  Reply get_queue() const;
  Reply post_label(const std::string& body);
  Reply post_control(const std::string& body);

  // Metric rows (CSV lines, no header) from index `from` on; blocks up to
  // `wait` for at least one new row unless the run is over.
  std::vector<std::string> metric_rows(std::size_t from, std::chrono::milliseconds wait) const;
  bool finished() const;
  // Blocks until the stream is exhausted or the timeout passes.
  bool wait_finished(std::chrono::milliseconds timeout) const;
  // Blocks until the runner is parked (paused, finished or waiting on a label).
  bool wait_idle(std::chrono::milliseconds timeout) const;

  // Binds and serves in a background thread; port 0 picks a free port.
  // Returns the bound port.
  int listen(const std::string& host, int port);
  // Stops HTTP, cancels pending queries and joins the runner. Idempotent.
  void stop();

  // Valid after stop().
  const Session* session() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace activemon
