#pragma once

// HTTP front end for a human-annotated run.
//
//   GET  /api/batch        {cycle, phase, items: [{id, image_url, suggested_label, entropy, labeled}]}
//   GET  /api/image/{id}   PNG bytes
//   POST /api/labels       {cycle, labels: [{id, label, elapsed_ms}], annotator_id} -> {accepted, cycle_complete, cycle}
//   GET  /api/metrics      {history, class_stats}
//   GET  /api/status       {cycle, phase, pending}
//
// Reads run concurrently; label submissions and cycle changes are serialized
// through one writer. Training runs on a background thread, during which
// submissions get 503 "cycle busy".

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>

#include "seedloop/loop.hpp"

namespace httplib {
class Server;
}

namespace seedloop {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  ///< 0 picks a free port
  std::filesystem::path static_dir;  ///< mounted at "/" when set
  int max_cycles = 0;  ///< stop preparing new cycles after this many records (0 = until the pool is empty)
};

class ServiceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class LoopService {
public:
  LoopService(ActiveLearningRun run, ServiceOptions options);
  ~LoopService();
  LoopService(const LoopService&) = delete;
  LoopService& operator=(const LoopService&) = delete;

  /// Binds and starts serving; throws ServiceError if the port is taken.
  /// Starts preparing the first batch if none is pending.
  void start();
  void stop();
  /// Blocks until stop() or until the run has no more cycles to prepare and
  /// nothing is pending.
  void wait_until_finished();

  int port() const { return bound_port_; }
  Phase phase() const;

  /// Blocks until the service is annotating or finished; false on timeout.
  bool wait_for_batch(std::chrono::milliseconds timeout);

  /// Thread-safe snapshot of the run's history.
  std::vector<CycleRecord> history() const;

private:
  void install_routes();
  void maybe_start_training();  // caller holds the unique lock
  bool finished_locked() const;

  ActiveLearningRun run_;
  ServiceOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  std::thread trainer_;
  mutable std::shared_mutex mu_;
  std::condition_variable_any changed_;
  bool training_ = false;
  std::optional<std::string> training_error_;
  std::atomic<bool> stopping_{false};
  int bound_port_ = 0;
};

} // namespace seedloop
