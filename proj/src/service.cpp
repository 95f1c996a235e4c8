#include "seedloop/service.hpp"

#include <httplib.h>

namespace seedloop {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                nlohmann::json extra = nlohmann::json::object()) {
  extra["error"] = message;
  send_json(res, status, extra);
}

} // namespace

LoopService::LoopService(ActiveLearningRun run, ServiceOptions options)
    : run_(std::move(run)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  // no SO_REUSEPORT, so a taken port fails to bind
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  install_routes();
}

LoopService::~LoopService() { stop(); }

Phase LoopService::phase() const {
  std::shared_lock lock(mu_);
  return training_ ? Phase::training : run_.phase();
}

std::vector<CycleRecord> LoopService::history() const {
  std::shared_lock lock(mu_);
  return run_.state().history;
}

bool LoopService::finished_locked() const {
  if (training_ || run_.state().pending) return false;
  if (run_.state().unlabeled.empty()) return true;
  return options_.max_cycles > 0 && static_cast<int>(run_.state().history.size()) >= options_.max_cycles;
}

void LoopService::maybe_start_training() {
  if (training_ || run_.state().pending || finished_locked() || stopping_) return;
  if (trainer_.joinable()) trainer_.join();
  training_ = true;
  training_error_.reset();
  trainer_ = std::thread([this] {
    std::optional<ActiveLearningRun::Prepared> prepared;
    std::optional<std::string> error;
    try {
      // submissions are refused while training_ is set, so the run is not
      // mutated underneath this read
      prepared.emplace(run_.compute_cycle());
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::unique_lock lock(mu_);
    if (prepared) {
      try {
        run_.commit_cycle(std::move(*prepared));
      } catch (const std::exception& e) {
        error = e.what();
      }
    }
    training_error_ = error;
    training_ = false;
    changed_.notify_all();
  });
}

void LoopService::install_routes() {
  auto& s = *server_;

  s.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
    std::shared_lock lock(mu_);
    const auto& st = run_.state();
    nlohmann::json j = {{"cycle", st.cycle},
                        {"phase", to_string(training_ ? Phase::training : run_.phase())},
                        {"pending", st.pending ? st.pending->remaining() : 0},
                        {"finished", finished_locked()}};
    if (training_error_) j["error"] = *training_error_;
    send_json(res, 200, j);
  });

  s.Get("/api/batch", [this](const httplib::Request&, httplib::Response& res) {
    std::unique_lock lock(mu_);
    const auto& st = run_.state();
    nlohmann::json j = {{"cycle", st.cycle},
                        {"phase", to_string(training_ ? Phase::training : run_.phase())},
                        {"items", nlohmann::json::array()}};
    if (!training_ && st.pending) {
      run_.mark_served(now_utc_ms());
      const auto& labels = st.labeled.labels();
      for (const auto& item : st.pending->batch.items)
        j["items"].push_back({{"id", item.id},
                              {"image_url", "/api/image/" + item.id},
                              {"suggested_label", labels.name(item.suggested_label)},
                              {"entropy", item.entropy},
                              {"labeled", st.pending->labeled.contains(item.id)}});
    }
    send_json(res, 200, j);
  });

  s.Get(R"(/api/image/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::optional<ImageRecord> record;
    std::filesystem::path root;
    {
      std::shared_lock lock(mu_);
      const auto& st = run_.state();
      for (const Dataset* ds : {&st.unlabeled, &st.labeled, &st.val})
        if (const ImageRecord* r = ds->find(id)) {
          record = *r;
          root = ds->root();
          break;
        }
    }
    if (!record) return send_error(res, 404, "unknown image id", {{"id", id}});
    try {
      const std::filesystem::path path(record->path);
      const auto png = encode_png(record->pixels ? *record->pixels : read_png(path.is_absolute() ? path : root / path));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    } catch (const std::exception& e) {
      send_error(res, 500, e.what(), {{"id", id}});
    }
  });

  s.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const std::exception&) {
      return send_error(res, 400, "request body is not JSON");
    }
    std::unique_lock lock(mu_);
    if (training_) return send_error(res, 503, "cycle busy", {{"cycle", run_.state().cycle}});
    int cycle = 0;
    std::string annotator;
    std::vector<LabelSubmission> subs;
    try {
      cycle = body.at("cycle").get<int>();
      annotator = body.value("annotator_id", std::string("anonymous"));
      const auto& labels = run_.state().labeled.labels();
      for (const auto& l : body.at("labels")) {
        LabelSubmission s;
        s.id = l.at("id").get<std::string>();
        s.label = labels.parse(l.at("label").get<std::string>());
        s.elapsed_ms = l.value("elapsed_ms", std::int64_t{0});
        subs.push_back(std::move(s));
      }
    } catch (const std::exception& e) {
      return send_error(res, 400, std::string("malformed label submission: ") + e.what());
    }
    try {
      const SubmitResult r = run_.submit_labels(cycle, subs, annotator, now_utc_ms());
      nlohmann::ordered_json j = {{"accepted", r.accepted}, {"cycle_complete", r.completed.has_value()},
                          {"cycle", run_.state().cycle}};
      if (r.completed) {
        j["record"] = r.completed->to_json();
        maybe_start_training();
      }
      changed_.notify_all();
      send_json(res, 200, j);
    } catch (const UnknownItemError& e) {
      send_error(res, 409, e.what(), {{"id", e.id()}, {"cycle", run_.state().cycle}});
    } catch (const StaleCycleError& e) {
      send_error(res, 409, e.what(), {{"cycle", run_.state().cycle}});
    } catch (const std::invalid_argument& e) {
      send_error(res, 400, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  s.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) {
    std::shared_lock lock(mu_);
    const auto& st = run_.state();
    nlohmann::ordered_json history = nlohmann::ordered_json::array();
    for (const auto& r : st.history) history.push_back(r.to_json());
    const auto stats = class_stats(st.labeled);
    nlohmann::ordered_json cs = {{"labels", st.labeled.labels().names()},
                         {"counts", stats.counts},
                         {"fractions", stats.fractions},
                         {"total", stats.total()}};
    send_json(res, 200, nlohmann::ordered_json{{"history", history}, {"class_stats", cs}});
  });

  if (!options_.static_dir.empty()) {
    if (!server_->set_mount_point("/", options_.static_dir.string()))
      throw ServiceError("static directory " + options_.static_dir.string() + " does not exist");
  }
}

void LoopService::start() {
  if (options_.port == 0) {
    bound_port_ = server_->bind_to_any_port(options_.host);
    if (bound_port_ <= 0) throw ServiceError("cannot bind to " + options_.host);
  } else {
    if (!server_->bind_to_port(options_.host, options_.port))
      throw ServiceError("cannot bind to " + options_.host + ":" + std::to_string(options_.port) +
                         " (port in use?)");
    bound_port_ = options_.port;
  }
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  std::unique_lock lock(mu_);
  maybe_start_training();
}

void LoopService::stop() {
  stopping_ = true;
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
  if (trainer_.joinable()) trainer_.join();
  changed_.notify_all();
}

void LoopService::wait_until_finished() {
  std::unique_lock lock(mu_);
  changed_.wait(lock, [this] { return stopping_ || finished_locked(); });
}

bool LoopService::wait_for_batch(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  return changed_.wait_for(lock, timeout,
                           [this] { return stopping_ || finished_locked() || (!training_ && run_.state().pending); });
}

} // namespace seedloop
