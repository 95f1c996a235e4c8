#include <doctest.h>

#include <filesystem>

#include "seedloop/oracle.hpp"
#include "seedloop/service.hpp"
#include "seedloop/synthetic.hpp"

#include <httplib.h>

using namespace seedloop;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Served {
  Dataset pool;
  std::unique_ptr<LoopService> service;
  std::unique_ptr<httplib::Client> client;
};

Served serve(const std::string& name, int max_cycles, int epochs = 2) {
  Served s;
  const auto labeled = synthetic::make_seed_dataset(std::vector<int>{5, 5, 5, 5}, 1, "lab");
  s.pool = synthetic::make_seed_dataset(std::vector<int>{10, 10, 10, 10}, 2, "pool");
  const auto val = synthetic::make_seed_dataset(std::vector<int>{4, 4, 4, 4}, 3, "val");
  LoopConfig cfg;
  cfg.train.max_epochs = epochs;
  cfg.train.early_stop_patience = epochs - 1;
  cfg.acquisition.top_k = 12;
  cfg.acquisition.batch_size = 6;
  const auto dir = fs::temp_directory_path() / ("seedloop_service_" + name);
  fs::remove_all(dir);
  auto run = ActiveLearningRun::start(labeled, s.pool, val, cfg, dir);
  ServiceOptions opts;
  opts.port = 0;
  opts.max_cycles = max_cycles;
  s.service = std::make_unique<LoopService>(std::move(run), opts);
  s.service->start();
  s.client = std::make_unique<httplib::Client>("127.0.0.1", s.service->port());
  s.client->set_read_timeout(30, 0);
  return s;
}

json get_json(httplib::Client& c, const std::string& path, int expect = 200) {
  const auto res = c.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

httplib::Result post(httplib::Client& c, const json& body) {
  return c.Post("/api/labels", body.dump(), "application/json");
}

json oracle_labels(const json& batch, const Dataset& pool) {
  json labels = json::array();
  for (const auto& it : batch["items"]) {
    const auto* r = pool.find(it["id"].get<std::string>());
    labels.push_back({{"id", r->id}, {"label", pool.labels().name(*r->label)}, {"elapsed_ms", 700}});
  }
  return labels;
}

} // namespace

TEST_CASE("batch, image, errors and metrics over http") {
  auto s = serve("api", 0, 4);
  auto& c = *s.client;
  REQUIRE(s.service->wait_for_batch(std::chrono::seconds(60)));

  const auto status = get_json(c, "/api/status");
  CHECK(status["phase"] == "annotating");
  CHECK(status["cycle"] == 0);
  CHECK(status["pending"] == 6);

  const auto batch = get_json(c, "/api/batch");
  CHECK(batch["cycle"] == 0);
  REQUIRE(batch["items"].size() == 6);
  for (const auto& it : batch["items"]) {
    CHECK(it["suggested_label"].is_string());
    CHECK(it["entropy"].get<double>() >= 0.0);
    CHECK(it["labeled"] == false);
  }

  const auto img = c.Get(batch["items"][0]["image_url"].get<std::string>());
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/png");
  CHECK(img->body.substr(1, 3) == "PNG");
  const auto missing = get_json(c, "/api/image/nope", 404);
  CHECK(missing["id"] == "nope");

  auto res = post(c, {{"cycle", 0}, {"labels", {{{"id", "intruder"}, {"label", "pure"}, {"elapsed_ms", 1}}}}});
  REQUIRE(res);
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["id"] == "intruder");

  const auto first_id = batch["items"][0]["id"].get<std::string>();
  res = post(c, {{"cycle", 5}, {"labels", {{{"id", first_id}, {"label", "pure"}}}}});
  REQUIRE(res);
  CHECK(res->status == 409);
  res = c.Post("/api/labels", "{oops", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = post(c, {{"cycle", 0}, {"labels", {{{"id", first_id}, {"label", "cracked"}}}}});
  REQUIRE(res);
  CHECK(res->status == 400);

  const auto labels = oracle_labels(batch, s.pool);
  res = post(c, {{"cycle", 0}, {"labels", json::array({labels[0]})}, {"annotator_id", "t"}});
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["accepted"] == 1);
  CHECK(json::parse(res->body)["cycle_complete"] == false);
  CHECK(get_json(c, "/api/batch")["items"][0]["labeled"] == true);

  res = post(c, {{"cycle", 0}, {"labels", labels}, {"annotator_id", "t"}});
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto done = json::parse(res->body);
  CHECK(done["accepted"] == 5);
  CHECK(done["cycle_complete"] == true);
  CHECK(done["record"]["labels_added"] == 6);

  // the next cycle is training now
  res = post(c, {{"cycle", 1}, {"labels", json::array()}});
  REQUIRE(res);
  CHECK(res->status == 503);
  CHECK(get_json(c, "/api/status")["phase"] == "training");
  CHECK(get_json(c, "/api/batch")["items"].empty());

  const auto metrics = get_json(c, "/api/metrics");
  REQUIRE(metrics["history"].size() == 1);
  CHECK(metrics["history"][0]["labeled_total"] == 26);
  CHECK(metrics["class_stats"]["total"] == 26);
  CHECK(metrics["class_stats"]["labels"][2] == "pure");
  s.service->stop();
}

TEST_CASE("simulated oracle drives the service as a client") {
  auto s = serve("oracle", 3);
  auto& c = *s.client;
  int completed = 0;
  while (s.service->wait_for_batch(std::chrono::seconds(60))) {
    const auto status = get_json(c, "/api/status");
    if (status["finished"] == true) break;
    const auto batch = get_json(c, "/api/batch");
    const auto before = get_json(c, "/api/metrics")["history"].size();
    const auto res = post(c, {{"cycle", batch["cycle"]}, {"labels", oracle_labels(batch, s.pool)}, {"annotator_id", "oracle"}});
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK(json::parse(res->body)["cycle_complete"] == true);
    CHECK(get_json(c, "/api/metrics")["history"].size() == before + 1);
    ++completed;
  }
  s.service->wait_until_finished();
  CHECK(completed == 3);
  const auto hist = s.service->history();
  REQUIRE(hist.size() == 3);
  CHECK(hist[2].labeled_total == 20 + 18);
  CHECK(get_json(c, "/api/status")["phase"] == "idle");
  s.service->stop();
}

TEST_CASE("port already in use") {
  auto s = serve("port_a", 1);
  const auto labeled = synthetic::make_seed_dataset(std::vector<int>{2, 2, 2, 2}, 1, "l");
  const auto pool = synthetic::make_seed_dataset(std::vector<int>{2, 2, 2, 2}, 2, "p");
  const auto val = synthetic::make_seed_dataset(std::vector<int>{1, 1, 1, 1}, 3, "v");
  const auto dir = fs::temp_directory_path() / "seedloop_service_port_b";
  fs::remove_all(dir);
  ServiceOptions opts;
  opts.port = s.service->port();
  LoopService other(ActiveLearningRun::start(labeled, pool, val, LoopConfig{}, dir), opts);
  CHECK_THROWS_AS(other.start(), ServiceError);
  s.service->stop();
}
