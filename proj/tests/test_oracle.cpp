#include <doctest.h>

#include <cmath>

#include "seedloop/oracle.hpp"
#include "seedloop/synthetic.hpp"

using namespace seedloop;

namespace {

struct Fixture {
  AcquisitionBatch batch;
  OracleConfig oracle;
};

Fixture fixture(int n, bool suggestions_right) {
  Fixture f;
  for (int i = 0; i < n; ++i) {
    const std::string id = "u" + std::to_string(i);
    const ClassIndex truth = i % 4;
    f.oracle.ground_truth[id] = truth;
    f.batch.items.push_back({id, suggestions_right ? truth : (truth + 1) % 4, 0.5});
  }
  return f;
}

} // namespace

TEST_CASE("latency model arithmetic") {
  auto f = fixture(10, true);
  auto r = simulated_annotate(f.batch, f.oracle);
  CHECK(r.elapsed_ms == 10 * 800);
  for (const auto& l : r.labels) CHECK(l.label == f.oracle.ground_truth.at(l.id));

  f = fixture(10, false);
  r = simulated_annotate(f.batch, f.oracle);
  CHECK(r.elapsed_ms == 10 * (800 + 400));
  std::int64_t sum = 0;
  for (const auto& l : r.labels) sum += l.elapsed_ms;
  CHECK(sum == r.elapsed_ms);
}

TEST_CASE("noise flips follow the binomial") {
  auto f = fixture(1000, true);
  f.oracle.noise_rate = 0.1;
  f.oracle.seed = 5;
  const auto r = simulated_annotate(f.batch, f.oracle);
  int flips = 0;
  for (const auto& l : r.labels) {
    const ClassIndex truth = f.oracle.ground_truth.at(l.id);
    if (l.label != truth) {
      ++flips;
      CHECK(l.label >= 0);
      CHECK(l.label < 4);
      CHECK(l.elapsed_ms == 1200);
    }
  }
  const double mean = 100.0, sigma = std::sqrt(1000 * 0.1 * 0.9);
  CHECK(std::abs(flips - mean) <= 3 * sigma);
}

TEST_CASE("flip outcome is keyed by item, not batch position") {
  auto f = fixture(200, true);
  f.oracle.noise_rate = 0.3;
  const auto a = simulated_annotate(f.batch, f.oracle);
  std::reverse(f.batch.items.begin(), f.batch.items.end());
  const auto b = simulated_annotate(f.batch, f.oracle);
  for (std::size_t i = 0; i < a.labels.size(); ++i) CHECK(a.labels[i].label == b.labels[a.labels.size() - 1 - i].label);
}

TEST_CASE("flips go to every other class about equally") {
  auto f = fixture(4000, true);
  f.oracle.noise_rate = 0.5;
  const auto r = simulated_annotate(f.batch, f.oracle);
  std::vector<int> to(4, 0);
  int flips = 0;
  for (const auto& l : r.labels)
    if (l.label != f.oracle.ground_truth.at(l.id) && f.oracle.ground_truth.at(l.id) == corn::pure) ++to[l.label], ++flips;
  CHECK(to[corn::pure] == 0);
  for (int c : {corn::broken, corn::discolored, corn::silkcut}) CHECK(std::abs(to[c] - flips / 3.0) < 4 * std::sqrt(flips / 3.0));
}

TEST_CASE("missing ground truth is an error") {
  auto f = fixture(3, true);
  f.batch.items.push_back({"stranger", 0, 0.1});
  CHECK_THROWS_WITH(simulated_annotate(f.batch, f.oracle), doctest::Contains("stranger"));
}

TEST_CASE("config validation") {
  OracleConfig o;
  o.noise_rate = 1.0;
  CHECK_THROWS(o.validate());
  o.noise_rate = -0.1;
  CHECK_THROWS(o.validate());
  o.noise_rate = 0.0;
  o.base_ms = -1;
  CHECK_THROWS(o.validate());
}

TEST_CASE("ground truth from a dataset") {
  const auto ds = synthetic::make_solid_dataset(std::vector<int>{2, 1, 0, 3}, 32, 1, "o");
  const auto o = OracleConfig::from_dataset(ds);
  CHECK(o.ground_truth.size() == 6);
  for (const auto& r : ds) CHECK(o.ground_truth.at(r.id) == *r.label);
}
