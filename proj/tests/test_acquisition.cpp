#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "seedloop/acquisition.hpp"
#include "seedloop/synthetic.hpp"

using namespace seedloop;

namespace {

ProbVector with_entropy_rank(double peak) {
  const double rest = (1.0 - peak) / 3.0;
  return ProbVector({peak, rest, rest, rest});
}

PoolItem item(std::string id, Point f, double peak) { return PoolItem::make(std::move(id), std::move(f), with_entropy_rank(peak)); }

PoolItem with_entropy(std::string id, double h) {
  PoolItem it = item(id, {0.0}, 1.0);
  it.entropy = h;
  return it;
}

std::vector<std::string> ids_of(const std::vector<PoolItem>& items) {
  std::vector<std::string> out;
  for (const auto& it : items) out.push_back(it.id);
  return out;
}

ProbVector random_simplex(Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(4);
  double s = 0;
  for (auto& v : p) s += (v = e(rng));
  for (auto& v : p) v /= s;
  return ProbVector(p);
}

} // namespace

TEST_CASE("entropy examples") {
  CHECK(predictive_entropy(ProbVector({0.25, 0.25, 0.25, 0.25})) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(predictive_entropy(ProbVector({1, 0, 0, 0})) == 0.0);
  CHECK(predictive_entropy(ProbVector({0.5, 0.5, 0, 0})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("entropy is maximal at the uniform distribution and zero only on one-hot") {
  Rng rng(3);
  const double max_h = std::log(4.0);
  for (int t = 0; t < 1000; ++t) {
    const auto p = random_simplex(rng);
    const double h = predictive_entropy(p);
    CHECK(h >= 0.0);
    CHECK(h < max_h);
    CHECK(h > 0.0);
  }
  for (int c = 0; c < 4; ++c) {
    std::vector<double> v(4, 0.0);
    v[c] = 1.0;
    CHECK(predictive_entropy(ProbVector(v)) == 0.0);
  }
}

TEST_CASE("top k entropy") {
  const std::vector<PoolItem> pool{with_entropy("a", 0.9), with_entropy("b", 0.9), with_entropy("c", 0.5),
                                   with_entropy("d", 0.1), with_entropy("e", 0.7)};
  CHECK(ids_of(top_k_entropy(pool, 3)) == std::vector<std::string>{"a", "b", "e"});
  CHECK(ids_of(top_k_entropy({pool[1], pool[0], pool[4]}, 3)) == std::vector<std::string>{"a", "b", "e"});
  CHECK(top_k_entropy(pool, 0).empty());
  CHECK(ids_of(top_k_entropy(pool, 9)) == std::vector<std::string>{"a", "b", "e", "c", "d"});
}

TEST_CASE("pool item entropy is cached from its probabilities") {
  const auto it = item("x", {1.0}, 0.4);
  CHECK(std::abs(it.entropy - predictive_entropy(it.probs)) < 1e-9);
}

TEST_CASE("nearest to centers") {
  const std::vector<PoolItem> cands{item("p", {0, 0}, 0.5), item("q", {10, 0}, 0.5), item("r", {0, 10}, 0.5)};
  CHECK(ids_of(nearest_to_centers(cands, {{0, 10}, {0, 0}})) == std::vector<std::string>{"r", "p"});

  // both centres are nearest to p; the second falls through to its next-nearest
  const auto got = nearest_to_centers(cands, {{1, 1}, {2, 1}});
  CHECK(ids_of(got) == std::vector<std::string>{"p", "q"});

  CHECK(ids_of(nearest_to_centers(cands, {{0, 0}, {0, 0}, {0, 0}, {0, 0}})).size() == 3);

  // equidistant candidates resolve by id
  const std::vector<PoolItem> tie{item("z", {1, 0}, 0.5), item("y", {-1, 0}, 0.5)};
  CHECK(ids_of(nearest_to_centers(tie, {{0, 0}})) == std::vector<std::string>{"y"});
}

TEST_CASE("nearest to centers agrees with exhaustive sequential assignment") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<PoolItem> cands;
    for (int i = 0; i < 3; ++i) cands.push_back(item("c" + std::to_string(i), {u(rng), u(rng)}, 0.5));
    std::vector<Point> centers;
    for (int i = 0; i < 3; ++i) centers.push_back({u(rng), u(rng)});
    std::vector<std::string> expect;
    std::set<std::string> taken;
    for (const auto& c : centers) {
      double best = std::numeric_limits<double>::infinity();
      std::string pick;
      for (const auto& it : cands) {
        if (taken.contains(it.id)) continue;
        const double d = squared_distance(c, it.features);
        if (d < best) best = d, pick = it.id;
      }
      taken.insert(pick);
      expect.push_back(pick);
    }
    CHECK(ids_of(nearest_to_centers(cands, centers)) == expect);
  }
}

TEST_CASE("six item fixture picks the nearest item of each top-entropy cluster") {
  // top four by entropy: a, b (left cluster), c, d (right cluster); e, f are confident
  const std::vector<PoolItem> pool{item("a", {0, 0}, 0.30), item("b", {1, 0}, 0.31), item("c", {20, 0}, 0.32),
                                   item("d", {22, 1}, 0.33), item("e", {0.4, 0}, 0.99), item("f", {21, 0}, 0.99)};
  AcquisitionConfig cfg;
  cfg.top_k = 4;
  cfg.batch_size = 2;
  const auto batch = select_batch(pool, cfg, 0);

  // brute force: best 2-partition of the four candidates, then nearest candidate per mean
  const auto top = top_k_entropy(pool, 4);
  std::vector<Point> pts;
  for (const auto& it : top) pts.push_back(it.features);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_assign;
  for (std::uint32_t mask = 1; mask < 8; ++mask) {
    std::vector<int> a{0, int(mask & 1u), int((mask >> 1) & 1u), int((mask >> 2) & 1u)};
    const double w = partition_wcss(pts, a, 2);
    if (w < best) best = w, best_assign = a;
  }
  std::set<std::string> expected;
  for (int k = 0; k < 2; ++k) {
    Point mean{0, 0};
    int n = 0;
    for (int i = 0; i < 4; ++i)
      if (best_assign[i] == k) mean[0] += pts[i][0], mean[1] += pts[i][1], ++n;
    mean[0] /= n, mean[1] /= n;
    expected.insert(nearest_to_centers(top, {mean})[0].id);
  }
  std::set<std::string> got;
  for (const auto& it : batch.items) got.insert(it.id);
  CHECK(got == expected);
  CHECK_FALSE(got.contains("e"));
  CHECK_FALSE(got.contains("f"));
}

TEST_CASE("entropy plus k-means spreads over clusters that top-entropy ignores") {
  // the most uncertain items all sit in cluster 0
  std::vector<PoolItem> pool;
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 5; ++i) {
      const double peak = c == 0 ? 0.26 + 0.001 * i : 0.4 + 0.01 * i;
      pool.push_back(item("c" + std::to_string(c) + "-" + std::to_string(i), {100.0 * c + i * 0.1, 0.0}, peak));
    }
  auto cluster_count = [](const AcquisitionBatch& b) {
    std::set<char> seen;
    for (const auto& it : b.items) seen.insert(it.id[1]);
    return seen.size();
  };
  AcquisitionConfig cfg;
  cfg.top_k = 20;
  cfg.batch_size = 4;
  CHECK(cluster_count(select_batch(pool, cfg, 0)) == 4);
  cfg.strategy = AcquisitionStrategy::top_entropy;
  CHECK(cluster_count(select_batch(pool, cfg, 0)) == 1);
}

TEST_CASE("random strategy is seeded") {
  std::vector<PoolItem> pool;
  for (int i = 0; i < 30; ++i) pool.push_back(item("r" + std::to_string(i), {double(i)}, 0.5));
  AcquisitionConfig cfg;
  cfg.top_k = 30;
  cfg.batch_size = 5;
  cfg.strategy = AcquisitionStrategy::random;
  const auto a = select_batch(pool, cfg, 1);
  CHECK(a.items == select_batch(pool, cfg, 1).items);
  CHECK(a.items.size() == 5);
  cfg.seed = 9;
  CHECK(a.items != select_batch(pool, cfg, 1).items);
}

TEST_CASE("config validation and serialization") {
  AcquisitionConfig cfg;
  cfg.top_k = 10;
  cfg.batch_size = 11;
  CHECK_THROWS(cfg.validate());
  cfg.batch_size = 3;
  cfg.strategy = AcquisitionStrategy::top_entropy;
  cfg.feature_source = FeatureSource::raw_pixels;
  const auto back = AcquisitionConfig::from_json(cfg.to_json());
  CHECK(back.top_k == 10);
  CHECK(back.batch_size == 3);
  CHECK(back.strategy == AcquisitionStrategy::top_entropy);
  CHECK(back.feature_source == FeatureSource::raw_pixels);
  CHECK_THROWS(parse_strategy("bald"));
}

TEST_CASE("acquire batch on a real model") {
  const auto pool = synthetic::make_seed_dataset(std::vector<int>{10, 10, 10, 10}, 3, "u");
  ModelSpec spec;
  const auto model = init_model(spec);
  AcquisitionConfig cfg;
  cfg.top_k = 20;
  cfg.batch_size = 6;
  const auto batch = acquire_batch(model, pool, cfg, 2);
  CHECK(batch.cycle == 2);
  REQUIRE(batch.items.size() == 6);
  CHECK(acquire_batch(model, pool, cfg, 2).items == batch.items);

  const auto probs = predict_proba(model, pool);
  std::vector<PoolItem> items;
  for (std::size_t i = 0; i < pool.size(); ++i) items.push_back(PoolItem::make(pool[i].id, {0.0}, probs[i]));
  std::set<std::string> top;
  for (const auto& it : top_k_entropy(items, 20)) top.insert(it.id);
  std::set<std::string> seen;
  for (const auto& it : batch.items) {
    CHECK(top.contains(it.id));
    CHECK(seen.insert(it.id).second);
    const auto* r = pool.find(it.id);
    REQUIRE(r);
    CHECK(it.suggested_label == probs[static_cast<std::size_t>(r - &pool[0])].argmax());
  }

  cfg.feature_source = FeatureSource::raw_pixels;
  CHECK(acquire_batch(model, pool, cfg).items.size() == 6);

  const auto tiny = synthetic::make_seed_dataset(std::vector<int>{1, 1, 1, 0}, 4, "t");
  cfg.top_k = 50;
  cfg.batch_size = 10;
  CHECK(acquire_batch(model, tiny, cfg).items.size() == 3);

  const auto json = batch.to_json(pool.labels());
  CHECK(AcquisitionBatch::from_json(json, pool.labels()).items == batch.items);
}
