#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "seedloop/dataset.hpp"
#include "seedloop/rng.hpp"

using namespace seedloop;
namespace fs = std::filesystem;

namespace {

Dataset counted(std::vector<int> per_class, std::string prefix = "r") {
  std::vector<ImageRecord> recs;
  for (int c = 0; c < static_cast<int>(per_class.size()); ++c)
    for (int i = 0; i < per_class[c]; ++i) {
      ImageRecord r;
      r.id = prefix + std::to_string(c) + "-" + std::to_string(i);
      r.label = c;
      r.path = r.id + ".png";
      recs.push_back(r);
    }
  return Dataset("d", LabelSet::corn(), recs);
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("seedloop_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

} // namespace

TEST_CASE("label set canonical order and purity collapse") {
  const auto ls = LabelSet::corn();
  CHECK(ls.names() == std::vector<std::string>{"broken", "discolored", "pure", "silkcut"});
  CHECK(ls.parse("silkcut") == corn::silkcut);
  CHECK_THROWS_AS(ls.parse("cracked"), std::invalid_argument);
  CHECK(physical_purity(ls, corn::pure) == Purity::pure);
  CHECK(physical_purity(ls, corn::broken) == Purity::impure);
  CHECK(physical_purity(ls, corn::silkcut) == Purity::impure);
  CHECK(physical_purity(ls, corn::discolored) == Purity::impure);
}

TEST_CASE("class stats on the primary corn counts") {
  const auto s = class_stats_from_counts({5670, 3114, 7267, 1751});
  CHECK(s.total() == 17802);
  CHECK(s.fractions[0] == doctest::Approx(0.3185).epsilon(5e-4));
  CHECK(s.fractions[1] == doctest::Approx(0.1749).epsilon(5e-4));
  CHECK(s.fractions[2] == doctest::Approx(0.4082).epsilon(5e-4));
  CHECK(s.fractions[3] == doctest::Approx(0.0984).epsilon(5e-4));
  // published as 32%, 17.4%, 40.8%, 09.8% (truncated)
  CHECK(std::abs(s.fractions[0] - 0.32) < 0.005);
  CHECK(std::floor(s.fractions[1] * 1000) == 174);
  CHECK(std::floor(s.fractions[2] * 1000) == 408);
  CHECK(std::floor(s.fractions[3] * 1000) == 98);
}

TEST_CASE("class stats edge cases") {
  const auto empty = class_stats(Dataset{});
  CHECK(empty.counts == std::vector<std::int64_t>{0, 0, 0, 0});
  CHECK(empty.fractions == std::vector<double>{0, 0, 0, 0});
  const auto uniform = class_stats(counted({1, 1, 1, 1}));
  for (double f : uniform.fractions) CHECK(f == 0.25);

  auto recs = counted({2, 0, 0, 0}).records();
  recs[0].label.reset();
  const Dataset partial("p", LabelSet::corn(), recs);
  CHECK(class_stats(partial).total() == 1);
  CHECK(class_stats(partial).fractions[0] == 1.0);
  CHECK(class_stats(partial, false).fractions[0] == 0.5);
}

TEST_CASE("class stats fractions sum to one") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> per(4);
    for (auto& n : per) n = static_cast<int>(uniform_index(rng, 30));
    if (per[0] + per[1] + per[2] + per[3] == 0) per[2] = 1;
    const auto s = class_stats(counted(per));
    double sum = 0;
    for (double f : s.fractions) sum += f;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("stratified split rounds half up per class") {
  const auto ds = counted({32, 17, 40, 11});
  const auto [train, val] = stratified_split(ds, 0.7, 3);
  CHECK(class_stats(train).counts == std::vector<std::int64_t>{22, 12, 28, 8});
  CHECK(class_stats(val).counts == std::vector<std::int64_t>{10, 5, 12, 3});

  const auto [all, none] = stratified_split(ds, 1.0, 3);
  CHECK(all.size() == ds.size());
  CHECK(none.empty());

  const auto [train2, val2] = stratified_split(ds, 0.7, 3);
  CHECK(train2.ids() == train.ids());
  CHECK(val2.ids() == val.ids());
  const auto [train3, val3] = stratified_split(ds, 0.7, 4);
  CHECK(train3.ids() != train.ids());
}

TEST_CASE("stratified split partitions the input") {
  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    std::vector<int> per(4);
    for (auto& n : per) n = static_cast<int>(uniform_index(rng, 25));
    const auto ds = counted(per);
    const double frac = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
    const auto [train, val] = stratified_split(ds, frac, t);
    CHECK(train.size() + val.size() == ds.size());
    std::set<std::string> seen;
    for (const auto& r : train) seen.insert(r.id);
    for (const auto& r : val) CHECK(seen.insert(r.id).second);
    CHECK(seen.size() == ds.size());
  }
}

TEST_CASE("stratified split rejects unlabeled records") {
  auto recs = counted({3, 3, 3, 3}).records();
  recs[4].label.reset();
  const Dataset ds("u", LabelSet::corn(), recs);
  CHECK_THROWS_WITH_AS(stratified_split(ds, 0.5, 0), doctest::Contains("unlabeled record in stratified split"),
                       DatasetError);
}

TEST_CASE("balancing plan") {
  const auto plan = balancing_plan(class_stats_from_counts({3969, 2180, 5087, 1226}));
  CHECK(plan.target_per_class == 5087);
  CHECK(plan.to_generate == std::vector<std::int64_t>{1118, 2907, 0, 3861});
  CHECK(plan.total_to_generate() == 7886);

  const auto flat = balancing_plan(class_stats_from_counts({1000, 1000, 1000, 1000}));
  CHECK(flat.to_generate == std::vector<std::int64_t>{0, 0, 0, 0});

  const auto explicit_plan = balancing_plan(class_stats_from_counts({10, 4, 7, 1}), ExplicitTarget{12});
  CHECK(explicit_plan.to_generate == std::vector<std::int64_t>{2, 8, 5, 11});
  CHECK_THROWS(balancing_plan(class_stats_from_counts({10, 4, 7, 1}), ExplicitTarget{9}));
}

TEST_CASE("balancing plan brings every class to the target") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::int64_t> counts(4);
    for (auto& n : counts) n = static_cast<std::int64_t>(uniform_index(rng, 5000));
    const auto plan = balancing_plan(class_stats_from_counts(counts));
    for (int c = 0; c < 4; ++c) {
      CHECK(plan.to_generate[c] >= 0);
      CHECK(counts[c] + plan.to_generate[c] == plan.target_per_class);
    }
  }
}

TEST_CASE("manifest round trip") {
  const auto dir = temp_dir("manifest");
  std::vector<ImageRecord> recs(3);
  recs[0] = {"s1", View::top, Source::captured, corn::pure, "a/s1.png", "p1", std::nullopt, nullptr};
  recs[1] = {"s2", View::bottom, Source::captured, corn::pure, "a/s2.png", "p1", 2, nullptr};
  recs[2] = {"g1", View::top, Source::generated, corn::silkcut, "gen/g1.png", std::nullopt, std::nullopt, nullptr};
  const Dataset ds("m", LabelSet::corn(), recs, dir);
  validate_pairs(ds);
  save_manifest(ds, dir / "m.jsonl");
  const auto back = load_manifest(dir / "m.jsonl");
  CHECK(back.same_content(ds));
  save_manifest(back, dir / "m2.jsonl");
  std::ifstream a(dir / "m.jsonl"), b(dir / "m2.jsonl");
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("manifest errors") {
  const auto dir = temp_dir("manifest_err");
  {
    std::ofstream(dir / "empty.jsonl");
  }
  CHECK(load_manifest(dir / "empty.jsonl").empty());

  {
    std::ofstream out(dir / "dup.jsonl");
    out << R"({"id":"s1","view":"top","source":"captured","label":"pure","path":"x.png"})" << '\n'
        << R"({"id":"s1","view":"top","source":"captured","label":"pure","path":"y.png"})" << '\n';
  }
  CHECK_THROWS_WITH_AS(load_manifest(dir / "dup.jsonl"), doctest::Contains("s1"), DatasetError);

  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"id":"s1","view":"top","source":"captured","label":"pure","path":"x.png"})" << '\n'
        << "{not json" << '\n';
  }
  CHECK_THROWS_WITH_AS(load_manifest(dir / "bad.jsonl"), doctest::Contains(":2:"), DatasetError);

  CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl"), DatasetError);
}

TEST_CASE("dataset invariants") {
  std::vector<ImageRecord> recs(2);
  recs[0].id = "b";
  recs[1].id = "a";
  const Dataset ds("x", LabelSet::corn(), recs);
  CHECK(ds[0].id == "a");

  recs[1].id = "b";
  CHECK_THROWS_AS(Dataset("x", LabelSet::corn(), recs), DatasetError);

  std::vector<ImageRecord> gen(1);
  gen[0].id = "g";
  gen[0].source = Source::generated;
  CHECK_THROWS_AS(Dataset("x", LabelSet::corn(), gen), DatasetError);
}

TEST_CASE("pair validation") {
  std::vector<ImageRecord> recs(2);
  recs[0].id = "t";
  recs[0].pair_id = "p";
  recs[1].id = "u";
  recs[1].pair_id = "p";
  CHECK_THROWS(validate_pairs(Dataset("x", LabelSet::corn(), recs)));
  recs[1].view = View::bottom;
  CHECK_NOTHROW(validate_pairs(Dataset("x", LabelSet::corn(), recs)));
  recs.pop_back();
  CHECK_THROWS(validate_pairs(Dataset("x", LabelSet::corn(), recs)));
}

TEST_CASE("merge and select") {
  const auto a = counted({2, 0, 0, 0}, "a");
  const auto b = counted({0, 2, 0, 0}, "b");
  const auto m = merge(a, b, "m");
  CHECK(m.size() == 4);
  CHECK_THROWS_AS(merge(a, a, "dup"), DatasetError);
  const auto kept = select(m, {"a0-0", "b1-1"}, true, "k");
  CHECK(kept.ids() == std::vector<std::string>{"a0-0", "b1-1"});
  CHECK(select(m, {"a0-0"}, false, "r").size() == 3);
}
