#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "seedloop/journal.hpp"

using namespace seedloop;
namespace fs = std::filesystem;

namespace {

fs::path fresh(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("seedloop_journal_" + name + ".jsonl");
  fs::remove(p);
  return p;
}

LabelEvent ev(int i, ClassIndex assigned = corn::pure, ClassIndex suggested = corn::pure) {
  return LabelEvent::make(1700000000000 + i, "img-" + std::to_string(i), assigned, suggested, "ann", i / 3, 800 + i);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("event json uses label names and keeps the acceptance invariant") {
  const auto ls = LabelSet::corn();
  const auto e = ev(1, corn::silkcut, corn::pure);
  CHECK_FALSE(e.accepted_suggestion);
  CHECK(ev(2).accepted_suggestion);
  const auto j = e.to_json(ls);
  CHECK(j["assigned_label"] == "silkcut");
  CHECK(j["suggested_label"] == "pure");
  CHECK(LabelEvent::from_json(j, ls) == e);

  auto bad = j;
  bad["accepted_suggestion"] = true;
  CHECK_THROWS(LabelEvent::from_json(bad, ls));
  bad = j;
  bad["elapsed_ms"] = -1;
  CHECK_THROWS(LabelEvent::from_json(bad, ls));
  bad = j;
  bad["assigned_label"] = "cracked";
  CHECK_THROWS(LabelEvent::from_json(bad, ls));
}

TEST_CASE("append then replay") {
  const auto path = fresh("roundtrip");
  const auto ls = LabelSet::corn();
  CHECK(journal_replay(path, ls).events.empty());
  {
    JournalWriter w(path, ls);
    w.append(ev(0));
    const std::vector<LabelEvent> more{ev(1, corn::broken, corn::pure), ev(2), ev(3, corn::silkcut, corn::discolored)};
    w.append(more);
  }
  {
    JournalWriter w(path, ls);
    w.append(ev(4));
  }
  const auto r = journal_replay(path, ls);
  CHECK_FALSE(r.truncated);
  REQUIRE(r.events.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(r.events[i].image_id == "img-" + std::to_string(i));
  CHECK(r.events[1] == ev(1, corn::broken, corn::pure));
}

TEST_CASE("truncated final line is dropped and reported") {
  const auto path = fresh("truncated");
  const auto ls = LabelSet::corn();
  {
    JournalWriter w(path, ls);
    for (int i = 0; i < 4; ++i) w.append(ev(i));
  }
  const auto full = slurp(path);
  fs::resize_file(path, full.size() - 17);

  const auto r = journal_replay(path, ls);
  CHECK(r.truncated);
  CHECK(r.bad_line == 4u);
  CHECK(r.events.size() == 3);

  journal_repair(path, r);
  const auto repaired = journal_replay(path, ls);
  CHECK_FALSE(repaired.truncated);
  CHECK(repaired.events.size() == 3);
  CHECK(slurp(path).back() == '\n');

  {
    JournalWriter w(path, ls);
    w.append(ev(9));
  }
  CHECK(journal_replay(path, ls).events.size() == 4);
}

TEST_CASE("complete but unparseable final line counts as truncation") {
  const auto path = fresh("garbage_tail");
  const auto ls = LabelSet::corn();
  {
    JournalWriter w(path, ls);
    w.append(ev(0));
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"timestamp\":\n";
  }
  const auto r = journal_replay(path, ls);
  CHECK(r.truncated);
  CHECK(r.events.size() == 1);
  journal_repair(path, r);
  CHECK(slurp(path) == ev(0).to_json(ls).dump() + "\n");
}

TEST_CASE("damage before the final line is an error") {
  const auto path = fresh("corrupt_middle");
  const auto ls = LabelSet::corn();
  {
    std::ofstream out(path);
    out << ev(0).to_json(ls).dump() << "\n" << "oops\n" << ev(1).to_json(ls).dump() << "\n";
  }
  CHECK_THROWS_WITH_AS(journal_replay(path, ls), doctest::Contains(":2:"), JournalError);
}

TEST_CASE("timestamps are utc milliseconds") {
  const auto now = now_utc_ms();
  CHECK(now > 1600000000000);
  CHECK(now < 4100000000000);
}
