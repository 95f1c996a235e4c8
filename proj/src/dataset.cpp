#include "seedloop/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "seedloop/rng.hpp"

namespace seedloop {

using ordered_json = nlohmann::ordered_json;

bool ImageRecord::same_metadata(const ImageRecord& o) const {
  return id == o.id && view == o.view && source == o.source && label == o.label && path == o.path &&
         pair_id == o.pair_id && cycle_added == o.cycle_added;
}

Dataset::Dataset(std::string name, LabelSet labels, std::vector<ImageRecord> records, std::filesystem::path root)
    : name_(std::move(name)), labels_(std::move(labels)), root_(std::move(root)), records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.id.empty()) throw DatasetError("record with empty id");
    if (i > 0 && records_[i - 1].id == r.id) throw DatasetError("duplicate id '" + r.id + "'");
    if (r.label && (*r.label < 0 || static_cast<std::size_t>(*r.label) >= labels_.size()))
      throw DatasetError("record '" + r.id + "' has a label outside the label set");
    if (r.source == Source::generated && !r.label)
      throw DatasetError("generated record '" + r.id + "' has no conditioning label");
  }
}

const ImageRecord* Dataset::find(std::string_view id) const {
  auto it = std::lower_bound(records_.begin(), records_.end(), id,
                             [](const ImageRecord& r, std::string_view v) { return r.id < v; });
  return it != records_.end() && it->id == id ? &*it : nullptr;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

Dataset Dataset::with_records(std::vector<ImageRecord> records, std::string name) const {
  return Dataset(std::move(name), labels_, std::move(records), root_);
}

Dataset Dataset::renamed(std::string name) const {
  Dataset d = *this;
  d.name_ = std::move(name);
  return d;
}

bool Dataset::same_content(const Dataset& other) const {
  if (labels_ != other.labels_ || records_.size() != other.records_.size()) return false;
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (!records_[i].same_metadata(other.records_[i])) return false;
  return true;
}

void validate_pairs(const Dataset& dataset) {
  std::map<std::string, std::vector<const ImageRecord*>> groups;
  for (const auto& r : dataset)
    if (r.pair_id) groups[*r.pair_id].push_back(&r);
  for (const auto& [pid, members] : groups) {
    if (members.size() != 2)
      throw DatasetError("pair '" + pid + "' has " + std::to_string(members.size()) + " records, expected 2");
    if (members[0]->view == members[1]->view)
      throw DatasetError("pair '" + pid + "' does not link a top view to a bottom view");
  }
}

std::shared_ptr<const Image> resolve_image(const Dataset& dataset, const ImageRecord& record) {
  if (record.pixels) return record.pixels;
  if (record.path.empty()) throw DatasetError("record '" + record.id + "' has neither pixels nor a path");
  std::filesystem::path p(record.path);
  if (p.is_relative() && !dataset.root().empty()) p = dataset.root() / p;
  try {
    return std::make_shared<const Image>(read_png(p));
  } catch (const std::exception& e) {
    throw DatasetError("record '" + record.id + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Statistics, splits, balancing

std::int64_t ClassStats::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

ClassStats class_stats_from_counts(std::vector<std::int64_t> counts) {
  ClassStats s;
  s.counts = std::move(counts);
  const auto total = s.total();
  s.fractions.assign(s.counts.size(), 0.0);
  if (total > 0)
    for (std::size_t c = 0; c < s.counts.size(); ++c)
      s.fractions[c] = static_cast<double>(s.counts[c]) / static_cast<double>(total);
  return s;
}

ClassStats class_stats(const Dataset& dataset, bool labeled_only) {
  std::vector<std::int64_t> counts(dataset.labels().size(), 0);
  std::int64_t unlabeled = 0;
  for (const auto& r : dataset) {
    if (r.label) ++counts[static_cast<std::size_t>(*r.label)];
    else ++unlabeled;
  }
  ClassStats s = class_stats_from_counts(counts);
  if (!labeled_only && unlabeled > 0) {
    // Unlabeled records enlarge the denominator without belonging to a class.
    const double total = static_cast<double>(s.total() + unlabeled);
    for (std::size_t c = 0; c < counts.size(); ++c) s.fractions[c] = static_cast<double>(counts[c]) / total;
  }
  return s;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw std::invalid_argument("train_fraction must be in (0, 1]");
  std::vector<std::vector<const ImageRecord*>> by_class(dataset.labels().size());
  for (const auto& r : dataset) {
    if (!r.label) throw DatasetError("unlabeled record in stratified split");
    by_class[static_cast<std::size_t>(*r.label)].push_back(&r);
  }
  Rng rng(seed);
  std::vector<ImageRecord> train, val;
  for (auto& members : by_class) {
    seeded_shuffle(std::span(members), rng);
    // round half up; the epsilon absorbs products like 0.7 * 5 = 3.4999999999999996
    const auto n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(members.size()) + 0.5 + 1e-9));
    for (std::size_t i = 0; i < members.size(); ++i) (i < n_train ? train : val).push_back(*members[i]);
  }
  return {dataset.with_records(std::move(train), dataset.name() + "-train"),
          dataset.with_records(std::move(val), dataset.name() + "-val")};
}

std::int64_t BalancingPlan::total_to_generate() const {
  std::int64_t t = 0;
  for (auto v : to_generate) t += v;
  return t;
}

BalancingPlan balancing_plan(const ClassStats& stats, BalancingTarget target) {
  if (stats.counts.empty()) throw std::invalid_argument("balancing plan needs class counts");
  const auto max_count = *std::max_element(stats.counts.begin(), stats.counts.end());
  if (max_count <= 0) throw std::invalid_argument("balancing plan needs at least one non-empty class");
  BalancingPlan plan;
  plan.target_per_class = max_count;
  if (const auto* e = std::get_if<ExplicitTarget>(&target)) {
    if (e->per_class < max_count)
      throw std::invalid_argument("explicit balancing target " + std::to_string(e->per_class) +
                                  " is below the largest class count " + std::to_string(max_count));
    plan.target_per_class = e->per_class;
  }
  for (auto c : stats.counts) plan.to_generate.push_back(plan.target_per_class - c);
  return plan;
}

// ---------------------------------------------------------------------------
// Manifest I/O

std::string manifest_line(const Dataset& dataset, const ImageRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["view"] = std::string(to_string(r.view));
  j["source"] = std::string(to_string(r.source));
  j["label"] = r.label ? ordered_json(dataset.labels().name(*r.label)) : ordered_json(nullptr);
  j["path"] = r.path;
  j["pair_id"] = r.pair_id ? ordered_json(*r.pair_id) : ordered_json(nullptr);
  j["cycle_added"] = r.cycle_added ? ordered_json(*r.cycle_added) : ordered_json(nullptr);
  return j.dump();
}

ImageRecord parse_manifest_line(std::string_view line, const LabelSet& labels) {
  const auto j = ordered_json::parse(line);
  if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
  ImageRecord r;
  r.id = j.at("id").get<std::string>();
  r.view = parse_view(j.at("view").get<std::string>());
  r.source = parse_source(j.at("source").get<std::string>());
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) r.label = labels.parse(it->get<std::string>());
  if (auto it = j.find("path"); it != j.end() && !it->is_null()) r.path = it->get<std::string>();
  if (auto it = j.find("pair_id"); it != j.end() && !it->is_null()) r.pair_id = it->get<std::string>();
  if (auto it = j.find("cycle_added"); it != j.end() && !it->is_null()) {
    const auto v = it->get<int>();
    if (v < 0) throw std::invalid_argument("cycle_added must be non-negative");
    r.cycle_added = v;
  }
  return r;
}

Dataset load_manifest(const std::filesystem::path& path, const LabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open manifest '" + path.string() + "'");
  std::vector<ImageRecord> records;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ImageRecord r;
    try {
      r = parse_manifest_line(line, labels);
    } catch (const std::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": malformed manifest line: " + e.what());
    }
    if (!seen.insert(r.id).second) throw DatasetError("duplicate id '" + r.id + "' in manifest " + path.string());
    records.push_back(std::move(r));
  }
  return Dataset(path.stem().string(), labels, std::move(records), path.parent_path());
}

void save_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write manifest '" + path.string() + "'");
  for (const auto& r : dataset) out << manifest_line(dataset, r) << '\n';
  if (!out) throw DatasetError("write failed for manifest '" + path.string() + "'");
}

Dataset merge(const Dataset& a, const Dataset& b, std::string name) {
  if (a.labels() != b.labels()) throw DatasetError("cannot merge datasets with different label sets");
  std::vector<ImageRecord> records(a.records());
  records.insert(records.end(), b.records().begin(), b.records().end());
  return a.with_records(std::move(records), std::move(name));
}

Dataset select(const Dataset& dataset, const std::vector<std::string>& ids, bool keep, std::string name) {
  std::set<std::string_view> wanted(ids.begin(), ids.end());
  std::vector<ImageRecord> out;
  for (const auto& r : dataset)
    if (wanted.contains(r.id) == keep) out.push_back(r);
  return dataset.with_records(std::move(out), std::move(name));
}

} // namespace seedloop
