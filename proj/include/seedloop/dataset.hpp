#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "seedloop/image.hpp"
#include "seedloop/labels.hpp"

namespace seedloop {

/// One seed crop. Pixels are either held in memory or referenced by `path`.
struct ImageRecord {
  std::string id;
  View view = View::top;
  Source source = Source::captured;
  std::optional<ClassIndex> label;
  std::string path;
  std::optional<std::string> pair_id;
  std::optional<int> cycle_added;
  std::shared_ptr<const Image> pixels;

  /// Compares the manifest-visible fields; in-memory pixels are not compared.
  bool same_metadata(const ImageRecord& other) const;
};

class DatasetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Immutable, id-sorted collection of records. Paths are resolved against
/// `root()` (the directory of the manifest the dataset came from).
class Dataset {
public:
  Dataset() : labels_(LabelSet::corn()) {}
  /// Sorts by id; throws DatasetError on duplicate ids, generated records
  /// without a label, or labels outside the label set.
  Dataset(std::string name, LabelSet labels, std::vector<ImageRecord> records,
          std::filesystem::path root = {});

  const std::string& name() const { return name_; }
  const LabelSet& labels() const { return labels_; }
  const std::filesystem::path& root() const { return root_; }
  const std::vector<ImageRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }
  const ImageRecord& operator[](std::size_t i) const { return records_[i]; }

  const ImageRecord* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::vector<std::string> ids() const;

  Dataset with_records(std::vector<ImageRecord> records, std::string name) const;
  Dataset renamed(std::string name) const;

  /// Equal ids, metadata, label set.
  bool same_content(const Dataset& other) const;

private:
  std::string name_;
  LabelSet labels_;
  std::filesystem::path root_;
  std::vector<ImageRecord> records_;
};

/// Throws unless every pair_id is shared by exactly two records with opposite
/// views. Subsets (splits, fragments) may legitimately break pairs, so this is
/// not enforced on construction.
void validate_pairs(const Dataset& dataset);

/// Loads the record's pixels (memory first, then root/path).
std::shared_ptr<const Image> resolve_image(const Dataset& dataset, const ImageRecord& record);

struct ClassStats {
  std::vector<std::int64_t> counts;
  std::vector<double> fractions;

  std::int64_t total() const;
};

ClassStats class_stats(const Dataset& dataset, bool labeled_only = true);
ClassStats class_stats_from_counts(std::vector<std::int64_t> counts);

/// Per class: train gets round_half_up(train_fraction * count) records picked
/// by a seeded shuffle; the rest go to validation.
std::pair<Dataset, Dataset> stratified_split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

struct MaxClassTarget {};
struct ExplicitTarget {
  std::int64_t per_class;
};
using BalancingTarget = std::variant<MaxClassTarget, ExplicitTarget>;

struct BalancingPlan {
  std::int64_t target_per_class = 0;
  std::vector<std::int64_t> to_generate;

  std::int64_t total_to_generate() const;
};

BalancingPlan balancing_plan(const ClassStats& stats, BalancingTarget target = MaxClassTarget{});

/// Reads one JSON object per line; see save_manifest for the keys.
Dataset load_manifest(const std::filesystem::path& path, const LabelSet& labels = LabelSet::corn());
void save_manifest(const Dataset& dataset, const std::filesystem::path& path);

std::string manifest_line(const Dataset& dataset, const ImageRecord& record);
ImageRecord parse_manifest_line(std::string_view line, const LabelSet& labels);

/// Union; throws DatasetError on duplicate ids.
Dataset merge(const Dataset& a, const Dataset& b, std::string name);
/// Records whose id is (or is not) in `ids`.
Dataset select(const Dataset& dataset, const std::vector<std::string>& ids, bool keep, std::string name);

} // namespace seedloop
