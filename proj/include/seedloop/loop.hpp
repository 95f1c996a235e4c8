#pragma once

// Active-learning cycle orchestration: train -> evaluate -> acquire ->
// annotate -> accumulate, with a fresh model every cycle. All state needed to
// resume lives in the run directory:
//
//   config.json        loop configuration
//   labeled0.jsonl     starting labeled set
//   unlabeled0.jsonl   starting pool (labels stripped)
//   val.jsonl          validation set
//   journal.jsonl      one LabelEvent per label, append-only
//   metrics.jsonl      one CycleRecord per finished cycle
//   pending.json       the batch awaiting labels, if any
//   images/            PNGs for records that only existed in memory

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seedloop/acquisition.hpp"
#include "seedloop/classifier.hpp"
#include "seedloop/dataset.hpp"
#include "seedloop/journal.hpp"
#include "seedloop/oracle.hpp"

namespace seedloop {

struct CycleRecord {
  int cycle = 0;
  double val_accuracy = 0.0;
  double annotation_seconds = 0.0;
  std::int64_t labels_added = 0;
  std::int64_t labeled_total = 0;

  bool operator==(const CycleRecord&) const = default;
  nlohmann::ordered_json to_json() const;
  static CycleRecord from_json(const nlohmann::json& j);
};

/// How annotation_seconds is measured: the sum of per-label elapsed_ms
/// (simulated annotators) or wall clock from batch served to final label.
enum class AnnotationTiming { simulated, wall_clock };

struct LoopConfig {
  ModelSpec model;
  TrainConfig train;
  AcquisitionConfig acquisition;
  std::uint64_t seed = 0;
  AnnotationTiming timing = AnnotationTiming::simulated;

  void validate() const;
  nlohmann::json to_json() const;
  static LoopConfig from_json(const nlohmann::json& j);
};

enum class Phase { idle, training, annotating };
std::string_view to_string(Phase p);

struct PendingBatch {
  AcquisitionBatch batch;
  double val_accuracy = 0.0;              ///< of the model that produced the batch
  std::optional<std::int64_t> served_ms;  ///< first time the batch was handed out
  std::map<std::string, LabelEvent> labeled;  ///< labels received so far, by id

  std::size_t remaining() const { return batch.items.size() - labeled.size(); }
};

struct LoopState {
  int cycle = 0;
  Dataset labeled;
  Dataset unlabeled;
  Dataset val;
  std::optional<Model> current_model;
  std::optional<PendingBatch> pending;
  std::vector<CycleRecord> history;
};

class LoopError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Submission for a cycle that is not the current one, or with no batch pending.
class StaleCycleError : public LoopError {
public:
  using LoopError::LoopError;
};

/// Submission naming an id outside the pending batch.
class UnknownItemError : public LoopError {
public:
  UnknownItemError(std::string id) : LoopError("id '" + id + "' is not in the pending batch"), id_(std::move(id)) {}
  const std::string& id() const { return id_; }

private:
  std::string id_;
};

struct LabelSubmission {
  std::string id;
  ClassIndex label = 0;
  std::int64_t elapsed_ms = 0;
};

struct SubmitResult {
  std::size_t accepted = 0;  ///< new labels; repeats of (cycle, id) are ignored
  std::optional<CycleRecord> completed;
};

class ActiveLearningRun {
public:
  /// Validates the inputs and creates `run_dir` (which must not already hold a run).
  static ActiveLearningRun start(const Dataset& labeled, const Dataset& unlabeled, const Dataset& val,
                                 const LoopConfig& config, const std::filesystem::path& run_dir);
  /// Rebuilds the state from the run directory; a damaged final journal line is dropped.
  static ActiveLearningRun resume(const std::filesystem::path& run_dir);

  const LoopState& state() const { return state_; }
  const LoopConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }
  Phase phase() const { return state_.pending ? Phase::annotating : Phase::idle; }
  bool journal_was_truncated() const { return journal_truncated_; }

  /// The model every cycle starts from.
  Model fresh_model() const { return init_model(config_.model); }

  struct Prepared {
    PendingBatch pending;
    Model model;
  };

  /// Reinitialize, train, evaluate and acquire; leaves a pending batch.
  /// Requires no pending batch and a non-empty pool.
  const PendingBatch& prepare_cycle();
  /// The read-only half of prepare_cycle; safe alongside other readers.
  Prepared compute_cycle() const;
  /// The writing half: installs a batch computed for the current cycle.
  const PendingBatch& commit_cycle(Prepared prepared);

  /// Records the first time the pending batch was handed to an annotator.
  void mark_served(std::int64_t now_ms);

  /// Journals new labels, then applies them. Completes the cycle once every
  /// batch item is labeled. Nothing is written if any id is invalid.
  SubmitResult submit_labels(int cycle, std::span<const LabelSubmission> labels, const std::string& annotator_id,
                             std::int64_t now_ms = now_utc_ms());

  /// Ends the cycle early: labels received so far are kept, the rest of the
  /// batch stays in the pool.
  CycleRecord abandon_pending(std::int64_t now_ms = now_utc_ms());

private:
  ActiveLearningRun() = default;

  CycleRecord complete_cycle(std::int64_t now_ms);
  void write_pending() const;

  LoopConfig config_;
  std::filesystem::path run_dir_;
  LoopState state_;
  std::unique_ptr<JournalWriter> journal_;
  bool journal_truncated_ = false;
};

/// One full cycle with a simulated annotator. Returns the cycle's record.
CycleRecord run_cycle(ActiveLearningRun& run, const OracleConfig& oracle);

/// The labeled ids at the start of `cycle`, rebuilt from the starting
/// manifest and the journal alone.
std::vector<std::string> replay_labeled_ids(const std::filesystem::path& run_dir, int cycle);

} // namespace seedloop
