#pragma once

// Append-only label journal: one JSON object per line, one line per label.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seedloop/labels.hpp"

namespace seedloop {

struct LabelEvent {
  std::int64_t timestamp_ms = 0;  ///< UTC
  std::string image_id;
  ClassIndex assigned_label = 0;
  ClassIndex suggested_label = 0;
  bool accepted_suggestion = false;
  std::string annotator_id;
  int cycle = 0;
  std::int64_t elapsed_ms = 0;

  bool operator==(const LabelEvent&) const = default;

  /// Fills accepted_suggestion from the two labels.
  static LabelEvent make(std::int64_t timestamp_ms, std::string image_id, ClassIndex assigned, ClassIndex suggested,
                         std::string annotator_id, int cycle, std::int64_t elapsed_ms);

  nlohmann::ordered_json to_json(const LabelSet& labels) const;
  static LabelEvent from_json(const nlohmann::json& j, const LabelSet& labels);
};

std::int64_t now_utc_ms();

class JournalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Single writer. Each append is flushed and fsync'd before returning.
class JournalWriter {
public:
  JournalWriter(const std::filesystem::path& path, LabelSet labels);
  ~JournalWriter();
  JournalWriter(const JournalWriter&) = delete;
  JournalWriter& operator=(const JournalWriter&) = delete;

  void append(const LabelEvent& event);
  /// All-or-nothing at the write level: one write call, one fsync.
  void append(std::span<const LabelEvent> events);

  const std::filesystem::path& path() const { return path_; }

private:
  void write_all(const std::string& data);

  std::filesystem::path path_;
  LabelSet labels_;
  int fd_ = -1;
};

struct JournalReplay {
  std::vector<LabelEvent> events;
  bool truncated = false;           ///< last line was incomplete or unparseable and was dropped
  std::optional<std::size_t> bad_line;  ///< 1-based line number of the dropped line
};

/// Events in write order. Only the final line may be damaged; damage earlier
/// in the file throws JournalError. A missing file replays as empty.
JournalReplay journal_replay(const std::filesystem::path& path, const LabelSet& labels);

/// Truncates the file to the end of its last complete line.
void journal_repair(const std::filesystem::path& path, const JournalReplay& replay);

} // namespace seedloop
