#include "seedloop/journal.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace seedloop {

LabelEvent LabelEvent::make(std::int64_t timestamp_ms, std::string image_id, ClassIndex assigned, ClassIndex suggested,
                            std::string annotator_id, int cycle, std::int64_t elapsed_ms) {
  LabelEvent e;
  e.timestamp_ms = timestamp_ms;
  e.image_id = std::move(image_id);
  e.assigned_label = assigned;
  e.suggested_label = suggested;
  e.accepted_suggestion = assigned == suggested;
  e.annotator_id = std::move(annotator_id);
  e.cycle = cycle;
  e.elapsed_ms = elapsed_ms;
  return e;
}

nlohmann::ordered_json LabelEvent::to_json(const LabelSet& labels) const {
  nlohmann::ordered_json j;
  j["timestamp"] = timestamp_ms;
  j["image_id"] = image_id;
  j["assigned_label"] = labels.name(assigned_label);
  j["suggested_label"] = labels.name(suggested_label);
  j["accepted_suggestion"] = accepted_suggestion;
  j["annotator_id"] = annotator_id;
  j["cycle"] = cycle;
  j["elapsed_ms"] = elapsed_ms;
  return j;
}

LabelEvent LabelEvent::from_json(const nlohmann::json& j, const LabelSet& labels) {
  LabelEvent e;
  e.timestamp_ms = j.at("timestamp").get<std::int64_t>();
  e.image_id = j.at("image_id").get<std::string>();
  e.assigned_label = labels.parse(j.at("assigned_label").get<std::string>());
  e.suggested_label = labels.parse(j.at("suggested_label").get<std::string>());
  e.accepted_suggestion = j.at("accepted_suggestion").get<bool>();
  e.annotator_id = j.at("annotator_id").get<std::string>();
  e.cycle = j.at("cycle").get<int>();
  e.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  if (e.image_id.empty()) throw std::invalid_argument("empty image_id");
  if (e.elapsed_ms < 0 || e.cycle < 0) throw std::invalid_argument("negative elapsed_ms or cycle");
  if (e.accepted_suggestion != (e.assigned_label == e.suggested_label))
    throw std::invalid_argument("accepted_suggestion disagrees with the labels");
  return e;
}

std::int64_t now_utc_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

JournalWriter::JournalWriter(const std::filesystem::path& path, LabelSet labels)
    : path_(path), labels_(std::move(labels)) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw JournalError("cannot open journal " + path.string() + ": " + std::strerror(errno));
}

JournalWriter::~JournalWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void JournalWriter::write_all(const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd_, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw JournalError("journal write failed: " + std::string(std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw JournalError("journal fsync failed: " + std::string(std::strerror(errno)));
}

void JournalWriter::append(const LabelEvent& event) { append(std::span<const LabelEvent>(&event, 1)); }

void JournalWriter::append(std::span<const LabelEvent> events) {
  if (events.empty()) return;
  std::string data;
  for (const auto& e : events) {
    data += e.to_json(labels_).dump();
    data += '\n';
  }
  write_all(data);
}

JournalReplay journal_replay(const std::filesystem::path& path, const LabelSet& labels) {
  JournalReplay out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw JournalError("cannot read journal " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const std::size_t nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    pos = complete ? nl + 1 : text.size();
    const bool last = pos >= text.size();
    if (line.empty() && complete) continue;
    try {
      if (!complete) throw std::invalid_argument("unterminated line");
      out.events.push_back(LabelEvent::from_json(nlohmann::json::parse(line), labels));
    } catch (const std::exception& e) {
      if (!last) throw JournalError(path.string() + ":" + std::to_string(line_no) + ": corrupt journal line");
      out.truncated = true;
      out.bad_line = line_no;
    }
  }
  return out;
}

void journal_repair(const std::filesystem::path& path, const JournalReplay& replay) {
  if (!replay.truncated) return;
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const std::size_t end = text.rfind('\n', text.size() >= 2 ? text.size() - 2 : 0);
  std::size_t keep = 0;
  if (text.back() != '\n') {
    const std::size_t nl = text.rfind('\n');
    keep = nl == std::string::npos ? 0 : nl + 1;
  } else {
    keep = end == std::string::npos ? 0 : end + 1;
  }
  in.close();
  std::filesystem::resize_file(path, keep);
}

} // namespace seedloop
