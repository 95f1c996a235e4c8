#include "seedloop/loop.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace seedloop {

namespace {

const char* kConfigFile = "config.json";
const char* kLabeled0 = "labeled0.jsonl";
const char* kUnlabeled0 = "unlabeled0.jsonl";
const char* kVal = "val.jsonl";
const char* kJournal = "journal.jsonl";
const char* kMetrics = "metrics.jsonl";
const char* kPending = "pending.json";

void write_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    out << text;
    out.flush();
    if (!out) throw LoopError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoopError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_stem_for(const std::string& id) {
  std::string s = id;
  for (auto& ch : s)
    if (ch == '/' || ch == '\\' || ch == ':') ch = '_';
  return s;
}

// Gives every record a path resolvable from `run_dir`; pixels stay cached.
Dataset materialize(const Dataset& ds, const std::filesystem::path& run_dir, std::string name) {
  std::vector<ImageRecord> out;
  out.reserve(ds.size());
  for (const auto& r : ds) {
    ImageRecord copy = r;
    if (copy.path.empty()) {
      if (!r.pixels) throw DatasetError("record '" + r.id + "' has neither pixels nor a path");
      copy.path = "images/" + file_stem_for(r.id) + ".png";
      std::filesystem::create_directories(run_dir / "images");
      write_png(*r.pixels, run_dir / copy.path);
    } else if (std::filesystem::path(copy.path).is_relative()) {
      copy.path = std::filesystem::absolute(ds.root() / copy.path).lexically_normal().string();
    }
    out.push_back(std::move(copy));
  }
  return Dataset(std::move(name), ds.labels(), std::move(out), run_dir);
}

std::vector<CycleRecord> read_metrics(const std::filesystem::path& path) {
  std::vector<CycleRecord> out;
  if (!std::filesystem::exists(path)) return out;
  const std::string text = read_text(path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // partial final line
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty()) out.push_back(CycleRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out << line << '\n';
  out.flush();
  if (!out) throw LoopError("cannot append to " + path.string());
}

LabelSet read_label_set(const nlohmann::json& j) {
  return LabelSet(j.at("labels").get<std::vector<std::string>>(), j.at("pure_label").get<std::string>());
}

} // namespace

// ---------------------------------------------------------------------------

nlohmann::ordered_json CycleRecord::to_json() const {
  nlohmann::ordered_json j;
  j["cycle"] = cycle;
  j["val_accuracy"] = val_accuracy;
  j["annotation_seconds"] = annotation_seconds;
  j["labels_added"] = labels_added;
  j["labeled_total"] = labeled_total;
  return j;
}

CycleRecord CycleRecord::from_json(const nlohmann::json& j) {
  CycleRecord r;
  r.cycle = j.at("cycle").get<int>();
  r.val_accuracy = j.at("val_accuracy").get<double>();
  r.annotation_seconds = j.at("annotation_seconds").get<double>();
  r.labels_added = j.at("labels_added").get<std::int64_t>();
  r.labeled_total = j.at("labeled_total").get<std::int64_t>();
  return r;
}

void LoopConfig::validate() const {
  model.validate();
  train.validate();
  acquisition.validate();
}

nlohmann::json LoopConfig::to_json() const {
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"acquisition", acquisition.to_json()},
          {"seed", seed},
          {"timing", timing == AnnotationTiming::simulated ? "simulated" : "wall_clock"}};
}

LoopConfig LoopConfig::from_json(const nlohmann::json& j) {
  LoopConfig c;
  c.model = ModelSpec::from_json(j.at("model"));
  c.train = TrainConfig::from_json(j.at("train"));
  c.acquisition = AcquisitionConfig::from_json(j.at("acquisition"));
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto timing = j.value("timing", std::string("simulated"));
  if (timing == "simulated") c.timing = AnnotationTiming::simulated;
  else if (timing == "wall_clock") c.timing = AnnotationTiming::wall_clock;
  else throw std::invalid_argument("unknown timing '" + timing + "'");
  return c;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::training: return "training";
    case Phase::annotating: return "annotating";
  }
  return "?";
}

// ---------------------------------------------------------------------------

ActiveLearningRun ActiveLearningRun::start(const Dataset& labeled, const Dataset& unlabeled, const Dataset& val,
                                           const LoopConfig& config, const std::filesystem::path& run_dir) {
  config.validate();
  if (labeled.labels() != unlabeled.labels() || labeled.labels() != val.labels())
    throw LoopError("labeled, unlabeled and val use different label sets");
  if (static_cast<int>(labeled.labels().size()) != config.model.num_classes)
    throw LoopError("model class count does not match the label set");
  if (labeled.empty()) throw LoopError("labeled seed set is empty");
  if (val.empty()) throw LoopError("validation set is empty");
  for (const Dataset* ds : {&labeled, &val})
    for (const auto& r : *ds)
      if (!r.label) throw LoopError("record '" + r.id + "' in " + ds->name() + " has no label");

  std::vector<std::string> overlap;
  for (const auto& r : unlabeled)
    if (labeled.contains(r.id) || val.contains(r.id)) overlap.push_back(r.id);
  for (const auto& r : labeled)
    if (val.contains(r.id)) overlap.push_back(r.id);
  if (!overlap.empty()) {
    std::sort(overlap.begin(), overlap.end());
    overlap.erase(std::unique(overlap.begin(), overlap.end()), overlap.end());
    std::string msg = "ids appear in more than one set:";
    for (std::size_t i = 0; i < overlap.size() && i < 20; ++i) msg += " " + overlap[i];
    if (overlap.size() > 20) msg += " ... (" + std::to_string(overlap.size()) + " total)";
    throw LoopError(msg);
  }
  if (std::filesystem::exists(run_dir / kConfigFile))
    throw LoopError("run directory " + run_dir.string() + " already holds a run");
  std::filesystem::create_directories(run_dir);

  std::vector<ImageRecord> pool = unlabeled.records();
  for (auto& r : pool) r.label.reset();

  ActiveLearningRun run;
  run.config_ = config;
  run.run_dir_ = run_dir;
  run.state_.labeled = materialize(labeled, run_dir, "labeled");
  run.state_.unlabeled = materialize(unlabeled.with_records(std::move(pool), "unlabeled"), run_dir, "unlabeled");
  run.state_.val = materialize(val, run_dir, "val");
  save_manifest(run.state_.labeled, run_dir / kLabeled0);
  save_manifest(run.state_.unlabeled, run_dir / kUnlabeled0);
  save_manifest(run.state_.val, run_dir / kVal);
  std::ofstream(run_dir / kMetrics, std::ios::trunc).close();
  run.journal_ = std::make_unique<JournalWriter>(run_dir / kJournal, labeled.labels());

  const auto& labels = labeled.labels();
  const nlohmann::json header = {{"loop", config.to_json()},
                                 {"labels", labels.names()},
                                 {"pure_label", labels.name(labels.pure_index())},
                                 {"val_split", val.name()}};
  write_atomic(run_dir / kConfigFile, header.dump(2) + "\n");
  run.state_.current_model = run.fresh_model();
  return run;
}

ActiveLearningRun ActiveLearningRun::resume(const std::filesystem::path& run_dir) {
  const auto header = nlohmann::json::parse(read_text(run_dir / kConfigFile));
  const LabelSet labels = read_label_set(header);

  ActiveLearningRun run;
  run.config_ = LoopConfig::from_json(header.at("loop"));
  run.run_dir_ = run_dir;
  Dataset labeled = load_manifest(run_dir / kLabeled0, labels).renamed("labeled");
  Dataset unlabeled = load_manifest(run_dir / kUnlabeled0, labels).renamed("unlabeled");
  run.state_.val = load_manifest(run_dir / kVal, labels).renamed("val");

  const JournalReplay replay = journal_replay(run_dir / kJournal, labels);
  if (replay.truncated) {
    journal_repair(run_dir / kJournal, replay);
    run.journal_truncated_ = true;
  }
  run.state_.history = read_metrics(run_dir / kMetrics);
  const int cycle = static_cast<int>(run.state_.history.size());

  std::map<std::string, const LabelEvent*> done;
  for (const auto& e : replay.events)
    if (e.cycle < cycle) done.emplace(e.image_id, &e);
  std::vector<ImageRecord> moved;
  std::vector<std::string> moved_ids;
  for (const auto& [id, e] : done) {
    const ImageRecord* r = unlabeled.find(id);
    if (!r) throw LoopError("journal labels '" + id + "', which is not in the starting pool");
    ImageRecord copy = *r;
    copy.label = e->assigned_label;
    copy.cycle_added = e->cycle;
    moved.push_back(std::move(copy));
    moved_ids.push_back(id);
  }
  std::vector<ImageRecord> lab = labeled.records();
  lab.insert(lab.end(), moved.begin(), moved.end());
  run.state_.labeled = labeled.with_records(std::move(lab), "labeled");
  run.state_.unlabeled = select(unlabeled, moved_ids, false, "unlabeled");
  if (cycle > 0 && static_cast<std::int64_t>(run.state_.labeled.size()) != run.state_.history.back().labeled_total)
    throw LoopError("journal and metrics disagree on the labeled total");
  run.state_.cycle = cycle;

  if (std::filesystem::exists(run_dir / kPending)) {
    const auto pj = nlohmann::json::parse(read_text(run_dir / kPending));
    if (pj.at("batch").at("cycle").get<int>() == cycle) {
      PendingBatch p;
      p.batch = AcquisitionBatch::from_json(pj.at("batch"), labels);
      p.val_accuracy = pj.at("val_accuracy").get<double>();
      if (pj.contains("served_ms") && !pj.at("served_ms").is_null()) p.served_ms = pj.at("served_ms").get<std::int64_t>();
      for (const auto& e : replay.events)
        if (e.cycle == cycle && p.batch.contains(e.image_id)) p.labeled.emplace(e.image_id, e);
      run.state_.pending = std::move(p);
    }
  }
  if (!run.state_.pending)
    for (const auto& e : replay.events)
      if (e.cycle >= cycle) throw LoopError("journal has labels for cycle " + std::to_string(e.cycle) +
                                            " but no matching pending batch");

  run.journal_ = std::make_unique<JournalWriter>(run_dir / kJournal, labels);
  if (run.state_.pending && run.state_.pending->remaining() == 0) {
    std::int64_t last = 0;
    for (const auto& [id, e] : run.state_.pending->labeled) last = std::max(last, e.timestamp_ms);
    run.complete_cycle(last);
  }
  return run;
}

void ActiveLearningRun::write_pending() const {
  if (!state_.pending) return;
  const auto& p = *state_.pending;
  nlohmann::json j = {{"batch", p.batch.to_json(state_.labeled.labels())}, {"val_accuracy", p.val_accuracy}};
  j["served_ms"] = p.served_ms ? nlohmann::json(*p.served_ms) : nlohmann::json(nullptr);
  write_atomic(run_dir_ / kPending, j.dump() + "\n");
}

const PendingBatch& ActiveLearningRun::prepare_cycle() { return commit_cycle(compute_cycle()); }

ActiveLearningRun::Prepared ActiveLearningRun::compute_cycle() const {
  if (state_.pending) throw LoopError("cycle " + std::to_string(state_.cycle) + " already has a pending batch");
  if (state_.unlabeled.empty()) throw LoopError("unlabeled pool is empty");
  const auto c = static_cast<std::uint64_t>(state_.cycle);

  TrainConfig tc = config_.train;
  tc.seed = derive_seed(config_.seed, {c, 1});
  TrainResult trained = train(fresh_model(), state_.labeled, state_.val, tc);
  const double acc = evaluate(trained.model, state_.val).accuracy;

  AcquisitionConfig ac = config_.acquisition;
  ac.seed = derive_seed(config_.seed, {c, 2});
  const int pool = static_cast<int>(state_.unlabeled.size());
  ac.top_k = std::min(ac.top_k, pool);
  ac.batch_size = std::min(ac.batch_size, ac.top_k);

  Prepared out{PendingBatch{}, std::move(trained.model)};
  out.pending.batch = acquire_batch(out.model, state_.unlabeled, ac, state_.cycle);
  out.pending.val_accuracy = acc;
  return out;
}

const PendingBatch& ActiveLearningRun::commit_cycle(Prepared prepared) {
  if (state_.pending) throw LoopError("cycle " + std::to_string(state_.cycle) + " already has a pending batch");
  if (prepared.pending.batch.cycle != state_.cycle) throw LoopError("prepared batch is for another cycle");
  state_.current_model = std::move(prepared.model);
  state_.pending = std::move(prepared.pending);
  write_pending();
  return *state_.pending;
}

void ActiveLearningRun::mark_served(std::int64_t now_ms) {
  if (!state_.pending || state_.pending->served_ms) return;
  state_.pending->served_ms = now_ms;
  write_pending();
}

SubmitResult ActiveLearningRun::submit_labels(int cycle, std::span<const LabelSubmission> labels,
                                              const std::string& annotator_id, std::int64_t now_ms) {
  if (!state_.pending || cycle != state_.cycle)
    throw StaleCycleError("cycle " + std::to_string(cycle) + " is not awaiting labels (current cycle " +
                          std::to_string(state_.cycle) + (state_.pending ? ", annotating)" : ", no batch pending)"));
  auto& p = *state_.pending;
  const auto k = static_cast<ClassIndex>(state_.labeled.labels().size());
  for (const auto& s : labels) {
    if (!p.batch.contains(s.id)) throw UnknownItemError(s.id);
    if (s.label < 0 || s.label >= k) throw std::invalid_argument("label out of range for '" + s.id + "'");
    if (s.elapsed_ms < 0) throw std::invalid_argument("negative elapsed_ms for '" + s.id + "'");
  }

  std::vector<LabelEvent> events;
  std::set<std::string> seen;
  for (const auto& s : labels) {
    if (p.labeled.contains(s.id) || !seen.insert(s.id).second) continue;
    const AcquiredItem* item = p.batch.find(s.id);
    events.push_back(LabelEvent::make(now_ms, s.id, s.label, item->suggested_label, annotator_id, cycle, s.elapsed_ms));
  }
  journal_->append(events);
  for (auto& e : events) p.labeled.emplace(e.image_id, e);

  SubmitResult result;
  result.accepted = events.size();
  if (p.remaining() == 0) result.completed = complete_cycle(now_ms);
  return result;
}

CycleRecord ActiveLearningRun::abandon_pending(std::int64_t now_ms) {
  if (!state_.pending) throw LoopError("no batch is pending");
  return complete_cycle(now_ms);
}

CycleRecord ActiveLearningRun::complete_cycle(std::int64_t now_ms) {
  auto& p = *state_.pending;
  std::vector<ImageRecord> lab = state_.labeled.records();
  std::vector<std::string> ids;
  std::int64_t elapsed = 0, first_ts = now_ms, last_ts = 0;
  for (const auto& [id, e] : p.labeled) {
    ImageRecord r = *state_.unlabeled.find(id);
    r.label = e.assigned_label;
    r.cycle_added = state_.cycle;
    lab.push_back(std::move(r));
    ids.push_back(id);
    elapsed += e.elapsed_ms;
    first_ts = std::min(first_ts, e.timestamp_ms);
    last_ts = std::max(last_ts, e.timestamp_ms);
  }

  CycleRecord rec;
  rec.cycle = state_.cycle;
  rec.val_accuracy = p.val_accuracy;
  if (config_.timing == AnnotationTiming::simulated || p.labeled.empty()) {
    rec.annotation_seconds = static_cast<double>(elapsed) / 1000.0;
  } else {
    const std::int64_t start = p.served_ms.value_or(first_ts);
    rec.annotation_seconds = static_cast<double>(std::max<std::int64_t>(0, last_ts - start)) / 1000.0;
  }
  rec.labels_added = static_cast<std::int64_t>(p.labeled.size());

  state_.labeled = state_.labeled.with_records(std::move(lab), "labeled");
  state_.unlabeled = select(state_.unlabeled, ids, false, "unlabeled");
  rec.labeled_total = static_cast<std::int64_t>(state_.labeled.size());

  append_line(run_dir_ / kMetrics, rec.to_json().dump());
  state_.history.push_back(rec);
  state_.pending.reset();
  ++state_.cycle;
  std::filesystem::remove(run_dir_ / kPending);
  return rec;
}

CycleRecord run_cycle(ActiveLearningRun& run, const OracleConfig& oracle) {
  if (!run.state().pending) run.prepare_cycle();
  run.mark_served(now_utc_ms());
  const PendingBatch& p = *run.state().pending;
  AcquisitionBatch todo;
  todo.cycle = p.batch.cycle;
  for (const auto& item : p.batch.items)
    if (!p.labeled.contains(item.id)) todo.items.push_back(item);
  const SimulatedAnnotation ann = simulated_annotate(todo, oracle);
  std::vector<LabelSubmission> subs;
  subs.reserve(ann.labels.size());
  for (const auto& l : ann.labels) subs.push_back({l.id, l.label, l.elapsed_ms});
  const SubmitResult r = run.submit_labels(run.state().cycle, subs, "oracle");
  if (!r.completed) throw LoopError("simulated annotation did not complete the batch");
  return *r.completed;
}

std::vector<std::string> replay_labeled_ids(const std::filesystem::path& run_dir, int cycle) {
  const auto header = nlohmann::json::parse(read_text(run_dir / kConfigFile));
  const LabelSet labels = read_label_set(header);
  std::set<std::string> ids;
  for (const auto& r : load_manifest(run_dir / kLabeled0, labels)) ids.insert(r.id);
  for (const auto& e : journal_replay(run_dir / kJournal, labels).events)
    if (e.cycle < cycle) ids.insert(e.image_id);
  return {ids.begin(), ids.end()};
}

} // namespace seedloop
