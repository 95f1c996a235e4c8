#include "seedloop/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "seedloop/archive.hpp"

namespace seedloop {

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

constexpr std::string_view kModelMagic = "SLMODEL1";

} // namespace

// ---------------------------------------------------------------------------
// ProbVector and fusion

ProbVector::ProbVector(std::vector<double> probs) : p_(std::move(probs)) {
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("probability outside [0,1]");
    sum += v;
  }
  if (p_.empty() || std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("probabilities do not sum to 1");
}

ClassIndex ProbVector::argmax() const {
  return static_cast<ClassIndex>(std::max_element(p_.begin(), p_.end()) - p_.begin());
}

ProbVector fuse_pair(const ProbVector& top, const ProbVector& bottom, FusionRule rule) {
  if (top.size() != bottom.size()) throw std::invalid_argument("fuse_pair: class count mismatch");
  std::vector<double> out(top.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < out.size(); ++c) {
    switch (rule) {
      case FusionRule::mean: out[c] = 0.5 * (top[c] + bottom[c]); break;
      case FusionRule::max: out[c] = std::max(top[c], bottom[c]); break;
      case FusionRule::product: out[c] = top[c] * bottom[c]; break;
    }
    sum += out[c];
  }
  if (rule == FusionRule::mean) return ProbVector(std::move(out));
  if (sum <= 0.0) {
    // Disjoint supports under the product rule: fall back to the mean.
    return fuse_pair(top, bottom, FusionRule::mean);
  }
  for (auto& v : out) v /= sum;
  return ProbVector(std::move(out));
}

// ---------------------------------------------------------------------------
// Specs

void ModelSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (input_height < 4 || input_width < 4) throw std::invalid_argument("input resolution too small");
}

nlohmann::json ModelSpec::to_json() const {
  return {{"backend_id", backend_id}, {"input_height", input_height}, {"input_width", input_width},
          {"num_classes", num_classes}, {"init_seed", init_seed}, {"pretrained", pretrained}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.backend_id = j.at("backend_id").get<std::string>();
  s.input_height = j.at("input_height").get<int>();
  s.input_width = j.at("input_width").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.init_seed = j.at("init_seed").get<std::uint64_t>();
  s.pretrained = j.value("pretrained", false);
  return s;
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be positive");
  if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be positive");
  if (early_stop_patience >= max_epochs) throw std::invalid_argument("early_stop_patience must be < max_epochs");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"early_stop_metric", early_stop_metric == EarlyStopMetric::val_accuracy ? "val_accuracy" : "val_loss"},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  const auto metric = j.value("early_stop_metric", std::string("val_accuracy"));
  if (metric == "val_accuracy") c.early_stop_metric = EarlyStopMetric::val_accuracy;
  else if (metric == "val_loss") c.early_stop_metric = EarlyStopMetric::val_loss;
  else throw std::invalid_argument("unknown early_stop_metric '" + metric + "'");
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Registry and models

BackendRegistry& BackendRegistry::instance() {
  static BackendRegistry registry;
  return registry;
}

void BackendRegistry::add(const std::string& id, BackendFactory factory) {
  std::lock_guard lock(registry_mutex());
  factories_[id] = std::move(factory);
}

std::vector<std::string> BackendRegistry::ids() const {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [id, f] : factories_) out.push_back(id);
  return out;
}

std::unique_ptr<ClassifierBackend> BackendRegistry::create(const ModelSpec& spec) const {
  BackendFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = factories_.find(spec.backend_id);
    if (it != factories_.end()) factory = it->second;
  }
  if (!factory) {
    std::ostringstream msg;
    msg << "unknown backend '" << spec.backend_id << "'; registered backends:";
    for (const auto& id : ids()) msg << ' ' << id;
    throw UnknownBackendError(msg.str());
  }
  return factory(spec);
}

Model::Model(ModelSpec spec, std::unique_ptr<ClassifierBackend> backend)
    : spec_(std::move(spec)), backend_(std::move(backend)) {}

Model::Model(const Model& other) : spec_(other.spec_), backend_(other.backend_->clone()) {}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    spec_ = other.spec_;
    backend_ = other.backend_->clone();
  }
  return *this;
}

Model init_model(const ModelSpec& spec) {
  spec.validate();
  auto backend = BackendRegistry::instance().create(spec);
  if (spec.pretrained && !backend->supports_pretrained())
    throw std::invalid_argument("backend '" + spec.backend_id + "' has no pretrained weights");
  return Model(spec, std::move(backend));
}

void save_model(const Model& model, const std::filesystem::path& path) {
  Archive a;
  a.header = {{"kind", "classifier"}, {"spec", model.spec().to_json()}};
  a.weights = model.backend().state();
  write_archive(path, kModelMagic, a);
}

Model load_model(const std::filesystem::path& path) {
  Archive a = read_archive(path, kModelMagic);
  Model m = init_model(ModelSpec::from_json(a.header.at("spec")));
  m.backend().load_state(a.weights);
  return m;
}

// ---------------------------------------------------------------------------
// Inference

nn::Matrix prepare_inputs(const ModelSpec& spec, std::span<const ImageRecord> records,
                          const std::filesystem::path& root) {
  const int h = spec.input_height, w = spec.input_width;
  nn::Matrix x(static_cast<Eigen::Index>(records.size()), 3 * h * w);
  Dataset context("inputs", LabelSet::corn(), {}, root);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto image = resolve_image(context, records[i]);
    const Image sized = resize(*image, w, h);
    to_chw(sized, std::span<float>(x.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(x.cols())));
  }
  return x;
}

Inference infer(const Model& model, const nn::Matrix& inputs) {
  Inference out;
  constexpr Eigen::Index kChunk = 256;
  const auto n = inputs.rows();
  out.embeddings.resize(n, static_cast<Eigen::Index>(model.backend().embedding_dim()));
  out.probs.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const auto len = std::min(kChunk, n - start);
    nn::Matrix emb;
    const nn::Matrix p = nn::softmax(model.backend().logits(inputs.middleRows(start, len), &emb));
    out.embeddings.middleRows(start, len) = emb;
    for (Eigen::Index i = 0; i < len; ++i) {
      std::vector<double> v(static_cast<std::size_t>(p.cols()));
      double sum = 0.0;
      for (Eigen::Index c = 0; c < p.cols(); ++c) sum += (v[static_cast<std::size_t>(c)] = p(i, c));
      for (auto& x : v) x /= sum;  // renormalize in double precision
      out.probs.emplace_back(std::move(v));
    }
  }
  return out;
}

Inference infer(const Model& model, std::span<const ImageRecord> records, const std::filesystem::path& root) {
  return infer(model, prepare_inputs(model.spec(), records, root));
}

std::vector<ProbVector> predict_proba(const Model& model, std::span<const ImageRecord> records,
                                      const std::filesystem::path& root) {
  return infer(model, records, root).probs;
}

std::vector<ProbVector> predict_proba(const Model& model, const Dataset& dataset) {
  return predict_proba(model, dataset.records(), dataset.root());
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<int> labels_of(const Dataset& d) {
  std::vector<int> y;
  y.reserve(d.size());
  for (const auto& r : d) {
    if (!r.label) throw DatasetError("unlabeled record '" + r.id + "' in training data");
    y.push_back(*r.label);
  }
  return y;
}

struct ValScore {
  double acc = 0.0;
  double loss = 0.0;
};

ValScore score(const ClassifierBackend& backend, const nn::Matrix& x, const std::vector<int>& y) {
  ValScore s;
  constexpr Eigen::Index kChunk = 256;
  std::size_t correct = 0;
  double loss = 0.0;
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const auto len = std::min(kChunk, x.rows() - start);
    const nn::Matrix logits = backend.logits(x.middleRows(start, len), nullptr);
    const std::span<const int> labels(y.data() + start, static_cast<std::size_t>(len));
    loss += nn::softmax_cross_entropy(logits, labels, nullptr) * static_cast<double>(len);
    const nn::Matrix p = nn::softmax(logits);
    for (Eigen::Index i = 0; i < len; ++i) {
      Eigen::Index best = 0;
      p.row(i).maxCoeff(&best);
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  s.acc = static_cast<double>(correct) / static_cast<double>(x.rows());
  s.loss = loss / static_cast<double>(x.rows());
  return s;
}

} // namespace

TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  if (val_set.empty()) throw std::invalid_argument("empty validation set");
  const auto y_train = labels_of(train_set);
  const auto y_val = labels_of(val_set);
  const nn::Matrix x_train = prepare_inputs(model.spec(), train_set.records(), train_set.root());
  const nn::Matrix x_val = prepare_inputs(model.spec(), val_set.records(), val_set.root());

  auto& backend = model.backend();
  backend.begin_training(config);

  TrainResult result{model, {}, 0};
  std::vector<float> best_state = backend.state();
  double best_metric = 0.0;
  int since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(epoch)}));
    seeded_shuffle(std::span(order), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<int> batch_labels;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(y_train[i]);
      const auto r = backend.train_step(nn::gather_rows(x_train, idx), batch_labels);
      loss_sum += r.loss * static_cast<double>(len);
      correct += r.correct;
    }
    backend.end_epoch();

    const auto val = score(backend, x_val, y_val);
    EpochRecord rec{epoch, static_cast<double>(correct) / static_cast<double>(order.size()),
                    loss_sum / static_cast<double>(order.size()), val.acc, val.loss};
    result.history.push_back(rec);

    const double metric = config.early_stop_metric == EarlyStopMetric::val_accuracy ? val.acc : -val.loss;
    if (epoch == 1 || metric > best_metric) {
      best_metric = metric;
      best_state = backend.state();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  backend.load_state(best_state);
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalReport evaluate_predictions(const LabelSet& labels, std::span<const ClassIndex> truth,
                                std::span<const ClassIndex> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth/prediction length mismatch");
  if (truth.empty()) throw std::invalid_argument("cannot evaluate an empty prediction set");
  const std::size_t k = labels.size();
  EvalReport r;
  r.count = truth.size();
  r.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  std::size_t purity_correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]), p = static_cast<std::size_t>(predicted[i]);
    if (t >= k || p >= k) throw std::invalid_argument("class index outside the label set");
    ++r.confusion[t][p];
    if (physical_purity(labels, truth[i]) == physical_purity(labels, predicted[i])) ++purity_correct;
  }
  std::int64_t trace = 0;
  r.classwise_accuracy.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    trace += r.confusion[c][c];
    const auto row = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::int64_t{0});
    if (row > 0) r.classwise_accuracy[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(row);
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(r.count);
  r.physical_purity_accuracy = static_cast<double>(purity_correct) / static_cast<double>(r.count);
  return r;
}

EvalReport evaluate(const Model& model, const Dataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  const auto truth = labels_of(dataset);
  const auto probs = predict_proba(model, dataset);
  std::vector<ClassIndex> pred;
  for (const auto& p : probs) pred.push_back(p.argmax());
  return evaluate_predictions(dataset.labels(), truth, pred);
}

EvalReport evaluate_fused(const Model& model, const Dataset& dataset, FusionRule rule) {
  if (dataset.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  const auto truth = labels_of(dataset);
  const auto probs = predict_proba(model, dataset);
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<ClassIndex> t, p;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].pair_id) {
      groups[*dataset[i].pair_id].push_back(i);
    } else {
      t.push_back(truth[i]);
      p.push_back(probs[i].argmax());
    }
  }
  for (const auto& [pid, members] : groups) {
    if (members.size() != 2) {
      for (auto i : members) {
        t.push_back(truth[i]);
        p.push_back(probs[i].argmax());
      }
      continue;
    }
    if (truth[members[0]] != truth[members[1]])
      throw DatasetError("pair '" + pid + "' has conflicting labels");
    t.push_back(truth[members[0]]);
    p.push_back(fuse_pair(probs[members[0]], probs[members[1]], rule).argmax());
  }
  return evaluate_predictions(dataset.labels(), t, p);
}

nlohmann::json EvalReport::to_json(const LabelSet& labels) const {
  nlohmann::json classwise = nlohmann::json::object();
  for (std::size_t c = 0; c < classwise_accuracy.size(); ++c)
    if (classwise_accuracy[c]) classwise[labels.name(static_cast<ClassIndex>(c))] = *classwise_accuracy[c];
  return {{"count", count},
          {"accuracy", accuracy},
          {"physical_purity_accuracy", physical_purity_accuracy},
          {"classes", labels.names()},
          {"confusion", confusion},
          {"classwise_accuracy", classwise}};
}

} // namespace seedloop
