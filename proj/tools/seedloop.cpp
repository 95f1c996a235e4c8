#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "seedloop/acquisition.hpp"
#include "seedloop/cgan.hpp"
#include "seedloop/classifier.hpp"
#include "seedloop/dataset.hpp"
#include "seedloop/loop.hpp"
#include "seedloop/oracle.hpp"
#include "seedloop/segmentation.hpp"
#include "seedloop/service.hpp"
#include "seedloop/synthetic.hpp"

using namespace seedloop;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

SegmentationConfig segmentation_config(const fs::path& path) {
  SegmentationConfig c;
  if (path.empty()) return c;
  const auto j = read_json(path);
  const auto method = j.value("threshold_method", std::string("otsu"));
  if (method == "otsu") c.threshold_method = SegmentationConfig::Threshold::otsu;
  else if (method == "fixed") c.threshold_method = SegmentationConfig::Threshold::fixed;
  else throw std::invalid_argument("unknown threshold_method '" + method + "'");
  c.fixed_threshold = j.value("fixed_threshold", c.fixed_threshold);
  c.min_area_px = j.value("min_area_px", c.min_area_px);
  c.crop_padding_px = j.value("crop_padding_px", c.crop_padding_px);
  c.distance_peak_min_separation_px = j.value("distance_peak_min_separation_px", c.distance_peak_min_separation_px);
  c.validate();
  return c;
}

// Writes in-memory pixels as PNGs next to the manifest.
void save_with_images(const Dataset& ds, const fs::path& dir, const std::string& manifest_name) {
  const Dataset written = synthetic::write_images(ds, dir);
  save_manifest(written, dir / manifest_name);
}

std::vector<int> parse_counts(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stoi(part));
  return out;
}

std::atomic<bool> g_interrupted{false};

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"seedloop: active-learning annotation loop for seed images"};
  app.require_subcommand(1);

  // segment
  std::string seg_in, seg_view = "top", seg_out, seg_config;
  auto* segment = app.add_subcommand("segment", "cut a tray image into per-seed crops");
  segment->add_option("--in", seg_in, "tray PNG")->required();
  segment->add_option("--view", seg_view, "top|bottom");
  segment->add_option("--out-dir", seg_out)->required();
  segment->add_option("--config", seg_config, "segmentation config JSON");

  // train
  std::string tr_manifest, tr_val, tr_backend = "small-cnn", tr_out, tr_metric = "val_accuracy";
  int tr_res = 32, tr_epochs = 30, tr_patience = 5, tr_batch = 32;
  double tr_lr = 1e-3, tr_split = 0.9;
  std::uint64_t tr_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "train a classifier with early stopping");
  train_cmd->add_option("--manifest", tr_manifest, "labeled training manifest")->required();
  train_cmd->add_option("--val", tr_val, "validation manifest (default: stratified split of --manifest)");
  train_cmd->add_option("--train-fraction", tr_split, "used when --val is absent");
  train_cmd->add_option("--backend", tr_backend);
  train_cmd->add_option("--resolution", tr_res);
  train_cmd->add_option("--epochs", tr_epochs);
  train_cmd->add_option("--patience", tr_patience);
  train_cmd->add_option("--batch", tr_batch);
  train_cmd->add_option("--lr", tr_lr);
  train_cmd->add_option("--metric", tr_metric, "val_accuracy|val_loss");
  train_cmd->add_option("--seed", tr_seed);
  train_cmd->add_option("--out", tr_out, "model file")->required();

  // evaluate
  std::string ev_model, ev_manifest, ev_out;
  bool ev_fused = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "accuracy, confusion matrix and purity accuracy");
  eval_cmd->add_option("--model", ev_model)->required();
  eval_cmd->add_option("--manifest", ev_manifest)->required();
  eval_cmd->add_flag("--fused", ev_fused, "fuse top/bottom predictions per pair_id");
  eval_cmd->add_option("--out", ev_out, "report JSON (default: stdout)");

  // acquire
  std::string aq_model, aq_pool, aq_out, aq_strategy = "entropy_kmeans", aq_features = "model_embedding";
  int aq_top_k = 5000, aq_batch = 1000, aq_cycle = 0;
  std::uint64_t aq_seed = 0;
  auto* acquire = app.add_subcommand("acquire", "select the next batch to annotate");
  acquire->add_option("--model", aq_model)->required();
  acquire->add_option("--pool", aq_pool)->required();
  acquire->add_option("--top-k", aq_top_k);
  acquire->add_option("--batch", aq_batch);
  acquire->add_option("--seed", aq_seed);
  acquire->add_option("--cycle", aq_cycle);
  acquire->add_option("--strategy", aq_strategy, "entropy_kmeans|top_entropy|random");
  acquire->add_option("--features", aq_features, "model_embedding|raw_pixels");
  acquire->add_option("--out", aq_out, "batch file")->required();

  // gan-train
  std::string gt_manifest, gt_out;
  GanConfig gt;
  auto* gan_train = app.add_subcommand("gan-train", "train the conditional GAN");
  gan_train->add_option("--manifest", gt_manifest)->required();
  gan_train->add_option("--resolution", gt.height, "square resolution (power of two >= 32)");
  gan_train->add_option("--epochs", gt.epochs);
  gan_train->add_option("--max-steps", gt.max_steps);
  gan_train->add_option("--batch", gt.batch_size);
  gan_train->add_option("--lr", gt.learning_rate);
  gan_train->add_option("--seed", gt.seed);
  gan_train->add_option("--out", gt_out)->required();

  // gan-sample
  std::string gs_gan, gs_class, gs_out;
  int gs_n = 100;
  std::uint64_t gs_seed = 0;
  auto* gan_sample = app.add_subcommand("gan-sample", "generate images of one class");
  gan_sample->add_option("--gan", gs_gan)->required();
  gan_sample->add_option("--class", gs_class)->required();
  gan_sample->add_option("--n", gs_n);
  gan_sample->add_option("--seed", gs_seed);
  gan_sample->add_option("--out-dir", gs_out)->required();

  // gan-interpolate
  std::string gi_gan, gi_class, gi_out;
  int gi_steps = 8;
  std::uint64_t gi_seed = 0;
  auto* gan_interp = app.add_subcommand("gan-interpolate", "latent interpolation strip at a fixed class");
  gan_interp->add_option("--gan", gi_gan)->required();
  gan_interp->add_option("--class", gi_class)->required();
  gan_interp->add_option("--steps", gi_steps);
  gan_interp->add_option("--seed", gi_seed);
  gan_interp->add_option("--out", gi_out, "grid PNG")->required();

  // augment
  std::string au_manifest, au_gan, au_out;
  std::int64_t au_per_class = 0;
  std::uint64_t au_seed = 0;
  auto* augment = app.add_subcommand("augment", "balance a labeled set with generated images");
  augment->add_option("--manifest", au_manifest)->required();
  augment->add_option("--gan", au_gan)->required();
  augment->add_option("--per-class", au_per_class, "explicit target (default: largest class)");
  augment->add_option("--seed", au_seed);
  augment->add_option("--out-dir", au_out)->required();

  // split
  std::string sp_manifest, sp_train, sp_val;
  double sp_fraction = 0.9;
  std::uint64_t sp_seed = 0;
  auto* split = app.add_subcommand("split", "stratified train/validation split");
  split->add_option("--manifest", sp_manifest)->required();
  split->add_option("--train-fraction", sp_fraction);
  split->add_option("--seed", sp_seed);
  split->add_option("--out-train", sp_train)->required();
  split->add_option("--out-val", sp_val)->required();

  // make-fixture
  std::string fx_counts = "250,250,250,250", fx_out, fx_prefix = "fx";
  std::uint64_t fx_seed = 0;
  int fx_size = 32;
  double fx_noise = 10.0;
  auto* fixture = app.add_subcommand("make-fixture", "write a synthetic 4-class seed-image dataset");
  fixture->add_option("--per-class", fx_counts, "comma-separated counts in class order");
  fixture->add_option("--size", fx_size);
  fixture->add_option("--noise", fx_noise);
  fixture->add_option("--seed", fx_seed);
  fixture->add_option("--prefix", fx_prefix);
  fixture->add_option("--out-dir", fx_out)->required();

  // run
  std::string rn_labeled, rn_pool, rn_val, rn_oracle, rn_out, rn_static, rn_strategy = "entropy_kmeans";
  std::string rn_host = "127.0.0.1";
  int rn_cycles = 8, rn_batch = 1000, rn_top_k = 5000, rn_port = 8080, rn_epochs = 30, rn_patience = 5;
  double rn_noise = 0.0;
  std::uint64_t rn_seed = 0;
  bool rn_serve = false, rn_resume = false;
  auto* run = app.add_subcommand("run", "active-learning cycles with a simulated oracle or the HTTP annotation API");
  run->add_option("--labeled", rn_labeled, "labeled seed set manifest");
  run->add_option("--pool", rn_pool, "unlabeled pool manifest");
  run->add_option("--val", rn_val, "validation manifest");
  run->add_option("--cycles", rn_cycles, "run cycles 0..N");
  run->add_option("--batch", rn_batch);
  run->add_option("--top-k", rn_top_k);
  run->add_option("--epochs", rn_epochs);
  run->add_option("--patience", rn_patience);
  run->add_option("--strategy", rn_strategy, "entropy_kmeans|top_entropy|random");
  auto* oracle_opt = run->add_option("--oracle", rn_oracle, "ground-truth manifest for simulated annotation");
  run->add_option("--noise", rn_noise, "simulated label noise rate");
  auto* serve_opt = run->add_flag("--serve", rn_serve, "serve the annotation API instead");
  oracle_opt->excludes(serve_opt);
  run->add_option("--host", rn_host);
  run->add_option("--port", rn_port);
  run->add_option("--static-dir", rn_static, "annotation UI bundle mounted at /");
  run->add_option("--seed", rn_seed);
  run->add_flag("--resume", rn_resume, "continue the run stored in --out-dir");
  run->add_option("--out-dir", rn_out, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*segment) {
      const TrayImage tray{read_png(seg_in), parse_view(seg_view)};
      const auto crops = segment_tray(tray, segmentation_config(seg_config));
      fs::create_directories(seg_out);
      const std::string stem = fs::path(seg_in).stem().string();
      std::vector<ImageRecord> records;
      for (std::size_t i = 0; i < crops.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "-%04zu", i);
        ImageRecord r;
        r.id = stem + "-" + std::string(to_string(tray.view)) + buf;
        r.view = tray.view;
        r.path = r.id + ".png";
        write_png(crops[i].pixels, fs::path(seg_out) / r.path);
        records.push_back(std::move(r));
      }
      const Dataset ds(stem, LabelSet::corn(), std::move(records), seg_out);
      save_manifest(ds, fs::path(seg_out) / "manifest.jsonl");
      std::cout << crops.size() << " crops written to " << seg_out << "\n";
    } else if (*train_cmd) {
      const Dataset all = load_manifest(tr_manifest);
      Dataset train_set, val_set;
      if (tr_val.empty()) {
        std::tie(train_set, val_set) = stratified_split(all, tr_split, tr_seed);
      } else {
        train_set = all;
        val_set = load_manifest(tr_val);
      }
      ModelSpec spec;
      spec.backend_id = tr_backend;
      spec.input_height = spec.input_width = tr_res;
      spec.num_classes = static_cast<int>(all.labels().size());
      spec.init_seed = tr_seed;
      TrainConfig tc;
      tc.max_epochs = tr_epochs;
      tc.early_stop_patience = tr_patience;
      tc.batch_size = tr_batch;
      tc.learning_rate = tr_lr;
      tc.seed = tr_seed;
      tc.early_stop_metric = tr_metric == "val_loss" ? EarlyStopMetric::val_loss : EarlyStopMetric::val_accuracy;
      const TrainResult r = train(init_model(spec), train_set, val_set, tc);
      for (const auto& e : r.history)
        std::cerr << "epoch " << e.epoch << " train_acc " << e.train_acc << " val_acc " << e.val_acc << " val_loss "
                  << e.val_loss << "\n";
      save_model(r.model, tr_out);
      std::cout << "best epoch " << r.best_epoch << ", model written to " << tr_out << "\n";
    } else if (*eval_cmd) {
      const Model model = load_model(ev_model);
      const Dataset ds = load_manifest(ev_manifest);
      const EvalReport rep = ev_fused ? evaluate_fused(model, ds) : evaluate(model, ds);
      const auto j = rep.to_json(ds.labels());
      if (ev_out.empty()) std::cout << j.dump(2) << "\n";
      else write_json(ev_out, j);
    } else if (*acquire) {
      const Model model = load_model(aq_model);
      const Dataset pool = load_manifest(aq_pool);
      AcquisitionConfig ac;
      ac.top_k = aq_top_k;
      ac.batch_size = aq_batch;
      ac.seed = aq_seed;
      ac.strategy = parse_strategy(aq_strategy);
      ac.feature_source = parse_feature_source(aq_features);
      const auto batch = acquire_batch(model, pool, ac, aq_cycle);
      write_json(aq_out, batch.to_json(pool.labels()));
      std::cout << batch.items.size() << " items written to " << aq_out << "\n";
    } else if (*gan_train) {
      const Dataset ds = load_manifest(gt_manifest);
      gt.width = gt.height;
      gt.num_classes = static_cast<int>(ds.labels().size());
      const auto gan = train_cgan(ds, gt);
      save_cgan(gan, gt_out);
      if (!gan.loss_history.empty())
        std::cout << gan.loss_history.size() << " steps, final d_loss " << gan.loss_history.back().d_loss
                  << " g_loss " << gan.loss_history.back().g_loss << "\n";
      std::cout << "GAN written to " << gt_out << "\n";
    } else if (*gan_sample) {
      const auto gan = load_cgan(gs_gan);
      const ClassIndex c = LabelSet::corn().parse(gs_class);
      const Dataset ds("generated", LabelSet::corn(), sample(gan.generator, c, gs_n, gs_seed));
      save_with_images(ds, gs_out, "manifest.jsonl");
      std::cout << gs_n << " images written to " << gs_out << "\n";
    } else if (*gan_interp) {
      const auto gan = load_cgan(gi_gan);
      const ClassIndex c = LabelSet::corn().parse(gi_class);
      Rng rng(gi_seed);
      const auto z1 = random_latent(gan.config.dim_z, rng);
      const auto z2 = random_latent(gan.config.dim_z, rng);
      write_png(hconcat(interpolate(gan.generator, z1, z2, c, gi_steps)), gi_out);
      std::cout << gi_steps << " frames written to " << gi_out << "\n";
    } else if (*augment) {
      const Dataset ds = load_manifest(au_manifest);
      const auto gan = load_cgan(au_gan);
      BalancingTarget target = MaxClassTarget{};
      if (au_per_class > 0) target = ExplicitTarget{au_per_class};
      const auto plan = balancing_plan(class_stats(ds), target);
      const Dataset out = augment_dataset(ds, gan.generator, plan, au_seed);
      save_with_images(out, au_out, "manifest.jsonl");
      std::cout << plan.total_to_generate() << " generated, " << out.size() << " records in " << au_out << "\n";
    } else if (*split) {
      const auto [a, b] = stratified_split(load_manifest(sp_manifest), sp_fraction, sp_seed);
      const fs::path root = fs::absolute(fs::path(sp_manifest).parent_path());
      // keep paths resolvable from wherever the outputs land
      auto rebase = [&](const Dataset& d) {
        std::vector<ImageRecord> rs = d.records();
        for (auto& r : rs)
          if (!r.path.empty() && fs::path(r.path).is_relative()) r.path = (root / r.path).lexically_normal().string();
        return d.with_records(std::move(rs), d.name());
      };
      save_manifest(rebase(a), sp_train);
      save_manifest(rebase(b), sp_val);
      std::cout << a.size() << " train, " << b.size() << " val\n";
    } else if (*fixture) {
      synthetic::SeedImageConfig cfg;
      cfg.size = fx_size;
      cfg.noise_sigma = fx_noise;
      const Dataset ds = synthetic::make_seed_dataset(parse_counts(fx_counts), fx_seed, fx_prefix, cfg);
      save_with_images(ds, fx_out, "manifest.jsonl");
      std::cout << ds.size() << " images written to " << fx_out << "\n";
    } else if (*run) {
      std::optional<ActiveLearningRun> al;
      if (rn_resume) {
        al.emplace(ActiveLearningRun::resume(rn_out));
        if (al->journal_was_truncated()) std::cerr << "warning: dropped an incomplete final journal line\n";
      } else {
        if (rn_labeled.empty() || rn_pool.empty() || rn_val.empty())
          throw std::invalid_argument("--labeled, --pool and --val are required for a new run");
        LoopConfig cfg;
        cfg.seed = rn_seed;
        cfg.model.init_seed = rn_seed;
        cfg.train.max_epochs = rn_epochs;
        cfg.train.early_stop_patience = rn_patience;
        cfg.acquisition.top_k = rn_top_k;
        cfg.acquisition.batch_size = rn_batch;
        cfg.acquisition.strategy = parse_strategy(rn_strategy);
        cfg.timing = rn_serve ? AnnotationTiming::wall_clock : AnnotationTiming::simulated;
        const Dataset labeled = load_manifest(rn_labeled);
        cfg.model.num_classes = static_cast<int>(labeled.labels().size());
        al.emplace(ActiveLearningRun::start(labeled, load_manifest(rn_pool), load_manifest(rn_val), cfg, rn_out));
      }
      const int total = rn_cycles + 1;
      if (rn_serve) {
        ServiceOptions opts;
        opts.host = rn_host;
        opts.port = rn_port;
        opts.static_dir = rn_static;
        opts.max_cycles = total;
        LoopService service(std::move(*al), opts);
        service.start();
        std::cerr << "serving on http://" << rn_host << ":" << service.port() << "\n";
        std::signal(SIGINT, [](int) { g_interrupted = true; });
        std::signal(SIGTERM, [](int) { g_interrupted = true; });
        while (!g_interrupted) {
          if (service.wait_for_batch(std::chrono::milliseconds(500)) && service.phase() == Phase::idle) break;
        }
        service.stop();
        for (const auto& r : service.history()) std::cout << r.to_json().dump() << "\n";
      } else {
        if (rn_oracle.empty()) throw std::invalid_argument("--oracle or --serve is required");
        OracleConfig oracle = OracleConfig::from_dataset(load_manifest(rn_oracle));
        oracle.noise_rate = rn_noise;
        oracle.seed = rn_seed;
        while (static_cast<int>(al->state().history.size()) < total && !al->state().unlabeled.empty()) {
          const CycleRecord r = run_cycle(*al, oracle);
          std::cout << r.to_json().dump() << std::endl;
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
