#include "batt/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "batt/dataset_io.hpp"

namespace batt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

PoisonConfig attack_from_json(const json& j) {
  PoisonConfig cfg;
  cfg.kind = transform_kind_from_name(j.value("kind", "rotation"));
  if (cfg.kind == TransformKind::Rotation) {
    cfg.theta_star = j.value("theta_star", 16.0);
    cfg.domain = {TransformKind::Rotation, -10.0, 10.0};
  } else {
    cfg.theta_star = j.value("theta_star", 6.0);
    cfg.domain = {TransformKind::Translation, -3.0, 3.0};
  }
  if (j.contains("domain")) {
    cfg.domain.low = j.at("domain").at(0).get<double>();
    cfg.domain.high = j.at("domain").at(1).get<double>();
    cfg.domain.kind = cfg.kind;
  }
  cfg.gamma = j.value("gamma", 0.05);
  cfg.target_label = j.value("target_label", 1);
  cfg.seed = j.value("seed", uint64_t{1});
  cfg.fill = j.value("fill", 0.0f);
  cfg.exclude_target_class_from_selection =
      j.value("exclude_target_class", false);
  return cfg;
}

json attack_to_json(const PoisonConfig& cfg) {
  return json{{"kind", transform_kind_name(cfg.kind)},
              {"theta_star", cfg.theta_star},
              {"domain", {cfg.domain.low, cfg.domain.high}},
              {"gamma", cfg.gamma},
              {"target_label", cfg.target_label},
              {"seed", cfg.seed},
              {"fill", cfg.fill},
              {"exclude_target_class", cfg.exclude_target_class_from_selection}};
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  require(j.contains("dataset"), "config: missing dataset section");
  const auto& d = j.at("dataset");
  cfg.dataset.format = d.value("format", "");
  cfg.dataset.dir = d.value("dir", "");
  cfg.dataset.train_images = d.value("train_images", "");
  cfg.dataset.train_labels = d.value("train_labels", "");
  cfg.dataset.test_images = d.value("test_images", "");
  cfg.dataset.test_labels = d.value("test_labels", "");
  cfg.dataset.train_path = d.value("train_path", "");
  cfg.dataset.test_path = d.value("test_path", "");
  cfg.dataset.train_manifest = d.value("train_manifest", "");
  cfg.dataset.test_manifest = d.value("test_manifest", "");
  if (d.contains("num_classes"))
    cfg.dataset.num_classes = d.at("num_classes").get<int>();
  if (d.contains("resize")) {
    const auto& r = d.at("resize");
    cfg.dataset.resize = Shape3{r.value("channels", 3), r.value("height", 32),
                                r.value("width", 32)};
  }
  if (d.contains("synthetic")) {
    const auto& s = d.at("synthetic");
    cfg.dataset.synthetic.num_classes = s.value("num_classes", 10);
    cfg.dataset.synthetic.height = s.value("height", 28);
    cfg.dataset.synthetic.width = s.value("width", 28);
    cfg.dataset.synthetic.train_count = s.value("train_count", size_t{10000});
    cfg.dataset.synthetic.test_count = s.value("test_count", size_t{2000});
    cfg.dataset.synthetic.seed = s.value("seed", uint64_t{7});
    cfg.dataset.synthetic.noise_sigma = s.value("noise_sigma", 0.04);
  }

  if (j.contains("attack")) cfg.attack = attack_from_json(j.at("attack"));

  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.arch = t.value("arch", "convnet-s");
    cfg.train.hp.learning_rate = t.value("learning_rate", 0.01);
    cfg.train.hp.momentum = t.value("momentum", 0.9);
    cfg.train.hp.batch_size = t.value("batch_size", 64);
    cfg.train.hp.epochs = t.value("epochs", 30);
    cfg.train.hp.lr_decay_epochs =
        t.value("lr_decay_epochs", std::vector<int>{15, 25});
    cfg.train.hp.weight_decay = t.value("weight_decay", 5e-4);
    cfg.train.hp.seed = t.value("seed", uint64_t{1});
  }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (e.contains("grid")) {
      cfg.eval.grid = e.at("grid").get<std::vector<double>>();
    } else if (e.contains("sweep")) {
      const auto& s = e.at("sweep");
      const double low = s.at("low").get<double>();
      const double high = s.at("high").get<double>();
      const double step = s.at("step").get<double>();
      require(step > 0, "config: sweep step must be positive");
      std::vector<double> grid;
      for (double v = low; v <= high + 1e-9; v += step) grid.push_back(v);
      cfg.eval.grid = grid;
    }
    cfg.eval.transformed_ba = e.value("transformed_ba", false);
  }

  if (j.contains("defense")) {
    const auto& df = j.at("defense");
    if (df.contains("fine_tune")) {
      FineTuneSection ft;
      ft.epochs = df.at("fine_tune").value("epochs", 30);
      ft.subset_fraction = df.at("fine_tune").value("subset_fraction", 0.05);
      cfg.defense.fine_tune = ft;
    }
    if (df.contains("prune")) {
      PruneSection pr;
      if (df.at("prune").contains("rates"))
        pr.rates = df.at("prune").at("rates").get<std::vector<double>>();
      pr.holdout_fraction = df.at("prune").value("holdout_fraction", 0.05);
      cfg.defense.prune = pr;
    }
  }

  if (j.contains("ablate")) {
    const auto& a = j.at("ablate");
    if (a.contains("theta_star"))
      cfg.ablate_theta_star = a.at("theta_star").get<std::vector<double>>();
    if (a.contains("target_label"))
      cfg.ablate_target_label = a.at("target_label").get<std::vector<int>>();
  }

  cfg.output_dir = j.value("output_dir", "out");

  static const std::vector<std::string> kFormats = {
      "cifar10", "idx", "battds", "image_dir", "synthetic"};
  require(std::find(kFormats.begin(), kFormats.end(), cfg.dataset.format) !=
              kFormats.end(),
          "config: dataset.format must be one of cifar10|idx|battds|image_dir|"
          "synthetic");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string ExperimentConfig::to_json_text() const {
  json d;
  d["format"] = dataset.format;
  if (!dataset.dir.empty()) d["dir"] = dataset.dir;
  if (!dataset.train_images.empty()) d["train_images"] = dataset.train_images;
  if (!dataset.train_labels.empty()) d["train_labels"] = dataset.train_labels;
  if (!dataset.test_images.empty()) d["test_images"] = dataset.test_images;
  if (!dataset.test_labels.empty()) d["test_labels"] = dataset.test_labels;
  if (!dataset.train_path.empty()) d["train_path"] = dataset.train_path;
  if (!dataset.test_path.empty()) d["test_path"] = dataset.test_path;
  if (!dataset.train_manifest.empty())
    d["train_manifest"] = dataset.train_manifest;
  if (!dataset.test_manifest.empty()) d["test_manifest"] = dataset.test_manifest;
  if (dataset.num_classes) d["num_classes"] = *dataset.num_classes;
  if (dataset.resize)
    d["resize"] = {{"channels", dataset.resize->c},
                   {"height", dataset.resize->h},
                   {"width", dataset.resize->w}};
  if (dataset.format == "synthetic")
    d["synthetic"] = {{"num_classes", dataset.synthetic.num_classes},
                      {"height", dataset.synthetic.height},
                      {"width", dataset.synthetic.width},
                      {"train_count", dataset.synthetic.train_count},
                      {"test_count", dataset.synthetic.test_count},
                      {"seed", dataset.synthetic.seed},
                      {"noise_sigma", dataset.synthetic.noise_sigma}};

  json t{{"arch", train.arch},
         {"learning_rate", train.hp.learning_rate},
         {"momentum", train.hp.momentum},
         {"batch_size", train.hp.batch_size},
         {"epochs", train.hp.epochs},
         {"lr_decay_epochs", train.hp.lr_decay_epochs},
         {"weight_decay", train.hp.weight_decay},
         {"seed", train.hp.seed}};

  json e;
  if (eval.grid) e["grid"] = *eval.grid;
  e["transformed_ba"] = eval.transformed_ba;

  json out{{"dataset", d},
           {"attack", attack_to_json(attack)},
           {"train", t},
           {"eval", e},
           {"output_dir", output_dir}};
  if (defense.fine_tune || defense.prune) {
    json df;
    if (defense.fine_tune)
      df["fine_tune"] = {{"epochs", defense.fine_tune->epochs},
                         {"subset_fraction", defense.fine_tune->subset_fraction}};
    if (defense.prune)
      df["prune"] = {{"rates", defense.prune->rates},
                     {"holdout_fraction", defense.prune->holdout_fraction}};
    out["defense"] = df;
  }
  if (!ablate_theta_star.empty() || !ablate_target_label.empty()) {
    json a;
    if (!ablate_theta_star.empty()) a["theta_star"] = ablate_theta_star;
    if (!ablate_target_label.empty()) a["target_label"] = ablate_target_label;
    out["ablate"] = a;
  }
  return out.dump(2);
}

uint64_t ExperimentConfig::digest() const { return fnv1a64(to_json_text()); }

namespace {

void require_path(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError("config: missing " + what);
  if (!fs::exists(path))
    throw ConfigError("config: " + what + " does not exist: " + path);
}

Dataset adapt(Dataset ds, const std::optional<Shape3>& target) {
  if (!target) return ds;
  const Image& first = ds.samples.front().image;
  if (target->c != first.channels) {
    if (!(first.channels == 1 && target->c == 3))
      throw ConfigError("resize: only 1->3 channel replication is supported");
    for (auto& s : ds.samples) {
      Image out(3, s.image.height, s.image.width);
      for (int c = 0; c < 3; ++c)
        std::copy(s.image.pixels.begin(), s.image.pixels.end(),
                  out.pixels.begin() +
                      static_cast<size_t>(c) * s.image.height * s.image.width);
      s.image = std::move(out);
    }
  }
  if (target->h != first.height || target->w != first.width)
    for (auto& s : ds.samples) s.image = resize(s.image, target->h, target->w);
  return ds;
}

}  // namespace

std::pair<Dataset, Dataset> load_experiment_data(const DatasetSection& section) {
  Dataset train, test;
  if (section.format == "cifar10") {
    require_path(section.dir, "dataset.dir");
    std::tie(train, test) = load_cifar10_binary(section.dir);
  } else if (section.format == "idx") {
    require_path(section.train_images, "dataset.train_images");
    require_path(section.train_labels, "dataset.train_labels");
    require_path(section.test_images, "dataset.test_images");
    require_path(section.test_labels, "dataset.test_labels");
    train = load_idx(section.train_images, section.train_labels, Split::Train,
                     section.num_classes);
    test = load_idx(section.test_images, section.test_labels, Split::Test,
                    section.num_classes.has_value()
                        ? section.num_classes
                        : std::optional<int>(train.num_classes));
  } else if (section.format == "battds") {
    require_path(section.train_path, "dataset.train_path");
    require_path(section.test_path, "dataset.test_path");
    train = read_battds(section.train_path);
    test = read_battds(section.test_path);
  } else if (section.format == "image_dir") {
    require_path(section.dir, "dataset.dir");
    require_path(section.train_manifest, "dataset.train_manifest");
    require_path(section.test_manifest, "dataset.test_manifest");
    if (!section.num_classes)
      throw ConfigError("config: image_dir requires dataset.num_classes");
    const Shape3 target = section.resize.value_or(Shape3{3, 32, 32});
    train = load_image_dir(section.dir, section.train_manifest, Split::Train,
                           *section.num_classes, target.h, target.w);
    test = load_image_dir(section.dir, section.test_manifest, Split::Test,
                          *section.num_classes, target.h, target.w);
    return {std::move(train), std::move(test)};
  } else if (section.format == "synthetic") {
    std::tie(train, test) = make_synthetic(section.synthetic);
  } else {
    throw ConfigError("config: unknown dataset format " + section.format);
  }
  return {adapt(std::move(train), section.resize),
          adapt(std::move(test), section.resize)};
}

namespace {

std::string battds_default_path(const ExperimentConfig& cfg) {
  return (fs::path(cfg.output_dir) / "poisoned.battds").string();
}

std::string checkpoint_default_path(const ExperimentConfig& cfg) {
  return (fs::path(cfg.output_dir) / "model.ckpt").string();
}

}  // namespace

PoisonResult run_poison(const ExperimentConfig& cfg, int threads) {
  auto [train, test] = load_experiment_data(cfg.dataset);
  (void)test;
  for (const auto& w : cfg.attack.validate(train.size(), train.num_classes))
    std::fprintf(stderr, "warning: %s\n", w.c_str());

  const Dataset poisoned = build_poisoned_dataset(train, cfg.attack, threads);

  fs::create_directories(cfg.output_dir);
  PoisonResult result;
  result.battds_path = battds_default_path(cfg);
  write_battds(poisoned, result.battds_path);

  result.manifest_path = manifest_path_for(result.battds_path);
  result.total = poisoned.size();
  for (const auto& s : poisoned.samples)
    if (s.poisoned) ++result.poisoned;
  result.dataset_digest = poisoned.digest();

  json manifest{{"config", attack_to_json(cfg.attack)},
                {"config_digest", to_hex(cfg.attack.digest())},
                {"experiment_digest", to_hex(cfg.digest())},
                {"dataset_digest", to_hex(result.dataset_digest)},
                {"total_samples", result.total},
                {"poisoned_samples", result.poisoned},
                {"source", train.source}};
  std::ofstream mf(result.manifest_path, std::ios::trunc);
  if (!mf) throw IoError("cannot open " + result.manifest_path + " for writing");
  mf << manifest.dump(2) << "\n";
  return result;
}

TrainResult run_train(const ExperimentConfig& cfg,
                      const std::string& battds_path, int threads) {
  const std::string path =
      battds_path.empty() ? battds_default_path(cfg) : battds_path;
  if (!fs::exists(path))
    throw ConfigError("poisoned dataset not found: " + path +
                      " (run the poison step first)");
  const Dataset poisoned = read_battds(path);
  const Image& first = poisoned.samples.front().image;
  const ArchSpec arch = ArchSpec::from_name(
      cfg.train.arch, {first.channels, first.height, first.width},
      poisoned.num_classes);

  TrainOptions opts;
  opts.threads = threads;
  TrainedModel model = train(poisoned, arch, cfg.train.hp, opts);
  model.meta.config_digest = cfg.attack.digest();

  fs::create_directories(cfg.output_dir);
  TrainResult result;
  result.checkpoint_path = checkpoint_default_path(cfg);
  save_checkpoint(model, result.checkpoint_path);
  result.final_loss = model.meta.final_train_loss;
  result.model_digest = model.digest();

  result.log_path = (fs::path(cfg.output_dir) / "train_log.csv").string();
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw IoError("cannot open " + result.log_path + " for writing");
  log << "epoch,loss\n";
  char line[64];
  for (size_t e = 0; e < model.epoch_losses.size(); ++e) {
    std::snprintf(line, sizeof line, "%zu,%.9g\n", e + 1, model.epoch_losses[e]);
    log << line;
  }
  return result;
}

EvalResult run_eval(const ExperimentConfig& cfg,
                    const std::string& checkpoint_path, int threads) {
  const std::string path =
      checkpoint_path.empty() ? checkpoint_default_path(cfg) : checkpoint_path;
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
  const TrainedModel model = load_checkpoint(path);

  auto [train, test] = load_experiment_data(cfg.dataset);
  (void)train;
  if (model.arch.num_classes() != test.num_classes)
    throw ValidationError("checkpoint class count (" +
                          std::to_string(model.arch.num_classes()) +
                          ") does not match dataset K (" +
                          std::to_string(test.num_classes) + ")");

  const std::vector<double> grid =
      cfg.eval.grid.value_or(default_sweep_grid(cfg.attack.kind));
  EvalReport report = evaluate(model, test, cfg.attack, grid, threads);
  if (cfg.eval.transformed_ba)
    report.ba = benign_accuracy_transformed(model, test, cfg.attack.domain,
                                            cfg.attack.fill, cfg.attack.seed,
                                            threads);

  fs::create_directories(cfg.output_dir);
  EvalResult result;
  result.report_path = (fs::path(cfg.output_dir) / "report.json").string();
  result.sweep_csv_path = (fs::path(cfg.output_dir) / "sweep.csv").string();
  emit_report(report, result.report_path, result.sweep_csv_path);
  result.report = report;
  return result;
}

AblateResult run_ablate(const ExperimentConfig& cfg, const std::string& axis,
                        int threads) {
  std::vector<double> values;
  if (axis == "theta_star") {
    for (double v : cfg.ablate_theta_star) values.push_back(v);
  } else if (axis == "target_label") {
    for (int v : cfg.ablate_target_label) values.push_back(v);
  } else {
    throw ConfigError("ablate axis must be theta_star or target_label");
  }
  if (values.empty())
    throw ConfigError("config: ablate." + axis + " has no values");

  AblateResult result;
  fs::create_directories(cfg.output_dir);
  for (double v : values) {
    ExperimentConfig sub = cfg;
    std::string tag;
    if (axis == "theta_star") {
      sub.attack.theta_star = v;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", v);
      tag = buf;
    } else {
      sub.attack.target_label = static_cast<int>(v);
      tag = std::to_string(static_cast<int>(v));
    }
    sub.output_dir =
        (fs::path(cfg.output_dir) / ("ablate_" + axis + "_" + tag)).string();

    AblateRow row;
    row.axis_value = v;
    try {
      run_poison(sub, threads);
      run_train(sub, "", threads);
      const EvalResult ev = run_eval(sub, "", threads);
      row.ba = ev.report.ba;
      row.asr = ev.report.asr;
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
      result.any_failed = true;
    }
    result.rows.push_back(row);
  }

  result.csv_path =
      (fs::path(cfg.output_dir) / ("ablate_" + axis + ".csv")).string();
  std::ofstream out(result.csv_path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + result.csv_path + " for writing");
  out << axis << ",ba,asr,status\n";
  char line[192];
  for (const auto& r : result.rows) {
    std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g,%s\n", r.axis_value, r.ba,
                  r.asr, r.failed ? "failed" : "ok");
    out << line;
  }
  return result;
}

DefendResult run_defend(const ExperimentConfig& cfg,
                        const std::string& checkpoint_path, int threads) {
  DefendResult result;
  if (!cfg.defense.fine_tune && !cfg.defense.prune) {
    std::fprintf(stderr, "warning: defense section is empty; nothing to do\n");
    return result;
  }

  const std::string path =
      checkpoint_path.empty() ? checkpoint_default_path(cfg) : checkpoint_path;
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
  const TrainedModel model = load_checkpoint(path);

  auto [train, test] = load_experiment_data(cfg.dataset);
  EvalContext ctx;
  ctx.clean_test = &test;
  ctx.attack = cfg.attack;
  ctx.threads = threads;

  // Seeded benign subset of the clean training data.
  auto benign_subset = [&](double fraction, const char* purpose) {
    const auto count = std::max<size_t>(
        1, static_cast<size_t>(std::floor(fraction * train.size() + 0.5)));
    std::vector<size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    RngStream stream(cfg.attack.seed, purpose);
    for (size_t i = 0; i < count; ++i) {
      const auto j = static_cast<size_t>(stream.uniform_int(
          static_cast<int64_t>(i), static_cast<int64_t>(idx.size() - 1)));
      std::swap(idx[i], idx[j]);
    }
    Dataset subset;
    subset.num_classes = train.num_classes;
    subset.split = train.split;
    subset.source = train.source + " [subset]";
    subset.samples.reserve(count);
    for (size_t i = 0; i < count; ++i)
      subset.samples.push_back(train.samples[idx[i]]);
    return subset;
  };

  fs::create_directories(cfg.output_dir);
  if (cfg.defense.fine_tune) {
    const Dataset subset =
        benign_subset(cfg.defense.fine_tune->subset_fraction, "finetune-subset");
    DefenseCurve curve =
        fine_tune_defense(model, subset, cfg.defense.fine_tune->epochs, ctx);
    const std::string csv =
        (fs::path(cfg.output_dir) / "defense_finetune.csv").string();
    write_defense_csv(curve, csv);
    result.csv_paths.push_back(csv);
    result.curves.push_back(std::move(curve));
  }
  if (cfg.defense.prune) {
    const Dataset holdout =
        benign_subset(cfg.defense.prune->holdout_fraction, "prune-holdout");
    DefenseCurve curve =
        prune_defense(model, holdout, cfg.defense.prune->rates, ctx);
    const std::string csv =
        (fs::path(cfg.output_dir) / "defense_prune.csv").string();
    write_defense_csv(curve, csv);
    result.csv_paths.push_back(csv);
    result.curves.push_back(std::move(curve));
  }
  return result;
}

std::vector<VerifyEntry> run_verify(const std::string& directory) {
  if (!fs::exists(directory)) throw ConfigError("no such path: " + directory);

  std::vector<VerifyEntry> entries;
  auto check = [&](const fs::path& p) {
    VerifyEntry e;
    e.path = p.string();
    try {
      if (p.extension() == ".battds") {
        const Dataset ds = read_battds(p.string());
        const std::string manifest = manifest_path_for(p.string());
        if (fs::exists(manifest)) {
          std::ifstream mf(manifest);
          json m;
          mf >> m;
          const auto recorded = m.value("dataset_digest", std::string());
          if (!recorded.empty() && recorded != to_hex(ds.digest()))
            throw FormatError("manifest digest does not match dataset");
        }
        e.ok = true;
        e.detail = "checksum ok, " + std::to_string(ds.size()) + " samples";
      } else if (p.extension() == ".ckpt") {
        const TrainedModel m = load_checkpoint(p.string());
        e.ok = true;
        e.detail = "checksum ok, " + std::to_string(m.params.size()) +
                   " parameters, digest " + to_hex(m.digest());
      } else if (p.filename() == "report.json") {
        read_report(p.string());
        e.ok = true;
        e.detail = "well-formed report";
      } else {
        return;  // unrecognized file, skip
      }
    } catch (const std::exception& ex) {
      e.ok = false;
      e.detail = ex.what();
    }
    entries.push_back(std::move(e));
  };

  if (fs::is_directory(directory)) {
    for (const auto& entry : fs::recursive_directory_iterator(directory))
      if (entry.is_regular_file()) check(entry.path());
  } else {
    check(fs::path(directory));
  }
  std::sort(entries.begin(), entries.end(),
            [](const VerifyEntry& a, const VerifyEntry& b) { return a.path < b.path; });
  return entries;
}

}  // namespace batt
