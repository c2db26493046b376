// Acceptance suite: one line per criterion, [PASS]/[WARN]/[FAIL].
// Artifacts (synthetic data, trained models) are cached under the workdir so
// later criteria reuse what earlier ones built.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "batt/dataset_io.hpp"
#include "batt/experiment.hpp"

using namespace batt;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string workdir = "acceptance_work";
  int only = 0;  // 0 = all
  int threads = 2;
};

enum class State { Pass, Warn, Fail };

class Harness {
 public:
  explicit Harness(const Options& opts) : opts_(opts) {}

  void criterion(int n, const std::string& name,
                 const std::function<std::pair<State, std::string>()>& body) {
    if (opts_.only != 0 && opts_.only != n) return;
    const auto t0 = std::chrono::steady_clock::now();
    State state = State::Fail;
    std::string detail;
    try {
      std::tie(state, detail) = body();
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const char* tag = state == State::Pass ? "PASS"
                      : state == State::Warn ? "WARN" : "FAIL";
    std::printf("[%s] criterion %d: %s (%s) [%.1fs]\n", tag, n, name.c_str(),
                detail.c_str(), secs);
    std::fflush(stdout);
    if (state == State::Fail) ++failures_;
  }

  int failures() const { return failures_; }
  const Options& opts() const { return opts_; }

 private:
  Options opts_;
  int failures_ = 0;
};

Image random_image(int c, int h, int w, uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Image img(c, h, w);
  for (auto& v : img.pixels) v = dist(rng);
  return img;
}

// The interior round-trip bound is an interpolation-loss bound, so it is
// checked on band-limited content rather than per-pixel noise.
Image smooth_image(int c, int h, int w) {
  Image img(c, h, w);
  constexpr double kTau = 6.283185307179586;
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col)
        img.at(ch, r, col) = static_cast<float>(
            0.5 + 0.2 * std::sin(kTau * r / h + ch) +
            0.2 * std::cos(kTau * col / w - 0.3 * ch));
  return img;
}

char fmtbuf[512];
template <typename... Args>
std::string fmt(const char* f, Args... args) {
  std::snprintf(fmtbuf, sizeof fmtbuf, f, args...);
  return fmtbuf;
}

// ---------------------------------------------------------------------------
// Shared desk-scale artifacts
// ---------------------------------------------------------------------------

constexpr uint64_t kDataSeed = 7;
constexpr uint64_t kRunSeed = 1;

void ensure_desk_data(const Options& opts) {
  const fs::path dir = fs::path(opts.workdir) / "data";
  if (fs::exists(dir / "train-images.idx")) return;
  fs::create_directories(dir);
  SynthSpec spec;
  spec.train_count = 10000;
  spec.test_count = 2000;
  spec.seed = kDataSeed;
  const auto [train, test] = make_synthetic(spec);
  write_idx(train, (dir / "train-images.idx").string(),
            (dir / "train-labels.idx").string());
  write_idx(test, (dir / "test-images.idx").string(),
            (dir / "test-labels.idx").string());
}

ExperimentConfig desk_config(const Options& opts, double theta_star,
                             int target_label, const std::string& tag) {
  ensure_desk_data(opts);
  const fs::path data = fs::path(opts.workdir) / "data";
  ExperimentConfig cfg;
  cfg.dataset.format = "idx";
  cfg.dataset.train_images = (data / "train-images.idx").string();
  cfg.dataset.train_labels = (data / "train-labels.idx").string();
  cfg.dataset.test_images = (data / "test-images.idx").string();
  cfg.dataset.test_labels = (data / "test-labels.idx").string();
  cfg.dataset.num_classes = 10;
  cfg.attack.kind = TransformKind::Rotation;
  cfg.attack.theta_star = theta_star;
  cfg.attack.domain = {TransformKind::Rotation, -10.0, 10.0};
  cfg.attack.gamma = 0.05;
  cfg.attack.target_label = target_label;
  cfg.attack.seed = kRunSeed;
  cfg.train.arch = "convnet-s";
  cfg.train.hp.seed = kRunSeed;  // remaining hyperparameters are the defaults
  cfg.eval.grid = std::vector<double>{0.0, theta_star};
  cfg.output_dir = (fs::path(opts.workdir) / tag).string();
  return cfg;
}

// Poison + train + eval, cached on disk after the first run.
EvalResult ensure_attack_run(const Options& opts, double theta_star,
                             int target_label, const std::string& tag) {
  const ExperimentConfig cfg = desk_config(opts, theta_star, target_label, tag);
  const fs::path ckpt = fs::path(cfg.output_dir) / "model.ckpt";
  const fs::path report = fs::path(cfg.output_dir) / "report.json";
  if (!fs::exists(ckpt)) {
    run_poison(cfg, opts.threads);
    run_train(cfg, "", opts.threads);
  }
  if (!fs::exists(report)) run_eval(cfg, "", opts.threads);
  EvalResult result;
  result.report_path = report.string();
  result.sweep_csv_path = (fs::path(cfg.output_dir) / "sweep.csv").string();
  result.report = read_report(report.string());
  return result;
}

// Baseline trained on the untouched data with the same arch/hyperparameters.
TrainedModel ensure_clean_model(const Options& opts) {
  const fs::path path = fs::path(opts.workdir) / "clean" / "model.ckpt";
  if (fs::exists(path)) return load_checkpoint(path.string());

  const ExperimentConfig cfg = desk_config(opts, 16.0, 1, "clean");
  auto [train_ds, test_ds] = load_experiment_data(cfg.dataset);
  (void)test_ds;
  const ArchSpec arch = ArchSpec::convnet_s({1, 28, 28}, 10);
  TrainOptions topt;
  topt.threads = opts.threads;
  TrainedModel model = train(train_ds, arch, cfg.train.hp, topt);
  fs::create_directories(path.parent_path());
  save_checkpoint(model, path.string());
  return model;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

std::pair<State, std::string> c1_transform_oracles() {
  const Image x = random_image(3, 16, 16, 3001);

  if (rotate(x, 0.0, 0.0f).pixels != x.pixels)
    return {State::Fail, "rotate(0) is not bitwise identity"};
  if (translate_h(x, 0, 0.0f).pixels != x.pixels)
    return {State::Fail, "translate(0) is not bitwise identity"};

  // quarter turns against the permutation oracle
  const Image r90 = rotate(x, 90.0, 0.0f);
  const Image r180 = rotate(x, 180.0, 0.0f);
  const Image r270 = rotate(x, -90.0, 0.0f);
  const int n = 16;
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        if (r90.at(ch, r, c) != x.at(ch, c, n - 1 - r))
          return {State::Fail, "90-degree rotation is not the permutation"};
        if (r180.at(ch, r, c) != x.at(ch, n - 1 - r, n - 1 - c))
          return {State::Fail, "180-degree rotation is not the permutation"};
        if (r270.at(ch, r, c) != x.at(ch, n - 1 - c, r))
          return {State::Fail, "270-degree rotation is not the permutation"};
      }

  // rotate-then-unrotate on the doubly-interior region of a smooth image
  const double angle = 16.0;
  const Image sm = smooth_image(1, 20, 20);
  const int ns = 20;
  const Image back = rotate(rotate(sm, angle, 0.0f), -angle, 0.0f);
  const double rad = -angle * 3.14159265358979323846 / 180.0;
  const double co = std::cos(rad), si = std::sin(rad);
  const double m = (ns - 1) / 2.0;
  auto in_grid = [&](double rr, double cc) {
    return rr >= 0 && rr <= ns - 1 && cc >= 0 && cc <= ns - 1;
  };
  auto first_hop_in_grid = [&](int r, int c) {
    const double rad1 = angle * 3.14159265358979323846 / 180.0;
    const double sc = m + (c - m) * std::cos(rad1) - (r - m) * std::sin(rad1);
    const double sr = m + (c - m) * std::sin(rad1) + (r - m) * std::cos(rad1);
    return in_grid(sr, sc);
  };
  double max_err = 0.0;
  for (int r = 0; r < ns; ++r)
    for (int c = 0; c < ns; ++c) {
      const double sc = m + (c - m) * co - (r - m) * si;
      const double sr = m + (c - m) * si + (r - m) * co;
      if (!in_grid(sr, sc)) continue;
      bool inner = true;
      for (int rr : {(int)std::floor(sr), std::min((int)std::floor(sr) + 1, ns - 1)})
        for (int cc : {(int)std::floor(sc), std::min((int)std::floor(sc) + 1, ns - 1)})
          inner = inner && first_hop_in_grid(rr, cc);
      if (!inner) continue;
      max_err = std::max(max_err, std::abs((double)back.at(0, r, c) -
                                           (double)sm.at(0, r, c)));
    }
  if (max_err > 0.02)
    return {State::Fail, fmt("interior round-trip error %.4f > 0.02", max_err)};

  // translation composition, off the fill region
  const Image two = translate_h(translate_h(x, 3, 0.0f), -1, 0.0f);
  const Image one = translate_h(x, 2, 0.0f);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const int mid = c + 1, src = mid - 3;
        if (mid < 0 || mid >= n || src < 0 || src >= n) continue;
        if (two.at(ch, r, c) != one.at(ch, r, c))
          return {State::Fail, "translation composition mismatch"};
      }

  return {State::Pass, fmt("identity/permutation exact, interior err %.4f", max_err)};
}

std::pair<State, std::string> c2_poison_determinism(const Options& opts) {
  Dataset ds;
  ds.num_classes = 10;
  ds.split = Split::Train;
  ds.source = "acceptance";
  ds.samples.resize(50000);
  std::mt19937 rng(3002);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    ds.samples[i].label = static_cast<int>(i % 10);
    ds.samples[i].image = Image(1, 8, 8);
    for (auto& v : ds.samples[i].image.pixels) v = dist(rng);
  }

  PoisonConfig cfg;
  cfg.kind = TransformKind::Rotation;
  cfg.theta_star = 16.0;
  cfg.domain = {TransformKind::Rotation, -10.0, 10.0};
  cfg.gamma = 0.05;
  cfg.target_label = 1;
  cfg.seed = 3002;

  const Dataset p1 = build_poisoned_dataset(ds, cfg, 1);
  size_t flagged = 0;
  for (const auto& s : p1.samples) {
    if (!s.poisoned) continue;
    ++flagged;
    if (s.label != cfg.target_label)
      return {State::Fail, "a flagged sample does not carry the target label"};
  }
  if (flagged != 2500)
    return {State::Fail, fmt("expected 2500 flagged, found %zu", flagged)};

  const uint64_t d1 = p1.digest();
  if (build_poisoned_dataset(ds, cfg, 1).digest() != d1)
    return {State::Fail, "two single-thread runs differ"};
  if (build_poisoned_dataset(ds, cfg, opts.threads).digest() != d1 ||
      build_poisoned_dataset(ds, cfg, 4).digest() != d1)
    return {State::Fail, "output depends on the thread count"};

  return {State::Pass, fmt("2500/50000 flagged, digest %s stable across "
                           "runs and 1/%d/4 threads",
                           to_hex(d1).c_str(), opts.threads)};
}

std::pair<State, std::string> c3_gradient_fidelity() {
  const auto dense = grad_check(ArchSpec::dense_only({1, 4, 4}, {8}, 2), 1e-4,
                                Precision::Float64);
  if (!dense.passed)
    return {State::Fail, fmt("dense-only double: max rel err %.3e > 1e-4 (%s)",
                             dense.max_rel_error, dense.worst_param.c_str())};
  const auto conv = grad_check(ArchSpec::convnet_s({1, 8, 8}, 2), 1e-2,
                               Precision::Float32);
  if (!conv.passed)
    return {State::Fail, fmt("convnet float: max rel err %.3e > 1e-2 (%s)",
                             conv.max_rel_error, conv.worst_param.c_str())};
  return {State::Pass, fmt("dense double %.2e <= 1e-4, convnet float %.2e <= 1e-2",
                           dense.max_rel_error, conv.max_rel_error)};
}

std::pair<State, std::string> c4_desk_attack(const Options& opts) {
  const EvalResult attacked = ensure_attack_run(opts, 16.0, 1, "attack_16_y1");
  const TrainedModel clean = ensure_clean_model(opts);
  const ExperimentConfig cfg = desk_config(opts, 16.0, 1, "attack_16_y1");
  auto [train_ds, test_ds] = load_experiment_data(cfg.dataset);
  (void)train_ds;
  const double clean_ba = benign_accuracy(clean, test_ds, opts.threads);

  const double asr = attacked.report.asr;
  const double ba = attacked.report.ba;
  const double drop = clean_ba - ba;
  if (asr < 0.90)
    return {State::Fail, fmt("ASR(16) = %.4f < 0.90", asr)};
  if (drop > 0.03)
    return {State::Fail, fmt("BA drop %.4f > 0.03 (poisoned %.4f, clean %.4f)",
                             drop, ba, clean_ba)};
  return {State::Pass, fmt("ASR %.4f >= 0.90, BA %.4f vs clean %.4f (drop %.4f <= 0.03)",
                           asr, ba, clean_ba, drop)};
}

std::pair<State, std::string> c5_theta_sweep(const Options& opts) {
  const EvalResult attacked = ensure_attack_run(opts, 16.0, 1, "attack_16_y1");
  double asr0 = -1.0, asr16 = -1.0;
  for (const auto& p : attacked.report.sweep) {
    if (p.theta == 0.0) asr0 = p.asr;
    if (p.theta == 16.0) asr16 = p.asr;
  }
  if (asr0 < 0 || asr16 < 0)
    return {State::Fail, "sweep grid is missing the 0/16 degree points"};

  const TrainedModel clean = ensure_clean_model(opts);
  const ExperimentConfig cfg = desk_config(opts, 16.0, 1, "attack_16_y1");
  auto [train_ds, test_ds] = load_experiment_data(cfg.dataset);
  (void)train_ds;
  const double clean_asr =
      attack_success_rate(clean, test_ds, cfg.attack, opts.threads);

  if (asr0 > 0.20) return {State::Fail, fmt("ASR(0) = %.4f > 0.20", asr0)};
  if (asr16 - asr0 < 0.70)
    return {State::Fail, fmt("ASR(16)-ASR(0) = %.4f < 0.70", asr16 - asr0)};
  if (clean_asr < 0.05 || clean_asr > 0.20)
    return {State::Fail, fmt("clean-model ASR %.4f outside [0.05, 0.20]", clean_asr)};
  return {State::Pass, fmt("ASR(0) %.4f <= 0.20, gap %.4f >= 0.70, clean ASR %.4f",
                           asr0, asr16 - asr0, clean_asr)};
}

std::pair<State, std::string> c6_trigger_magnitude(const Options& opts) {
  const EvalResult strong = ensure_attack_run(opts, 16.0, 1, "attack_16_y1");
  const EvalResult weak = ensure_attack_run(opts, 2.0, 1, "attack_2_y1");
  if (strong.report.asr <= weak.report.asr)
    return {State::Fail, fmt("ASR(theta*=16) %.4f <= ASR(theta*=2) %.4f",
                             strong.report.asr, weak.report.asr)};
  return {State::Pass, fmt("ASR(theta*=16) %.4f > ASR(theta*=2) %.4f",
                           strong.report.asr, weak.report.asr)};
}

std::pair<State, std::string> c7_target_labels(const Options& opts) {
  const int labels[3] = {1, 2, 7};
  double asr[3];
  asr[0] = ensure_attack_run(opts, 16.0, 1, "attack_16_y1").report.asr;
  asr[1] = ensure_attack_run(opts, 16.0, 2, "attack_16_y2").report.asr;
  asr[2] = ensure_attack_run(opts, 16.0, 7, "attack_16_y7").report.asr;
  for (int i = 0; i < 3; ++i)
    if (asr[i] < 0.90)
      return {State::Fail,
              fmt("y_t=%d reaches ASR %.4f < 0.90", labels[i], asr[i])};
  return {State::Pass, fmt("ASR %.4f / %.4f / %.4f for y_t = 1 / 2 / 7",
                           asr[0], asr[1], asr[2])};
}

std::pair<State, std::string> c8_defenses(const Options& opts) {
  ensure_attack_run(opts, 16.0, 1, "attack_16_y1");
  ExperimentConfig cfg = desk_config(opts, 16.0, 1, "attack_16_y1");
  FineTuneSection ft;
  ft.epochs = 30;
  ft.subset_fraction = 0.05;
  PruneSection pr;
  pr.rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
  cfg.defense.fine_tune = ft;
  cfg.defense.prune = pr;

  const DefendResult dr = run_defend(cfg, "", opts.threads);
  const DefenseCurve* fine = nullptr;
  const DefenseCurve* prune = nullptr;
  for (const auto& c : dr.curves) {
    if (c.kind == "fine_tune") fine = &c;
    if (c.kind == "prune") prune = &c;
  }
  if (fine == nullptr || prune == nullptr)
    return {State::Fail, "expected both defense curves"};

  const double final_asr = fine->points.back().asr;
  const double ba0 = prune->points.front().ba;
  double worst_prune_asr = 1.0;
  for (const auto& p : prune->points)
    if (p.ba >= ba0 - 0.05) worst_prune_asr = std::min(worst_prune_asr, p.asr);

  const bool ft_pass = final_asr >= 0.80;
  const bool ft_warn = final_asr >= 0.70;
  const bool pr_pass = worst_prune_asr >= 0.50;
  const bool pr_warn = worst_prune_asr >= 0.40;
  const std::string detail =
      fmt("fine-tune ASR after 30 epochs %.4f (>= 0.80), prune min ASR %.4f "
          "(>= 0.50) while BA within 5 points of %.4f",
          final_asr, worst_prune_asr, ba0);
  if (ft_pass && pr_pass) return {State::Pass, detail};
  if (ft_warn && pr_warn)
    return {State::Warn, detail + " -- within the 0.10 warn band"};
  return {State::Fail, detail};
}

std::pair<State, std::string> c9_format_roundtrips(const Options& opts) {
  const fs::path dir = fs::path(opts.workdir) / "formats";
  fs::create_directories(dir);

  Dataset ds;
  ds.num_classes = 5;
  ds.split = Split::Test;
  ds.source = "acceptance";
  std::mt19937 rng(3009);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (int i = 0; i < 64; ++i) {
    LabeledSample s;
    s.label = i % 5;
    s.poisoned = (i % 4) == 0;
    s.image = Image(3, 6, 6);
    for (auto& v : s.image.pixels) v = dist(rng);
    ds.samples.push_back(std::move(s));
  }

  const std::string bpath = (dir / "rt.battds").string();
  write_battds(ds, bpath);
  const Dataset back = read_battds(bpath);
  if (back.digest() != ds.digest() || back.num_classes != ds.num_classes ||
      back.split != ds.split)
    return {State::Fail, "battds round trip is not the identity"};
  for (size_t i = 0; i < ds.samples.size(); ++i)
    if (back.samples[i].poisoned != ds.samples[i].poisoned ||
        back.samples[i].label != ds.samples[i].label ||
        back.samples[i].image.pixels != ds.samples[i].image.pixels)
      return {State::Fail, "battds round trip altered a sample"};

  HyperParams hp;
  hp.epochs = 1;
  hp.lr_decay_epochs = {};
  hp.seed = 3;
  TrainedModel model = initialize_model(ArchSpec::convnet_s({3, 6, 6}, 5), hp);
  model.meta.dataset_digest = ds.digest();
  model.epoch_losses = {1.5};
  const std::string cpath = (dir / "rt.ckpt").string();
  save_checkpoint(model, cpath);
  const TrainedModel mback = load_checkpoint(cpath);
  if (mback.digest() != model.digest() ||
      mback.meta.dataset_digest != model.meta.dataset_digest)
    return {State::Fail, "checkpoint round trip is not the identity"};

  // corrupting any single byte must be detected
  for (const std::string& path : {bpath, cpath}) {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    bytes[bytes.size() / 3] ^= 0x10;
    const std::string corrupt = path + ".corrupt";
    std::ofstream out(corrupt, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    bool caught = false;
    try {
      if (path == bpath)
        read_battds(corrupt);
      else
        load_checkpoint(corrupt);
    } catch (const FormatError&) {
      caught = true;
    }
    fs::remove(corrupt);
    if (!caught)
      return {State::Fail, "a corrupted byte slipped past the checksum"};
  }
  return {State::Pass, "battds + checkpoint identity, corruption detected"};
}

}  // namespace

int main(int argc, char** argv) {
  Options opts;
  CLI::App app{"batt acceptance suite"};
  app.add_option("--workdir", opts.workdir, "artifact cache directory");
  app.add_option("--only", opts.only, "run a single criterion (1-9)");
  app.add_option("--threads", opts.threads, "worker threads");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(opts.workdir);
  Harness h(opts);

  h.criterion(1, "transform oracle suite", c1_transform_oracles);
  h.criterion(2, "poisoning determinism and cardinality",
              [&] { return c2_poison_determinism(opts); });
  h.criterion(3, "gradient fidelity", c3_gradient_fidelity);
  h.criterion(4, "desk-scale attack reproduction",
              [&] { return c4_desk_attack(opts); });
  h.criterion(5, "theta-sweep shape", [&] { return c5_theta_sweep(opts); });
  h.criterion(6, "trigger-magnitude ablation",
              [&] { return c6_trigger_magnitude(opts); });
  h.criterion(7, "target-label insensitivity",
              [&] { return c7_target_labels(opts); });
  h.criterion(8, "defense qualitative reproduction",
              [&] { return c8_defenses(opts); });
  h.criterion(9, "format round-trips", [&] { return c9_format_roundtrips(opts); });

  if (h.failures() > 0) {
    std::printf("%d criterion(s) failed\n", h.failures());
    return 1;
  }
  return 0;
}
