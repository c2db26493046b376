#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "batt/experiment.hpp"

namespace {

// 0 ok, 2 config/path, 3 training, 4 evaluation, 5 partial ablation failure
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitEval = 4;
constexpr int kExitPartial = 5;

struct CommonArgs {
  std::string config_path;
  int threads = 1;
  uint64_t seed = 0;
  bool seed_set = false;
  bool verify_after = false;
};

batt::ExperimentConfig load_config(const CommonArgs& args) {
  auto cfg = batt::ExperimentConfig::from_json_file(args.config_path);
  if (args.seed_set) {
    cfg.attack.seed = args.seed;
    cfg.train.hp.seed = args.seed;
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config JSON")
      ->required();
  cmd->add_option("--threads", args.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", args.seed, "override attack and training seeds")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_flag("--verify", args.verify_after,
                "re-check all artifact checksums in the output dir afterwards");
}

// Post-run artifact verification for the --verify flag.
int verify_outputs(const batt::ExperimentConfig& cfg) {
  bool all_ok = true;
  for (const auto& e : batt::run_verify(cfg.output_dir)) {
    std::printf("%s  %s  (%s)\n", e.ok ? "ok  " : "FAIL", e.path.c_str(),
                e.detail.c_str());
    all_ok = all_ok && e.ok;
  }
  return all_ok ? kExitOk : kExitConfig;
}

int classify_error(const std::exception& e) {
  if (dynamic_cast<const batt::TrainingError*>(&e)) return kExitTraining;
  if (dynamic_cast<const batt::EvalError*>(&e)) return kExitEval;
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BATT: transformation-triggered data poisoning toolkit"};
  app.require_subcommand(1);

  CommonArgs poison_args, train_args, eval_args, ablate_args, defend_args;
  std::string train_input, eval_ckpt, defend_ckpt, ablate_axis, verify_path;

  auto* poison = app.add_subcommand(
      "poison", "build a poisoned training set and write it as BATTDS");
  add_common(poison, poison_args);

  auto* train = app.add_subcommand(
      "train", "train the classifier on a poisoned BATTDS file");
  add_common(train, train_args);
  train->add_option("--input", train_input,
                    "BATTDS file (default: <output_dir>/poisoned.battds)");

  auto* eval = app.add_subcommand(
      "eval", "compute benign accuracy, attack success rate and the sweep");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt,
                   "model checkpoint (default: <output_dir>/model.ckpt)");

  auto* ablate = app.add_subcommand(
      "ablate", "loop poison/train/eval over an ablation axis");
  add_common(ablate, ablate_args);
  ablate->add_option("--axis", ablate_axis, "theta_star or target_label")
      ->required();

  auto* defend = app.add_subcommand(
      "defend", "run the configured fine-tuning / pruning defenses");
  add_common(defend, defend_args);
  defend->add_option("--checkpoint", defend_ckpt,
                     "model checkpoint (default: <output_dir>/model.ckpt)");

  auto* verify = app.add_subcommand(
      "verify", "re-check checksums and digests of produced artifacts");
  verify->add_option("path", verify_path, "output directory or single artifact")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (poison->parsed()) {
      const auto cfg = load_config(poison_args);
      const auto r = batt::run_poison(cfg, poison_args.threads);
      std::printf("poisoned %zu of %zu samples\n", r.poisoned, r.total);
      std::printf("wrote %s (dataset digest %s)\n", r.battds_path.c_str(),
                  batt::to_hex(r.dataset_digest).c_str());
      std::printf("wrote %s\n", r.manifest_path.c_str());
      if (poison_args.verify_after) return verify_outputs(cfg);
    } else if (train->parsed()) {
      const auto cfg = load_config(train_args);
      const auto r = batt::run_train(cfg, train_input, train_args.threads);
      std::printf("final train loss %.6f\n", r.final_loss);
      std::printf("wrote %s (model digest %s)\n", r.checkpoint_path.c_str(),
                  batt::to_hex(r.model_digest).c_str());
      std::printf("wrote %s\n", r.log_path.c_str());
      if (train_args.verify_after) return verify_outputs(cfg);
    } else if (eval->parsed()) {
      const auto cfg = load_config(eval_args);
      const auto r = batt::run_eval(cfg, eval_ckpt, eval_args.threads);
      std::printf("ba  %.4f (%zu/%zu)\n", r.report.ba,
                  r.report.counts.ba_correct, r.report.counts.ba_evaluated);
      std::printf("asr %.4f (%zu/%zu)\n", r.report.asr,
                  r.report.counts.asr_hits, r.report.counts.asr_evaluated);
      std::printf("wrote %s\nwrote %s\n", r.report_path.c_str(),
                  r.sweep_csv_path.c_str());
      if (eval_args.verify_after) return verify_outputs(cfg);
    } else if (ablate->parsed()) {
      const auto cfg = load_config(ablate_args);
      const auto r = batt::run_ablate(cfg, ablate_axis, ablate_args.threads);
      for (const auto& row : r.rows) {
        if (row.failed)
          std::printf("%s=%g  FAILED: %s\n", ablate_axis.c_str(),
                      row.axis_value, row.error.c_str());
        else
          std::printf("%s=%g  ba %.4f  asr %.4f\n", ablate_axis.c_str(),
                      row.axis_value, row.ba, row.asr);
      }
      std::printf("wrote %s\n", r.csv_path.c_str());
      if (r.any_failed) return kExitPartial;
      if (ablate_args.verify_after) return verify_outputs(cfg);
    } else if (defend->parsed()) {
      const auto cfg = load_config(defend_args);
      const auto r = batt::run_defend(cfg, defend_ckpt, defend_args.threads);
      for (const auto& path : r.csv_paths) std::printf("wrote %s\n", path.c_str());
      if (defend_args.verify_after) return verify_outputs(cfg);
    } else if (verify->parsed()) {
      const auto entries = batt::run_verify(verify_path);
      bool all_ok = true;
      for (const auto& e : entries) {
        std::printf("%s  %s  (%s)\n", e.ok ? "ok  " : "FAIL", e.path.c_str(),
                    e.detail.c_str());
        all_ok = all_ok && e.ok;
      }
      if (entries.empty()) std::printf("no recognized artifacts found\n");
      if (!all_ok) return kExitConfig;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return classify_error(e);
  }
  return kExitOk;
}
