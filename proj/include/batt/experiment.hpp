#pragma once

#include <optional>

#include "batt/defenses.hpp"
#include "batt/evaluator.hpp"
#include "batt/synth.hpp"

namespace batt {

struct DatasetSection {
  std::string format;  // cifar10 | idx | battds | image_dir | synthetic
  std::string dir;
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_path, test_path;
  std::string train_manifest, test_manifest;
  std::optional<int> num_classes;
  std::optional<Shape3> resize;
  SynthSpec synthetic;
};

struct TrainSection {
  std::string arch = "convnet-s";
  HyperParams hp;
};

struct EvalSection {
  std::optional<std::vector<double>> grid;  // default grid per kind when unset
  bool transformed_ba = false;
};

struct FineTuneSection {
  int epochs = 30;
  double subset_fraction = 0.05;
};

struct PruneSection {
  std::vector<double> rates = {0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95};
  double holdout_fraction = 0.05;
};

struct DefenseSection {
  std::optional<FineTuneSection> fine_tune;
  std::optional<PruneSection> prune;
};

struct ExperimentConfig {
  DatasetSection dataset;
  PoisonConfig attack;
  TrainSection train;
  EvalSection eval;
  DefenseSection defense;
  std::vector<double> ablate_theta_star;
  std::vector<int> ablate_target_label;
  std::string output_dir = "out";

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  uint64_t digest() const;
};

// Clean train/test pair per the dataset section, with the optional channel
// replication + resize applied.
std::pair<Dataset, Dataset> load_experiment_data(const DatasetSection& section);

struct PoisonResult {
  std::string battds_path;
  std::string manifest_path;
  size_t poisoned = 0;
  size_t total = 0;
  uint64_t dataset_digest = 0;
};
PoisonResult run_poison(const ExperimentConfig& cfg, int threads = 1);

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  double final_loss = 0.0;
  uint64_t model_digest = 0;
};
TrainResult run_train(const ExperimentConfig& cfg,
                      const std::string& battds_path = "", int threads = 1);

struct EvalResult {
  std::string report_path;
  std::string sweep_csv_path;
  EvalReport report;
};
EvalResult run_eval(const ExperimentConfig& cfg,
                    const std::string& checkpoint_path = "", int threads = 1);

struct AblateRow {
  double axis_value = 0.0;
  double ba = 0.0;
  double asr = 0.0;
  bool failed = false;
  std::string error;
};
struct AblateResult {
  std::string csv_path;
  std::vector<AblateRow> rows;
  bool any_failed = false;
};
AblateResult run_ablate(const ExperimentConfig& cfg, const std::string& axis,
                        int threads = 1);

struct DefendResult {
  std::vector<std::string> csv_paths;
  std::vector<DefenseCurve> curves;
};
DefendResult run_defend(const ExperimentConfig& cfg,
                        const std::string& checkpoint_path = "",
                        int threads = 1);

struct VerifyEntry {
  std::string path;
  bool ok = false;
  std::string detail;
};
// Re-checks the checksums/digests of every recognized artifact under the
// directory (BATTDS files, manifests, checkpoints, report JSON).
std::vector<VerifyEntry> run_verify(const std::string& directory);

}  // namespace batt
