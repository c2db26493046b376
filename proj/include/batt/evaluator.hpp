#pragma once

#include "batt/poisoner.hpp"
#include "batt/trainer.hpp"

namespace batt {

struct EvalCounts {
  size_t ba_evaluated = 0;
  size_t ba_correct = 0;
  size_t asr_evaluated = 0;
  size_t asr_hits = 0;
};

struct SweepPoint {
  double theta = 0.0;
  double asr = 0.0;
  size_t n_evaluated = 0;
  size_t n_hits = 0;
};

struct EvalReport {
  double ba = 0.0;
  double asr = 0.0;
  EvalCounts counts;
  std::vector<SweepPoint> sweep;
  uint64_t config_digest = 0;
  uint64_t model_digest = 0;

  void validate() const;
};

// Fraction of clean, untransformed test samples predicted correctly.
double benign_accuracy(const TrainedModel& model, const Dataset& test,
                       int threads = 1);

// BA under the transformed-benign convention: each test image gets a random
// draw from the domain before prediction (sensitivity analysis only).
double benign_accuracy_transformed(const TrainedModel& model, const Dataset& test,
                                   const ParamDomain& domain, float fill,
                                   uint64_t seed, int threads = 1);

// Fraction of the triggered, target-class-excluded test set predicted as the
// target label.
double attack_success_rate(const TrainedModel& model, const Dataset& test,
                           const PoisonConfig& config, int threads = 1);

// ASR as a function of the inference-time parameter. The grid entry equal to
// the trained theta* reproduces attack_success_rate exactly (same code path).
std::vector<SweepPoint> theta_sweep(const TrainedModel& model, const Dataset& test,
                                    const PoisonConfig& config,
                                    const std::vector<double>& grid,
                                    int threads = 1);

// Rotation: -180..180 step 4; translation: -16..16 step 1.
std::vector<double> default_sweep_grid(TransformKind kind);

// Full report: BA, ASR at theta*, and the sweep over `grid`.
EvalReport evaluate(const TrainedModel& model, const Dataset& test,
                    const PoisonConfig& config, const std::vector<double>& grid,
                    int threads = 1);

// report JSON plus a sweep CSV (theta, asr, n_evaluated, n_hits).
void emit_report(const EvalReport& report, const std::string& json_path,
                 const std::string& csv_path);
EvalReport read_report(const std::string& json_path);

}  // namespace batt
