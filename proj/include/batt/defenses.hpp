#pragma once

#include "batt/evaluator.hpp"

namespace batt {

struct DefensePoint {
  double parameter = 0.0;  // fine-tuning epoch or pruning rate
  double ba = 0.0;
  double asr = 0.0;
};

struct DefenseCurve {
  std::string kind;  // "fine_tune" or "prune"
  std::vector<DefensePoint> points;

  void validate() const;
};

// What a defended model is measured against.
struct EvalContext {
  const Dataset* clean_test = nullptr;
  PoisonConfig attack;
  int threads = 1;
};

// Continues training on a clean subset at 0.1x the original initial learning
// rate, recording (epoch, BA, ASR) after every epoch. Point 0 is the
// undefended model.
DefenseCurve fine_tune_defense(const TrainedModel& model,
                               const Dataset& benign_subset, int max_epochs,
                               const EvalContext& ctx);

// Conv channel identified by (layer index in the arch, channel index).
struct ChannelId {
  int layer = 0;
  int channel = 0;
  bool operator==(const ChannelId&) const = default;
};

// All conv channels ordered by mean absolute activation on the holdout,
// lowest first. Ranks are normalized within each layer so one rate applies
// network-wide.
std::vector<ChannelId> prune_order(const TrainedModel& model,
                                   const Dataset& benign_holdout,
                                   int threads = 1);

// Copy of the model with the given channels' filter weights zeroed (biases
// kept, so a fully masked layer emits only its biases).
TrainedModel apply_channel_mask(const TrainedModel& model,
                                const std::vector<ChannelId>& channels);

// For each rate, masks the lowest-ranked floor(rate * total) channels of the
// order computed once on the undefended model, and records (rate, BA, ASR).
DefenseCurve prune_defense(const TrainedModel& model,
                           const Dataset& benign_holdout,
                           const std::vector<double>& rates,
                           const EvalContext& ctx);

// CSV columns: kind, parameter, ba, asr.
void write_defense_csv(const DefenseCurve& curve, const std::string& path);

}  // namespace batt
