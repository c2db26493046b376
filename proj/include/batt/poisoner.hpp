#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "batt/dataset.hpp"
#include "batt/transforms.hpp"

namespace batt {

// The attack specification: which transform triggers the backdoor, the
// trigger parameter, the benign parameter domain, how much of the training
// set is relabeled, and the target class.
struct PoisonConfig {
  TransformKind kind = TransformKind::Rotation;
  double theta_star = 16.0;
  ParamDomain domain{TransformKind::Rotation, -10.0, 10.0};
  double gamma = 0.05;
  int target_label = 1;
  uint64_t seed = 0;
  float fill = 0.0f;
  bool exclude_target_class_from_selection = false;

  // Checks invariants against a dataset size; returns human-readable
  // warnings for legal-but-suspicious settings (theta* inside the benign
  // domain defeats the trigger's exclusivity).
  std::vector<std::string> validate(size_t dataset_size, int num_classes) const;

  // Stable digest over every field, used to stamp output artifacts.
  uint64_t digest() const;

  std::string canonical_json() const;
};

// Half-up rounding of gamma * N, the poisoned-sample budget.
size_t poison_count(double gamma, size_t n);

// Uniform draw of round(gamma*N) distinct sample indices, sorted ascending.
// Pure function of (dataset size, config seed).
std::vector<size_t> select_poison_indices(const Dataset& dataset,
                                          const PoisonConfig& config);

// D_p: selected samples get the trigger transform and the target label,
// every other sample gets a random benign transform with its label kept.
// Order preserved; byte-identical across runs and thread counts.
Dataset build_poisoned_dataset(const Dataset& dataset,
                               const PoisonConfig& config, int threads = 1);

// Triggered test set for ASR: drop target-class samples, apply the trigger
// transform to the rest, keep ground-truth labels.
Dataset build_asr_test_set(const Dataset& test, const PoisonConfig& config,
                           int threads = 1);

}  // namespace batt
