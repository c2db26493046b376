#include "batt/poisoner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "batt/parallel.hpp"

namespace batt {

std::vector<std::string> PoisonConfig::validate(size_t dataset_size,
                                                int num_classes) const {
  domain.validate();
  if (domain.kind != kind)
    throw ValidationError("poison config: domain kind does not match transform kind");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ConfigError("poison config: gamma must lie in (0,1)");
  if (target_label < 0 || target_label >= num_classes)
    throw ConfigError("poison config: target label out of range");
  if (poison_count(gamma, dataset_size) == 0)
    throw ConfigError("poison config: gamma*N rounds to zero poisoned samples");
  if (!(fill >= 0.0f && fill <= 1.0f))
    throw ConfigError("poison config: fill outside [0,1]");

  std::vector<std::string> warnings;
  if (theta_star >= domain.low && theta_star <= domain.high)
    warnings.push_back(
        "trigger parameter lies inside the benign domain; benign samples can "
        "activate the backdoor");
  return warnings;
}

std::string PoisonConfig::canonical_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{\"kind\":\"" << transform_kind_name(kind) << "\""
     << ",\"theta_star\":" << theta_star
     << ",\"domain\":[" << domain.low << "," << domain.high << "]"
     << ",\"gamma\":" << gamma
     << ",\"target_label\":" << target_label
     << ",\"seed\":" << seed
     << ",\"fill\":" << fill
     << ",\"exclude_target_class\":"
     << (exclude_target_class_from_selection ? "true" : "false") << "}";
  return os.str();
}

uint64_t PoisonConfig::digest() const { return fnv1a64(canonical_json()); }

size_t poison_count(double gamma, size_t n) {
  return static_cast<size_t>(std::floor(gamma * static_cast<double>(n) + 0.5));
}

std::vector<size_t> select_poison_indices(const Dataset& dataset,
                                          const PoisonConfig& config) {
  dataset.validate();
  config.validate(dataset.size(), dataset.num_classes);

  std::vector<size_t> pool;
  if (config.exclude_target_class_from_selection) {
    for (size_t i = 0; i < dataset.size(); ++i)
      if (dataset.samples[i].label != config.target_label) pool.push_back(i);
  } else {
    pool.resize(dataset.size());
    std::iota(pool.begin(), pool.end(), size_t{0});
  }

  size_t k = poison_count(config.gamma, dataset.size());
  if (k > pool.size())
    throw ConfigError("poison config: budget exceeds eligible sample count");

  // Partial Fisher-Yates driven by the "select" stream.
  RngStream stream(config.seed, "select");
  for (size_t i = 0; i < k; ++i) {
    const auto j = static_cast<size_t>(
        stream.uniform_int(static_cast<int64_t>(i),
                           static_cast<int64_t>(pool.size() - 1)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Dataset build_poisoned_dataset(const Dataset& dataset,
                               const PoisonConfig& config, int threads) {
  if (dataset.split != Split::Train)
    throw ValidationError("build_poisoned_dataset expects the train split");
  const std::vector<size_t> selected = select_poison_indices(dataset, config);

  std::vector<char> flagged(dataset.size(), 0);
  for (size_t i : selected) flagged[i] = 1;

  Dataset out;
  out.num_classes = dataset.num_classes;
  out.split = dataset.split;
  out.source = dataset.source + " [poisoned]";
  out.samples.resize(dataset.size());

  const TransformSpec trigger{config.kind, config.theta_star, config.fill};
  parallel_for(dataset.size(), threads, [&](size_t i) {
    const auto& src = dataset.samples[i];
    auto& dst = out.samples[i];
    if (flagged[i]) {
      dst.image = apply(trigger, src.image);
      dst.label = config.target_label;
      dst.poisoned = true;
    } else {
      // Benign parameter keyed by the sample's own index, so the output does
      // not depend on how samples are distributed over workers.
      RngStream stream(config.seed, "benign", i);
      const TransformSpec benign{config.kind,
                                 sample_param(config.domain, stream),
                                 config.fill};
      dst.image = apply(benign, src.image);
      dst.label = src.label;
      dst.poisoned = false;
    }
  });
  return out;
}

Dataset build_asr_test_set(const Dataset& test, const PoisonConfig& config,
                           int threads) {
  if (test.split != Split::Test)
    throw ValidationError("build_asr_test_set expects the test split");
  test.validate();

  std::vector<size_t> keep;
  for (size_t i = 0; i < test.size(); ++i)
    if (test.samples[i].label != config.target_label) keep.push_back(i);
  if (keep.empty())
    throw ConfigError(
        "ASR test set is empty: every test sample carries the target label");

  Dataset out;
  out.num_classes = test.num_classes;
  out.split = Split::Test;
  out.source = test.source + " [triggered]";
  out.samples.resize(keep.size());

  const TransformSpec trigger{config.kind, config.theta_star, config.fill};
  parallel_for(keep.size(), threads, [&](size_t i) {
    const auto& src = test.samples[keep[i]];
    auto& dst = out.samples[i];
    dst.image = apply(trigger, src.image);
    dst.label = src.label;  // evaluator compares predictions against y_t
    dst.poisoned = true;
  });
  return out;
}

}  // namespace batt
