#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "batt/poisoner.hpp"

using namespace batt;

namespace {

Dataset tiny_dataset(size_t n, int k, int h = 8, int w = 8,
                     Split split = Split::Train, uint32_t seed = 1) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Dataset ds;
  ds.num_classes = k;
  ds.split = split;
  ds.source = "unit-test";
  ds.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    ds.samples[i].label = static_cast<int>(i % k);
    ds.samples[i].image = Image(1, h, w);
    for (auto& v : ds.samples[i].image.pixels) v = dist(rng);
  }
  return ds;
}

PoisonConfig rotation_config(uint64_t seed = 1) {
  PoisonConfig cfg;
  cfg.kind = TransformKind::Rotation;
  cfg.theta_star = 16.0;
  cfg.domain = {TransformKind::Rotation, -10.0, 10.0};
  cfg.gamma = 0.05;
  cfg.target_label = 1;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("poisoner");

TEST_CASE("poison_count uses half-up rounding") {
  CHECK(poison_count(0.05, 50000) == 2500);
  CHECK(poison_count(0.05, 10) == 1);     // 0.5 rounds up
  CHECK(poison_count(0.04, 10) == 0);
  CHECK(poison_count(0.333, 3) == 1);
}

TEST_CASE("selection draws exactly round(gamma*N) distinct sorted indices") {
  const Dataset ds = tiny_dataset(50000, 10, 1, 1);
  const auto idx = select_poison_indices(ds, rotation_config());
  REQUIRE(idx.size() == 2500);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  CHECK(idx.back() < 50000);
}

TEST_CASE("selection is deterministic and seed-sensitive") {
  const Dataset ds = tiny_dataset(50000, 10, 1, 1);
  const auto a = select_poison_indices(ds, rotation_config(7));
  const auto b = select_poison_indices(ds, rotation_config(7));
  CHECK(a == b);

  // under a different seed the overlap sits near the hypergeometric
  // expectation 2500^2/50000 = 125 (sd ~ 10.6)
  const auto c = select_poison_indices(ds, rotation_config(8));
  std::set<size_t> sa(a.begin(), a.end());
  size_t overlap = 0;
  for (size_t i : c)
    if (sa.count(i)) ++overlap;
  CHECK(overlap > 125 - 64);
  CHECK(overlap < 125 + 64);
}

TEST_CASE("gamma rounding to the full set selects every index") {
  const Dataset ds = tiny_dataset(40, 4);
  PoisonConfig cfg = rotation_config();
  cfg.gamma = 0.999;  // round(39.96) = 40
  const auto idx = select_poison_indices(ds, cfg);
  REQUIRE(idx.size() == 40);
  for (size_t i = 0; i < 40; ++i) CHECK(idx[i] == i);
}

TEST_CASE("gamma rounding to zero is a config error") {
  const Dataset ds = tiny_dataset(40, 4);
  PoisonConfig cfg = rotation_config();
  cfg.gamma = 0.001;
  CHECK_THROWS_AS(select_poison_indices(ds, cfg), ConfigError);
}

TEST_CASE("selection can exclude the target class behind the knob") {
  const Dataset ds = tiny_dataset(1000, 10);
  PoisonConfig cfg = rotation_config();
  cfg.exclude_target_class_from_selection = true;
  for (size_t i : select_poison_indices(ds, cfg))
    CHECK(ds.samples[i].label != cfg.target_label);
}

TEST_CASE("poisoned dataset relabels flagged samples and keeps the rest") {
  const Dataset ds = tiny_dataset(200, 10);
  const PoisonConfig cfg = rotation_config();
  const Dataset poisoned = build_poisoned_dataset(ds, cfg);

  REQUIRE(poisoned.size() == ds.size());
  size_t flagged = 0;
  for (size_t i = 0; i < poisoned.size(); ++i) {
    const auto& s = poisoned.samples[i];
    if (s.poisoned) {
      ++flagged;
      CHECK(s.label == cfg.target_label);
    } else {
      CHECK(s.label == ds.samples[i].label);
    }
  }
  CHECK(flagged == poison_count(cfg.gamma, ds.size()));
}

TEST_CASE("gamma at 1/N poisons exactly one sample") {
  const Dataset ds = tiny_dataset(100, 10);
  PoisonConfig cfg = rotation_config();
  cfg.gamma = 0.01;
  const Dataset poisoned = build_poisoned_dataset(ds, cfg);
  size_t flagged = 0;
  for (const auto& s : poisoned.samples)
    if (s.poisoned) ++flagged;
  CHECK(flagged == 1);
}

TEST_CASE("identity translation domain leaves unflagged images bitwise intact") {
  const Dataset ds = tiny_dataset(60, 6);
  PoisonConfig cfg;
  cfg.kind = TransformKind::Translation;
  cfg.theta_star = 6.0;
  cfg.domain = {TransformKind::Translation, 0.0, 0.0};
  cfg.gamma = 0.05;
  cfg.target_label = 1;
  cfg.seed = 3;
  const Dataset poisoned = build_poisoned_dataset(ds, cfg);
  for (size_t i = 0; i < poisoned.size(); ++i)
    if (!poisoned.samples[i].poisoned)
      CHECK(poisoned.samples[i].image.pixels == ds.samples[i].image.pixels);
}

TEST_CASE("poisoning is byte-identical across runs and thread counts") {
  const Dataset ds = tiny_dataset(500, 10);
  const PoisonConfig cfg = rotation_config(11);
  const uint64_t once = build_poisoned_dataset(ds, cfg, 1).digest();
  CHECK(build_poisoned_dataset(ds, cfg, 1).digest() == once);
  CHECK(build_poisoned_dataset(ds, cfg, 2).digest() == once);
  CHECK(build_poisoned_dataset(ds, cfg, 5).digest() == once);
}

TEST_CASE("poisoning requires the train split") {
  const Dataset ds = tiny_dataset(50, 5, 8, 8, Split::Test);
  CHECK_THROWS_AS(build_poisoned_dataset(ds, rotation_config()),
                  ValidationError);
}

TEST_CASE("theta* inside the benign domain draws a warning, not an error") {
  const Dataset ds = tiny_dataset(100, 10);
  PoisonConfig cfg = rotation_config();
  cfg.theta_star = 4.0;  // inside [-10, 10]
  const auto warnings = cfg.validate(ds.size(), ds.num_classes);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("inside the benign domain") != std::string::npos);
  CHECK(rotation_config().validate(ds.size(), ds.num_classes).empty());
}

TEST_CASE("asr test set drops the target class and triggers the rest") {
  Dataset test = tiny_dataset(100, 10, 8, 8, Split::Test);
  const PoisonConfig cfg = rotation_config();
  const Dataset asr = build_asr_test_set(test, cfg);

  CHECK(asr.size() == 90);  // 10 of 100 carried the target label
  size_t j = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    if (test.samples[i].label == cfg.target_label) continue;
    CHECK(asr.samples[j].label == test.samples[i].label);
    CHECK(asr.samples[j].poisoned);
    const Image want = apply({cfg.kind, cfg.theta_star, cfg.fill},
                             test.samples[i].image);
    CHECK(asr.samples[j].image.pixels == want.pixels);
    ++j;
  }
}

TEST_CASE("asr construction with translation zero only filters") {
  Dataset test = tiny_dataset(50, 5, 8, 8, Split::Test);
  PoisonConfig cfg;
  cfg.kind = TransformKind::Translation;
  cfg.theta_star = 0.0;
  cfg.domain = {TransformKind::Translation, -3.0, 3.0};
  cfg.target_label = 2;
  cfg.seed = 1;
  const Dataset asr = build_asr_test_set(test, cfg);
  CHECK(asr.size() == 40);
  size_t j = 0;
  for (size_t i = 0; i < test.size(); ++i) {
    if (test.samples[i].label == 2) continue;
    CHECK(asr.samples[j].image.pixels == test.samples[i].image.pixels);
    ++j;
  }
}

TEST_CASE("asr construction fails when every sample is the target class") {
  Dataset test = tiny_dataset(20, 2, 8, 8, Split::Test);
  for (auto& s : test.samples) s.label = 1;
  CHECK_THROWS_AS(build_asr_test_set(test, rotation_config()), ConfigError);
}

TEST_SUITE_END();
