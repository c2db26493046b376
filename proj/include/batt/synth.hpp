#pragma once

#include <utility>

#include "batt/dataset.hpp"

namespace batt {

// Procedural 10-class single-channel dataset for desk-scale experiments.
// Classes are orientation constellations of soft bars on shared anchor
// points (rotation-confusable by construction), over a faint ripple texture
// that reveals the image's global orientation without hinting at the class.
struct SynthSpec {
  int num_classes = 10;
  int height = 28;
  int width = 28;
  size_t train_count = 10000;
  size_t test_count = 2000;
  uint64_t seed = 7;
  int bars_per_class = 7;
  double noise_sigma = 0.05;
  double texture_amplitude = 0.10;
};

std::pair<Dataset, Dataset> make_synthetic(const SynthSpec& spec);

// IDX export (big-endian magics 0x803/0x801, byte-quantized intensities).
// Single-channel datasets only.
void write_idx(const Dataset& dataset, const std::string& images_path,
               const std::string& labels_path);

}  // namespace batt
