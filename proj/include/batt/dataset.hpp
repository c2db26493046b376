#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "batt/checksum.hpp"
#include "batt/image.hpp"

namespace batt {

enum class Split : uint8_t { Train = 0, Test = 1 };

struct LabeledSample {
  Image image;
  int label = 0;
  bool poisoned = false;
};

// Ordered labeled samples with a shared shape. Freshly ingested datasets have
// every poison flag false; the poisoner sets them.
struct Dataset {
  std::vector<LabeledSample> samples;
  int num_classes = 0;
  Split split = Split::Train;
  std::string source;

  size_t size() const { return samples.size(); }

  void validate() const {
    if (samples.empty()) throw ValidationError("dataset: empty");
    if (num_classes < 1) throw ValidationError("dataset: num_classes < 1");
    const Image& first = samples.front().image;
    for (size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (!s.image.same_shape(first))
        throw ValidationError("dataset: sample " + std::to_string(i) +
                              " has a different shape");
      if (s.label < 0 || s.label >= num_classes)
        throw ValidationError("dataset: sample " + std::to_string(i) +
                              " label out of range");
    }
  }

  // Order-sensitive digest over shape, labels, flags and pixel bytes.
  uint64_t digest() const {
    Fnv1a64 h;
    const int32_t meta[3] = {num_classes, static_cast<int32_t>(split),
                             static_cast<int32_t>(samples.size())};
    h.update(meta, sizeof meta);
    for (const auto& s : samples) {
      const int32_t head[5] = {s.image.channels, s.image.height, s.image.width,
                               s.label, s.poisoned ? 1 : 0};
      h.update(head, sizeof head);
      h.update(s.image.pixels.data(), s.image.pixels.size() * sizeof(float));
    }
    return h.value();
  }
};

}  // namespace batt
