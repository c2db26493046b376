#include "batt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "batt/rng.hpp"

namespace batt {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTau = 2.0 * kPi;

// Class identity is an orientation constellation: every class places soft
// bars on the same shared anchor points, and class k+1 is class k with every
// bar advanced by one orientation step (180/K degrees). A faint axis-aligned
// ripple is shared by all classes, so images carry global orientation
// evidence that is useless for classification. Both choices mimic photos:
// classes that confuse each other under rotation, and scenes that reveal
// their own orientation.
struct Anchor {
  double cx, cy;
  double half_len;
  int base_slot;
};

std::vector<Anchor> make_anchors(const SynthSpec& spec) {
  RngStream stream(spec.seed, "anchors");
  const double mx = 0.25 * (spec.width - 1);
  const double my = 0.25 * (spec.height - 1);
  std::vector<Anchor> anchors(spec.bars_per_class);
  for (auto& a : anchors) {
    a.cx = stream.uniform_real(mx, (spec.width - 1) - mx);
    a.cy = stream.uniform_real(my, (spec.height - 1) - my);
    a.half_len = stream.uniform_real(0.135, 0.20) * spec.width;
    a.base_slot = static_cast<int>(stream.uniform_int(0, spec.num_classes - 1));
  }
  return anchors;
}

Image render(const SynthSpec& spec, const std::vector<Anchor>& anchors,
             int cls, RngStream& stream) {
  const double pjit_x = stream.uniform_real(-2.0, 2.0);
  const double pjit_y = stream.uniform_real(-2.0, 2.0);
  const double brightness = stream.uniform_real(0.85, 1.0);
  const double phase_c = stream.uniform_real(0.0, kTau);
  const double phase_r = stream.uniform_real(0.0, kTau);
  const double slot_step = 180.0 / spec.num_classes;

  Image img(1, spec.height, spec.width);
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c)
      img.at(0, r, c) = static_cast<float>(
          spec.texture_amplitude * 0.5 * (1.0 + std::sin(kTau * c / 5.5 + phase_c)) +
          spec.texture_amplitude * 0.5 * (1.0 + std::sin(kTau * r / 7.3 + phase_r)));

  for (const auto& a : anchors) {
    const int slot = (a.base_slot + cls) % spec.num_classes;
    const double phi =
        (slot_step * slot + stream.uniform_real(-3.0, 3.0)) * kPi / 180.0;
    const double amp = brightness * stream.uniform_real(0.55, 1.0);
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    const double inv_l2 = 1.0 / (2.0 * a.half_len * a.half_len);
    const double inv_w2 = 1.0 / (2.0 * 0.7 * 0.7);
    for (int r = 0; r < spec.height; ++r) {
      for (int c = 0; c < spec.width; ++c) {
        const double ox = c - (a.cx + pjit_x);
        const double oy = r - (a.cy + pjit_y);
        const double along = ox * cphi + oy * sphi;
        const double across = -ox * sphi + oy * cphi;
        img.at(0, r, c) += static_cast<float>(
            amp * std::exp(-(along * along * inv_l2 + across * across * inv_w2)));
      }
    }
  }

  for (auto& v : img.pixels)
    v = static_cast<float>(std::clamp(
        static_cast<double>(v) + spec.noise_sigma * stream.next_gaussian(), 0.0,
        1.0));
  return img;
}

Dataset make_split(const SynthSpec& spec, Split split, size_t count,
                   const std::vector<Anchor>& anchors) {
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.split = split;
  ds.source = "synthetic";
  ds.samples.resize(count);
  const char* tag = split == Split::Train ? "synth-train" : "synth-test";
  for (size_t i = 0; i < count; ++i) {
    RngStream stream(spec.seed, tag, i);
    const int cls = static_cast<int>(i % spec.num_classes);
    ds.samples[i].label = cls;
    ds.samples[i].image = render(spec, anchors, cls, stream);
  }
  return ds;
}

void write_be32(std::ofstream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::pair<Dataset, Dataset> make_synthetic(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ValidationError("synthetic: K < 2");
  if (spec.train_count < 1 || spec.test_count < 1)
    throw ValidationError("synthetic: empty split");
  if (spec.height < 12 || spec.width < 12)
    throw ValidationError("synthetic: image too small for the pattern layout");

  const std::vector<Anchor> anchors = make_anchors(spec);
  return {make_split(spec, Split::Train, spec.train_count, anchors),
          make_split(spec, Split::Test, spec.test_count, anchors)};
}

void write_idx(const Dataset& dataset, const std::string& images_path,
               const std::string& labels_path) {
  dataset.validate();
  const Image& first = dataset.samples.front().image;
  if (first.channels != 1)
    throw ValidationError("IDX export requires single-channel images");
  if (dataset.num_classes > 256)
    throw ValidationError("IDX labels are single bytes");

  std::ofstream imgs(images_path, std::ios::binary | std::ios::trunc);
  if (!imgs) throw IoError("cannot open " + images_path + " for writing");
  write_be32(imgs, 0x00000803u);
  write_be32(imgs, static_cast<uint32_t>(dataset.size()));
  write_be32(imgs, static_cast<uint32_t>(first.height));
  write_be32(imgs, static_cast<uint32_t>(first.width));
  std::vector<unsigned char> row(first.size());
  for (const auto& s : dataset.samples) {
    for (size_t j = 0; j < row.size(); ++j)
      row[j] = static_cast<unsigned char>(
          std::lround(std::clamp(s.image.pixels[j], 0.0f, 1.0f) * 255.0f));
    imgs.write(reinterpret_cast<const char*>(row.data()),
               static_cast<std::streamsize>(row.size()));
  }
  if (!imgs) throw IoError("short write on " + images_path);

  std::ofstream lbls(labels_path, std::ios::binary | std::ios::trunc);
  if (!lbls) throw IoError("cannot open " + labels_path + " for writing");
  write_be32(lbls, 0x00000801u);
  write_be32(lbls, static_cast<uint32_t>(dataset.size()));
  for (const auto& s : dataset.samples) {
    const auto b = static_cast<unsigned char>(s.label);
    lbls.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!lbls) throw IoError("short write on " + labels_path);
}

}  // namespace batt
