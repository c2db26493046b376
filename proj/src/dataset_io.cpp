#include "batt/dataset_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "batt/transforms.hpp"

namespace batt {

namespace {

std::vector<unsigned char> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto n = static_cast<size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> bytes(n);
  if (n > 0) in.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!in) throw IoError("short read on " + path);
  return bytes;
}

uint32_t read_be32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
         (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

constexpr size_t kCifarRecordBytes = 3073;
constexpr int kCifarDim = 32;

Dataset parse_cifar_records(const std::vector<unsigned char>& bytes,
                            const std::string& path, Split split) {
  if (bytes.size() % kCifarRecordBytes != 0)
    throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of the 3073-byte record");
  const size_t n = bytes.size() / kCifarRecordBytes;
  Dataset out;
  out.num_classes = 10;
  out.split = split;
  out.source = path;
  out.samples.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] > 9)
      throw FormatError(path + ": corrupt record " + std::to_string(i) +
                        " (label byte " + std::to_string(rec[0]) + ")");
    LabeledSample s;
    s.label = rec[0];
    s.image = Image(3, kCifarDim, kCifarDim);
    for (size_t j = 0; j < 3072; ++j)
      s.image.pixels[j] = static_cast<float>(rec[1 + j]) / 255.0f;
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Dataset load_cifar10_file(const std::string& path, Split split) {
  auto bytes = read_all_bytes(path);
  constexpr size_t kBatchBytes = 10000 * kCifarRecordBytes;
  if (bytes.size() != kBatchBytes)
    throw FormatError(path + ": expected " + std::to_string(kBatchBytes) +
                      " bytes, found " + std::to_string(bytes.size()));
  return parse_cifar_records(bytes, path, split);
}

std::pair<Dataset, Dataset> load_cifar10_binary(const std::string& directory) {
  Dataset train;
  for (int b = 1; b <= 5; ++b) {
    const std::string path =
        directory + "/data_batch_" + std::to_string(b) + ".bin";
    Dataset part = load_cifar10_file(path, Split::Train);
    if (train.samples.empty()) {
      train = std::move(part);
    } else {
      train.samples.insert(train.samples.end(),
                           std::make_move_iterator(part.samples.begin()),
                           std::make_move_iterator(part.samples.end()));
    }
  }
  train.source = directory;
  Dataset test = load_cifar10_file(directory + "/test_batch.bin", Split::Test);
  return {std::move(train), std::move(test)};
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 Split split, std::optional<int> num_classes) {
  auto img_bytes = read_all_bytes(images_path);
  auto lbl_bytes = read_all_bytes(labels_path);

  if (img_bytes.size() < 16 || read_be32(img_bytes.data()) != 0x00000803u)
    throw FormatError(images_path + ": bad IDX image magic");
  if (lbl_bytes.size() < 8 || read_be32(lbl_bytes.data()) != 0x00000801u)
    throw FormatError(labels_path + ": bad IDX label magic");

  const uint32_t n = read_be32(img_bytes.data() + 4);
  const uint32_t h = read_be32(img_bytes.data() + 8);
  const uint32_t w = read_be32(img_bytes.data() + 12);
  const uint32_t n_labels = read_be32(lbl_bytes.data() + 4);
  if (n != n_labels)
    throw FormatError("IDX count mismatch: " + std::to_string(n) +
                      " images vs " + std::to_string(n_labels) + " labels");
  if (img_bytes.size() != 16 + static_cast<size_t>(n) * h * w)
    throw FormatError(images_path + ": expected " +
                      std::to_string(16 + static_cast<size_t>(n) * h * w) +
                      " bytes, found " + std::to_string(img_bytes.size()));
  if (lbl_bytes.size() != 8 + static_cast<size_t>(n))
    throw FormatError(labels_path + ": expected " +
                      std::to_string(8 + static_cast<size_t>(n)) +
                      " bytes, found " + std::to_string(lbl_bytes.size()));

  Dataset out;
  out.split = split;
  out.source = images_path;
  out.samples.reserve(n);
  int max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    LabeledSample s;
    s.label = lbl_bytes[8 + i];
    max_label = std::max(max_label, s.label);
    s.image = Image(1, static_cast<int>(h), static_cast<int>(w));
    const unsigned char* px = img_bytes.data() + 16 + static_cast<size_t>(i) * h * w;
    for (size_t j = 0; j < static_cast<size_t>(h) * w; ++j)
      s.image.pixels[j] = static_cast<float>(px[j]) / 255.0f;
    out.samples.push_back(std::move(s));
  }
  out.num_classes = num_classes.value_or(max_label + 1);
  out.validate();
  return out;
}

namespace {

constexpr unsigned char kBattdsMagic[4] = {0x42, 0x41, 0x54, 0x54};  // "BATT"
constexpr uint32_t kBattdsVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <typename T>
T take(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

void write_battds(const Dataset& dataset, const std::string& path) {
  dataset.validate();
  const Image& first = dataset.samples.front().image;

  std::string buf;
  buf.reserve(32 + dataset.samples.size() * (3 + first.size() * 4));
  buf.append(reinterpret_cast<const char*>(kBattdsMagic), 4);
  put<uint32_t>(buf, kBattdsVersion);
  put<uint32_t>(buf, static_cast<uint32_t>(dataset.samples.size()));
  put<uint32_t>(buf, static_cast<uint32_t>(first.channels));
  put<uint32_t>(buf, static_cast<uint32_t>(first.height));
  put<uint32_t>(buf, static_cast<uint32_t>(first.width));
  put<uint32_t>(buf, static_cast<uint32_t>(dataset.num_classes));
  put<uint8_t>(buf, static_cast<uint8_t>(dataset.split));
  for (const auto& s : dataset.samples) {
    put<uint16_t>(buf, static_cast<uint16_t>(s.label));
    put<uint8_t>(buf, s.poisoned ? 1 : 0);
    buf.append(reinterpret_cast<const char*>(s.image.pixels.data()),
               s.image.pixels.size() * sizeof(float));
  }
  put<uint64_t>(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write on " + path);
}

Dataset read_battds(const std::string& path) {
  auto bytes = read_all_bytes(path);
  if (bytes.size() < 29 + 8)
    throw FormatError(path + ": truncated BATTDS header");
  if (std::memcmp(bytes.data(), kBattdsMagic, 4) != 0)
    throw FormatError(path + ": bad BATTDS magic");
  const auto version = take<uint32_t>(bytes.data() + 4);
  if (version != kBattdsVersion)
    throw FormatError(path + ": unsupported BATTDS version " +
                      std::to_string(version));
  const auto n = take<uint32_t>(bytes.data() + 8);
  const auto c = take<uint32_t>(bytes.data() + 12);
  const auto h = take<uint32_t>(bytes.data() + 16);
  const auto w = take<uint32_t>(bytes.data() + 20);
  const auto k = take<uint32_t>(bytes.data() + 24);
  const auto split_tag = bytes[28];
  if (split_tag > 1)
    throw FormatError(path + ": bad split tag");

  const size_t image_bytes = static_cast<size_t>(c) * h * w * sizeof(float);
  const size_t expected = 29 + static_cast<size_t>(n) * (3 + image_bytes) + 8;
  if (bytes.size() != expected)
    throw FormatError(path + ": expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));

  const uint64_t stored = take<uint64_t>(bytes.data() + bytes.size() - 8);
  const uint64_t computed = fnv1a64(bytes.data(), bytes.size() - 8);
  if (stored != computed)
    throw FormatError(path + ": checksum mismatch (file corrupt)");

  Dataset out;
  out.num_classes = static_cast<int>(k);
  out.split = static_cast<Split>(split_tag);
  out.source = path;
  out.samples.resize(n);
  const unsigned char* p = bytes.data() + 29;
  for (uint32_t i = 0; i < n; ++i) {
    auto& s = out.samples[i];
    s.label = take<uint16_t>(p);
    s.poisoned = p[2] != 0;
    p += 3;
    s.image = Image(static_cast<int>(c), static_cast<int>(h),
                    static_cast<int>(w));
    std::memcpy(s.image.pixels.data(), p, image_bytes);
    p += image_bytes;
  }
  out.validate();
  return out;
}

std::string manifest_path_for(const std::string& battds_path) {
  std::filesystem::path p(battds_path);
  p.replace_extension();
  return p.string() + ".manifest.json";
}

namespace {

// Minimal PNM decoder (P2/P3 ASCII, P5/P6 binary), 8-bit maxval.
Image decode_pnm(const std::string& path) {
  auto bytes = read_all_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw FormatError(path + ": not a PNM image");
  const char type = static_cast<char>(bytes[1]);
  if (type != '2' && type != '3' && type != '5' && type != '6')
    throw FormatError(path + ": unsupported PNM type P" + std::string(1, type));

  size_t pos = 2;
  auto next_token = [&]() -> long {
    // Skip whitespace and '#' comments between header tokens.
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw FormatError(path + ": malformed PNM header");
    return v;
  };

  const long w = next_token();
  const long h = next_token();
  const long maxval = next_token();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw FormatError(path + ": unsupported PNM geometry");

  const int channels = (type == '3' || type == '6') ? 3 : 1;
  const size_t count = static_cast<size_t>(w) * h * channels;
  std::vector<float> interleaved(count);

  if (type == '5' || type == '6') {
    ++pos;  // single whitespace byte after maxval
    if (bytes.size() - pos < count)
      throw FormatError(path + ": truncated PNM payload");
    for (size_t i = 0; i < count; ++i)
      interleaved[i] = static_cast<float>(bytes[pos + i]) / maxval;
  } else {
    for (size_t i = 0; i < count; ++i)
      interleaved[i] = static_cast<float>(next_token()) / maxval;
  }

  // Interleaved HWC -> planar CHW.
  Image img(channels, static_cast<int>(h), static_cast<int>(w));
  for (int r = 0; r < img.height; ++r)
    for (int col = 0; col < img.width; ++col)
      for (int ch = 0; ch < channels; ++ch)
        img.at(ch, r, col) =
            interleaved[(static_cast<size_t>(r) * w + col) * channels + ch];
  return img;
}

Image to_three_channels(const Image& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1)
    throw FormatError("expected 1 or 3 channels, found " +
                      std::to_string(img.channels));
  Image out(3, img.height, img.width);
  for (int ch = 0; ch < 3; ++ch)
    std::copy(img.pixels.begin(), img.pixels.end(),
              out.pixels.begin() + static_cast<size_t>(ch) * img.height * img.width);
  return out;
}

}  // namespace

Dataset load_image_dir(const std::string& directory,
                       const std::string& manifest_csv, Split split,
                       int num_classes, int target_h, int target_w) {
  std::ifstream manifest(manifest_csv);
  if (!manifest) throw IoError("cannot open manifest " + manifest_csv);

  Dataset out;
  out.num_classes = num_classes;
  out.split = split;
  out.source = directory;

  std::vector<std::string> errors;
  std::string line;
  size_t row = 0;
  while (std::getline(manifest, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      errors.push_back("row " + std::to_string(row) + ": missing comma");
      continue;
    }
    const std::string rel = line.substr(0, comma);
    int label = -1;
    try {
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      errors.push_back("row " + std::to_string(row) + ": bad label field");
      continue;
    }
    if (label < 0 || label >= num_classes) {
      errors.push_back("row " + std::to_string(row) + ": label " +
                       std::to_string(label) + " >= K");
      continue;
    }
    const std::string path = directory + "/" + rel;
    try {
      LabeledSample s;
      s.label = label;
      s.image = resize(to_three_channels(decode_pnm(path)), target_h, target_w);
      out.samples.push_back(std::move(s));
    } catch (const Error& e) {
      errors.push_back("row " + std::to_string(row) + " (" + rel + "): " +
                       e.what());
    }
  }

  if (!errors.empty()) {
    std::ostringstream msg;
    msg << manifest_csv << ": " << errors.size() << " row(s) failed:";
    for (const auto& e : errors) msg << "\n  " << e;
    throw FormatError(msg.str());
  }
  out.validate();
  return out;
}

}  // namespace batt
